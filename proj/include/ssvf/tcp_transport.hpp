#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ssvf/error.hpp"
#include "ssvf/transport.hpp"
#include "ssvf/wire.hpp"

namespace ssvf {

struct PeerAddress {
    AgentId id = 0;
    std::string host;
    std::uint16_t port = 0;

    friend bool operator==(const PeerAddress&, const PeerAddress&) = default;
};

/// Parses "id host port" lines; '#' starts a comment. Ids must be 0..n-1.
inline std::vector<PeerAddress> parse_address_table(std::istream& in) {
    std::vector<PeerAddress> table;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        PeerAddress a;
        unsigned long id = 0;
        unsigned long port = 0;
        try {
            id = std::stoul(first);
        } catch (const std::exception&) {
            throw ParseError(row, "bad agent id '" + first + "'");
        }
        if (!(ls >> a.host >> port) || port == 0 || port > 65535 || id >= kAllAgents) {
            throw ParseError(row, "expected '<id> <host> <port>'");
        }
        a.id = static_cast<AgentId>(id);
        a.port = static_cast<std::uint16_t>(port);
        table.push_back(a);
    }
    std::sort(table.begin(), table.end(), [](auto& x, auto& y) { return x.id < y.id; });
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].id != i) throw IoError("address table ids must be 0.." + std::to_string(table.size() - 1));
    }
    return table;
}

inline std::vector<PeerAddress> load_address_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open address table " + path);
    return parse_address_table(in);
}

inline void write_address_table(const std::string& path, const std::vector<PeerAddress>& table) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write address table " + path);
    for (const auto& a : table) out << a.id << ' ' << a.host << ' ' << a.port << '\n';
}

/// Asks the kernel for `count` free loopback ports. The ports are released
/// before returning, so a concurrent process could in principle grab one.
inline std::vector<std::uint16_t> pick_free_ports(std::size_t count) {
    std::vector<int> fds;
    std::vector<std::uint16_t> ports;
    for (std::size_t i = 0; i < count; ++i) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        socklen_t len = sizeof addr;
        if (fd < 0 || ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
            ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
            if (fd >= 0) ::close(fd);
            for (int f : fds) ::close(f);
            throw TransportError("cannot reserve a loopback port");
        }
        fds.push_back(fd);
        ports.push_back(ntohs(addr.sin_port));
    }
    for (int f : fds) ::close(f);
    return ports;
}

struct TcpOptions {
    std::chrono::milliseconds connect_timeout{30000};
    std::chrono::milliseconds barrier_timeout{30000};
    std::size_t flush_threshold = 1U << 16U;
};

/// Full-mesh TCP endpoint for one agent process. Agent i dials every lower
/// id and accepts every higher id; each stream carries length-prefixed
/// envelopes. Barriers are marker messages on the same streams, so FIFO
/// order guarantees that everything sent before a peer's marker has arrived
/// once that marker is seen.
class TcpEndpoint final : public Endpoint {
public:
    TcpEndpoint(AgentId self, std::vector<PeerAddress> table, TcpOptions options = {})
        : self_(self), table_(std::move(table)), options_(options), fds_(table_.size(), -1),
          out_(table_.size()) {
        if (self_ >= table_.size()) throw ConfigError("agent id outside the address table");
        connect_mesh();
        reader_ = std::thread([this] { read_loop(); });
    }

    TcpEndpoint(const TcpEndpoint&) = delete;
    TcpEndpoint& operator=(const TcpEndpoint&) = delete;

    ~TcpEndpoint() override {
        try {
            flush_all();
        } catch (...) {
        }
        stop_ = true;
        for (int fd : fds_) {
            if (fd >= 0) ::shutdown(fd, SHUT_WR);
        }
        if (reader_.joinable()) reader_.join();
        for (int fd : fds_) {
            if (fd >= 0) ::close(fd);
        }
    }

    AgentId id() const override { return self_; }
    std::size_t agents() const override { return table_.size(); }

    void send(const RoundMessage& msg) override {
        if (msg.receiver == kAllAgents) {
            broadcast(msg);
            return;
        }
        check_sender(msg);
        if (msg.receiver >= table_.size() || msg.receiver == self_) {
            throw RoutingError("unknown receiver " + std::to_string(msg.receiver));
        }
        queue(msg.receiver, msg);
    }

    void broadcast(const RoundMessage& msg) override {
        check_sender(msg);
        RoundMessage m = msg;
        m.receiver = kAllAgents;
        for (std::size_t j = 0; j < table_.size(); ++j) {
            if (j != self_) queue(j, m);
        }
    }

    void barrier(PhaseId phase) override {
        RoundMessage marker;
        marker.kind = MessageKind::barrier;
        marker.sender = self_;
        marker.receiver = kAllAgents;
        marker.round = static_cast<std::uint32_t>(phase);
        marker.slot = static_cast<std::uint16_t>(phase >> 32U);
        for (std::size_t j = 0; j < table_.size(); ++j) {
            if (j != self_) queue(j, marker);
        }
        flush_all();

        std::unique_lock lock(mutex_);
        const std::size_t needed = table_.size() - 1;
        // A peer that closed its stream cleanly can no longer deliver a marker.
        auto lost_peer = [&] {
            const auto& got = markers_[phase];
            return std::any_of(closed_.begin(), closed_.end(),
                               [&](AgentId j) { return !got.count(j); });
        };
        auto done = [&] {
            return markers_[phase].size() == needed || failure_.has_value() || lost_peer();
        };
        if (!cv_.wait_for(lock, options_.barrier_timeout, done)) {
            throw RoundAbort("barrier phase " + std::to_string(phase) +
                             " timed out; missing agents: " + missing(phase));
        }
        if (markers_[phase].size() != needed) {
            throw RoundAbort((failure_ ? *failure_ : std::string("peer connection closed")) +
                             "; missing agents: " + missing(phase));
        }
        markers_.erase(phase);
    }

    std::vector<RoundMessage> take(MessageKind kind, std::uint32_t round) override {
        std::lock_guard lock(mutex_);
        std::vector<RoundMessage> out;
        auto keep = std::stable_partition(inbox_.begin(), inbox_.end(), [&](const RoundMessage& m) {
            return !(m.kind == kind && m.round == round);
        });
        out.assign(keep, inbox_.end());
        inbox_.erase(keep, inbox_.end());
        return out;
    }

    void abort(const std::string& reason) override {
        std::lock_guard lock(mutex_);
        if (!failure_) failure_ = reason;
        cv_.notify_all();
    }

private:
    void check_sender(const RoundMessage& msg) const {
        if (msg.sender != self_) throw InvalidInput("endpoint cannot send as another agent");
    }

    static void write_all(int fd, const std::uint8_t* data, std::size_t size) {
        while (size > 0) {
            const ssize_t w = ::send(fd, data, size, MSG_NOSIGNAL);
            if (w < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("socket write failed: ") + std::strerror(errno));
            }
            data += w;
            size -= static_cast<std::size_t>(w);
        }
    }

    static bool read_all(int fd, std::uint8_t* data, std::size_t size) {
        while (size > 0) {
            const ssize_t r = ::recv(fd, data, size, 0);
            if (r == 0) return false;
            if (r < 0) {
                if (errno == EINTR) continue;
                return false;
            }
            data += r;
            size -= static_cast<std::size_t>(r);
        }
        return true;
    }

    void queue(std::size_t peer, const RoundMessage& m) {
        const auto frame = encode_frame(m);
        auto& buf = out_[peer];
        buf.insert(buf.end(), frame.begin(), frame.end());
        if (buf.size() >= options_.flush_threshold) flush_peer(peer);
    }

    void flush_peer(std::size_t peer) {
        auto& buf = out_[peer];
        if (buf.empty()) return;
        write_all(fds_[peer], buf.data(), buf.size());
        buf.clear();
    }

    void flush_all() {
        for (std::size_t j = 0; j < table_.size(); ++j) {
            if (j != self_) flush_peer(j);
        }
    }

    std::string missing(PhaseId phase) {
        std::string s;
        const auto& got = markers_[phase];
        for (std::size_t j = 0; j < table_.size(); ++j) {
            if (j != self_ && !got.count(static_cast<AgentId>(j))) {
                s += (s.empty() ? "" : ",") + std::to_string(j);
            }
        }
        return s;
    }

    static void set_nodelay(int fd) {
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    static sockaddr_in resolve(const PeerAddress& a) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (::getaddrinfo(a.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
            throw TransportError("cannot resolve host " + a.host);
        }
        sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
        ::freeaddrinfo(res);
        addr.sin_port = htons(a.port);
        return addr;
    }

    void connect_mesh() {
        const auto deadline = std::chrono::steady_clock::now() + options_.connect_timeout;
        int listener = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listener < 0) throw TransportError("socket() failed");
        int one = 1;
        ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in me = resolve(table_[self_]);
        if (::bind(listener, reinterpret_cast<sockaddr*>(&me), sizeof me) != 0 ||
            ::listen(listener, static_cast<int>(table_.size())) != 0) {
            ::close(listener);
            throw TransportError("agent " + std::to_string(self_) + " cannot listen on port " +
                                 std::to_string(table_[self_].port) + ": " + std::strerror(errno));
        }

        try {
            for (std::size_t j = 0; j < self_; ++j) {
                const sockaddr_in peer = resolve(table_[j]);
                while (true) {
                    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
                    if (::connect(fd, reinterpret_cast<const sockaddr*>(&peer), sizeof peer) == 0) {
                        set_nodelay(fd);
                        std::uint8_t hello[2];
                        detail::put_le<std::uint16_t>(hello, self_);
                        write_all(fd, hello, 2);
                        fds_[j] = fd;
                        break;
                    }
                    ::close(fd);
                    if (std::chrono::steady_clock::now() > deadline) {
                        throw TransportError("agent " + std::to_string(self_) +
                                             " cannot connect to agent " + std::to_string(j));
                    }
                    std::this_thread::sleep_for(std::chrono::milliseconds(20));
                }
            }
            for (std::size_t accepted = 0; accepted + self_ + 1 < table_.size(); ++accepted) {
                pollfd p{listener, POLLIN, 0};
                const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                    deadline - std::chrono::steady_clock::now());
                if (left.count() <= 0 || ::poll(&p, 1, static_cast<int>(left.count())) <= 0) {
                    throw TransportError("agent " + std::to_string(self_) +
                                         " timed out waiting for peers to connect");
                }
                int fd = ::accept(listener, nullptr, nullptr);
                if (fd < 0) throw TransportError("accept() failed");
                set_nodelay(fd);
                std::uint8_t hello[2];
                if (!read_all(fd, hello, 2)) {
                    ::close(fd);
                    throw TransportError("peer closed during handshake");
                }
                const AgentId peer = detail::get_le<std::uint16_t>(hello);
                if (peer <= self_ || peer >= table_.size() || fds_[peer] >= 0) {
                    ::close(fd);
                    throw TransportError("unexpected handshake from agent " + std::to_string(peer));
                }
                fds_[peer] = fd;
            }
        } catch (...) {
            ::close(listener);
            for (int& fd : fds_) {
                if (fd >= 0) ::close(fd);
                fd = -1;
            }
            throw;
        }
        ::close(listener);
    }

    void read_loop() {
        std::vector<pollfd> polls;
        std::vector<std::size_t> peers;
        for (std::size_t j = 0; j < fds_.size(); ++j) {
            if (fds_[j] >= 0) {
                polls.push_back({fds_[j], POLLIN, 0});
                peers.push_back(j);
            }
        }
        std::vector<std::vector<std::uint8_t>> pending(fds_.size());
        std::size_t open = polls.size();
        std::vector<std::uint8_t> chunk(1U << 16U);
        while (open > 0) {
            const int ready = ::poll(polls.data(), polls.size(), 100);
            if (ready < 0 && errno != EINTR) break;
            if (ready <= 0) {
                if (stop_) break;
                continue;
            }
            for (std::size_t p = 0; p < polls.size(); ++p) {
                if (polls[p].fd < 0 || !(polls[p].revents & (POLLIN | POLLHUP | POLLERR))) continue;
                const ssize_t r = ::recv(polls[p].fd, chunk.data(), chunk.size(), 0);
                if (r <= 0) {
                    if (r < 0 && errno == EINTR) continue;
                    polls[p].fd = -1;
                    --open;
                    std::lock_guard lock(mutex_);
                    closed_.insert(static_cast<AgentId>(peers[p]));
                    cv_.notify_all();
                    continue;
                }
                auto& buf = pending[peers[p]];
                buf.insert(buf.end(), chunk.begin(), chunk.begin() + r);
                if (!drain_frames(buf, peers[p])) {
                    polls[p].fd = -1;
                    --open;
                }
            }
        }
    }

    bool drain_frames(std::vector<std::uint8_t>& buf, std::size_t peer) {
        std::size_t off = 0;
        std::vector<RoundMessage> got;
        bool ok = true;
        while (buf.size() - off >= 4) {
            const auto len = detail::get_le<std::uint32_t>(&buf[off]);
            if (len != kEnvelopeSize) {
                abort("bad frame length " + std::to_string(len) + " from agent " + std::to_string(peer));
                ok = false;
                break;
            }
            if (buf.size() - off < 4 + len) break;
            try {
                got.push_back(decode_envelope(std::span(&buf[off + 4], len)));
            } catch (const TransportError& e) {
                abort(e.what());
                ok = false;
                break;
            }
            off += 4 + len;
        }
        buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(off));
        if (!got.empty()) {
            std::lock_guard lock(mutex_);
            for (const auto& m : got) {
                if (m.kind == MessageKind::barrier) {
                    markers_[(PhaseId{m.slot} << 32U) | m.round].insert(m.sender);
                } else {
                    inbox_.push_back(m);
                }
            }
            cv_.notify_all();
        }
        return ok;
    }

    AgentId self_;
    std::vector<PeerAddress> table_;
    TcpOptions options_;
    std::vector<int> fds_;
    std::vector<std::vector<std::uint8_t>> out_;
    std::thread reader_;
    std::atomic<bool> stop_{false};

    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<RoundMessage> inbox_;
    std::map<PhaseId, std::set<AgentId>> markers_;
    std::set<AgentId> closed_;
    std::optional<std::string> failure_;
};

}  // namespace ssvf
