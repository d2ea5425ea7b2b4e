#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ssvf/error.hpp"
#include "ssvf/wire.hpp"

namespace ssvf {

/// Identifies one synchronization point. Every agent must pass the same id.
using PhaseId = std::uint64_t;

inline PhaseId make_phase(std::uint32_t round, std::uint16_t step) {
    return (PhaseId{step} << 32U) | round;
}

/// An agent's handle on the message fabric. Per-link delivery is FIFO and
/// reliable; after barrier(p) returns, every message any agent sent before
/// entering barrier(p) is available to take().
class Endpoint {
public:
    virtual ~Endpoint() = default;

    virtual AgentId id() const = 0;
    virtual std::size_t agents() const = 0;

    virtual void send(const RoundMessage& msg) = 0;
    /// Delivers to every other agent; the receiver field is forced to kAllAgents.
    virtual void broadcast(const RoundMessage& msg) = 0;
    virtual void barrier(PhaseId phase) = 0;
    /// Removes and returns every received message of this kind and round.
    virtual std::vector<RoundMessage> take(MessageKind kind, std::uint32_t round) = 0;
    /// Releases peers blocked in barriers with a RoundAbort.
    virtual void abort(const std::string& reason) = 0;
};

enum class TapKind { eavesdropper, insider };

/// A passive observer. Eavesdroppers see every message; insider taps see
/// messages sent by or addressed to a coalition member plus all broadcasts.
struct TapRegistration {
    TapKind kind = TapKind::eavesdropper;
    std::vector<AgentId> coalition;
    std::shared_ptr<std::vector<RoundMessage>> sink = std::make_shared<std::vector<RoundMessage>>();
    /// Optional extra predicate, e.g. a round window, to bound memory.
    std::function<bool(const RoundMessage&)> filter;

    bool member(AgentId a) const {
        return std::find(coalition.begin(), coalition.end(), a) != coalition.end();
    }

    bool matches(const RoundMessage& m) const {
        if (filter && !filter(m)) return false;
        if (kind == TapKind::eavesdropper) return true;
        return m.receiver == kAllAgents || member(m.sender) || member(m.receiver);
    }
};

struct BusOptions {
    std::uint64_t scheduler_seed = 0;
    /// Unbounded when empty.
    std::optional<std::chrono::milliseconds> barrier_timeout;
    bool record_delivery_log = false;
    /// When set, payloads of share and broadcast messages must be below it.
    std::optional<std::uint64_t> modulus;
};

/// Deterministic in-process fabric. Sends are queued per link and delivered
/// at barrier release (or an explicit flush) in an order drawn from a seeded
/// scheduler that preserves per-link FIFO. Delivery therefore does not
/// depend on thread timing.
class InProcessBus {
public:
    using Fault = std::function<void(RoundMessage&)>;

    explicit InProcessBus(std::size_t agents, BusOptions options = {})
        : n_(agents), options_(options), scheduler_(options.scheduler_seed),
          links_(agents * (agents + 1)), inboxes_(agents) {
        if (agents == 0 || agents >= kAllAgents) throw ConfigError("bus needs 1..65534 agents");
        endpoints_.reserve(agents);
        for (std::size_t i = 0; i < agents; ++i) {
            endpoints_.push_back(std::make_unique<BusEndpoint>(*this, static_cast<AgentId>(i)));
        }
    }

    InProcessBus(const InProcessBus&) = delete;
    InProcessBus& operator=(const InProcessBus&) = delete;

    std::size_t agents() const noexcept { return n_; }
    Endpoint& endpoint(AgentId id) { return *endpoints_.at(id); }

    /// Taps must be registered before traffic starts.
    void add_tap(TapRegistration tap) { taps_.push_back(std::move(tap)); }

    /// Test hook: mutates messages at delivery time, as a faulty wire would.
    void set_fault(Fault fault) { fault_ = std::move(fault); }

    /// Delivers everything queued. Only call while no agent is sending.
    void flush() {
        std::lock_guard lock(mutex_);
        deliver_pending();
    }

    const std::vector<RoundMessage>& delivery_log() const noexcept { return delivery_log_; }

    void abort(const std::string& reason) {
        std::lock_guard lock(mutex_);
        if (!aborted_) aborted_ = reason;
        cv_.notify_all();
    }

private:
    class BusEndpoint final : public Endpoint {
    public:
        BusEndpoint(InProcessBus& bus, AgentId id) : bus_(bus), id_(id) {}

        AgentId id() const override { return id_; }
        std::size_t agents() const override { return bus_.n_; }

        void send(const RoundMessage& msg) override {
            if (msg.receiver == kAllAgents) {
                broadcast(msg);
                return;
            }
            bus_.enqueue(id_, msg);
        }

        void broadcast(const RoundMessage& msg) override {
            RoundMessage m = msg;
            m.receiver = kAllAgents;
            bus_.enqueue(id_, m);
        }

        void barrier(PhaseId phase) override { bus_.barrier(id_, phase); }

        std::vector<RoundMessage> take(MessageKind kind, std::uint32_t round) override {
            return bus_.take(id_, kind, round);
        }

        void abort(const std::string& reason) override { bus_.abort(reason); }

    private:
        InProcessBus& bus_;
        AgentId id_;
    };

    std::size_t link_index(AgentId sender, AgentId receiver) const {
        const std::size_t r = receiver == kAllAgents ? n_ : receiver;
        return static_cast<std::size_t>(sender) * (n_ + 1) + r;
    }

    // Each link queue has a single writer (its sender), so no lock is taken here.
    void enqueue(AgentId self, const RoundMessage& msg) {
        if (msg.sender != self) {
            throw InvalidInput("agent " + std::to_string(self) + " cannot send as " +
                               std::to_string(msg.sender));
        }
        if (msg.receiver != kAllAgents && (msg.receiver >= n_ || msg.receiver == self)) {
            throw RoutingError("unknown receiver " + std::to_string(msg.receiver) + " for sender " +
                               std::to_string(self));
        }
        if (options_.modulus &&
            (msg.kind == MessageKind::share || msg.kind == MessageKind::broadcast) &&
            msg.payload >= *options_.modulus) {
            throw InvalidInput("payload outside the field");
        }
        links_[link_index(self, msg.receiver)].push_back(msg);
    }

    void deliver_pending() {
        std::vector<std::size_t> live;
        for (std::size_t i = 0; i < links_.size(); ++i) {
            if (!links_[i].empty()) live.push_back(i);
        }
        while (!live.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
            const std::size_t slot = pick(scheduler_);
            auto& queue = links_[live[slot]];
            RoundMessage m = queue.front();
            queue.pop_front();
            if (queue.empty()) {
                live[slot] = live.back();
                live.pop_back();
            }
            if (fault_) fault_(m);
            for (auto& tap : taps_) {
                if (tap.matches(m)) tap.sink->push_back(m);
            }
            if (options_.record_delivery_log) delivery_log_.push_back(m);
            if (m.receiver == kAllAgents) {
                for (std::size_t j = 0; j < n_; ++j) {
                    if (j != m.sender) inboxes_[j].push_back(m);
                }
            } else {
                inboxes_[m.receiver].push_back(m);
            }
        }
    }

    void barrier(AgentId self, PhaseId phase) {
        std::unique_lock lock(mutex_);
        if (aborted_) throw RoundAbort(*aborted_);
        if (arrived_.empty()) {
            current_phase_ = phase;
            arrived_.assign(n_, false);
        } else if (phase != current_phase_) {
            aborted_ = "barrier phase mismatch: agent " + std::to_string(self) + " at " +
                       std::to_string(phase) + ", others at " + std::to_string(current_phase_);
            cv_.notify_all();
            throw RoundAbort(*aborted_);
        }
        arrived_[self] = true;
        if (std::all_of(arrived_.begin(), arrived_.end(), [](bool b) { return b; })) {
            deliver_pending();
            arrived_.clear();
            ++generation_;
            cv_.notify_all();
            return;
        }
        const std::uint64_t gen = generation_;
        auto released = [&] { return generation_ != gen || aborted_.has_value(); };
        if (options_.barrier_timeout) {
            if (!cv_.wait_for(lock, *options_.barrier_timeout, released)) {
                std::string missing;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (!arrived_[i]) missing += (missing.empty() ? "" : ",") + std::to_string(i);
                }
                aborted_ = "barrier phase " + std::to_string(phase) +
                           " timed out; missing agents: " + missing;
                cv_.notify_all();
                throw RoundAbort(*aborted_);
            }
        } else {
            cv_.wait(lock, released);
        }
        if (generation_ == gen) throw RoundAbort(*aborted_);
    }

    std::vector<RoundMessage> take(AgentId self, MessageKind kind, std::uint32_t round) {
        std::lock_guard lock(mutex_);
        auto& inbox = inboxes_[self];
        std::vector<RoundMessage> out;
        auto keep = std::stable_partition(inbox.begin(), inbox.end(), [&](const RoundMessage& m) {
            return !(m.kind == kind && m.round == round);
        });
        out.assign(keep, inbox.end());
        inbox.erase(keep, inbox.end());
        return out;
    }

    std::size_t n_;
    BusOptions options_;
    std::mt19937_64 scheduler_;
    std::vector<std::deque<RoundMessage>> links_;
    std::vector<std::vector<RoundMessage>> inboxes_;
    std::vector<std::unique_ptr<BusEndpoint>> endpoints_;
    std::vector<TapRegistration> taps_;
    std::vector<RoundMessage> delivery_log_;
    Fault fault_;

    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<bool> arrived_;
    PhaseId current_phase_ = 0;
    std::uint64_t generation_ = 0;
    std::optional<std::string> aborted_;
};

}  // namespace ssvf
