#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>
#include <vector>

#include "ssvf/tcp_transport.hpp"
#include "ssvf/transport.hpp"
#include "ssvf/wire.hpp"

namespace ssvf {
namespace {

using namespace std::chrono_literals;

RoundMessage msg(MessageKind kind, AgentId from, AgentId to, std::uint32_t round, std::uint16_t slot,
                 std::uint64_t payload) {
    return {kind, from, to, round, slot, payload};
}

TEST(Wire, EnvelopeRoundTripAndLayout) {
    const auto m = msg(MessageKind::broadcast, 0x0102, kAllAgents, 0x0A0B0C0D, 0x1122,
                       0x8877665544332211ULL);
    const Envelope e = encode_envelope(m);
    ASSERT_EQ(e.size(), 19U);
    EXPECT_EQ(e[0], 1);
    EXPECT_EQ(e[1], 0x02);
    EXPECT_EQ(e[2], 0x01);
    EXPECT_EQ(e[3], 0xFF);
    EXPECT_EQ(e[4], 0xFF);
    EXPECT_EQ(e[5], 0x0D);
    EXPECT_EQ(e[8], 0x0A);
    EXPECT_EQ(e[9], 0x22);
    EXPECT_EQ(e[11], 0x11);
    EXPECT_EQ(e[18], 0x88);
    EXPECT_EQ(decode_envelope(e), m);

    const auto f = encode_frame(m);
    EXPECT_EQ(f[0], 19);
    EXPECT_EQ(f[1], 0);
    EXPECT_TRUE(std::equal(e.begin(), e.end(), f.begin() + 4));
}

TEST(Wire, RejectsMalformedEnvelopes) {
    Envelope e = encode_envelope(msg(MessageKind::share, 1, 2, 3, 4, 5));
    e[0] = 9;
    EXPECT_THROW(decode_envelope(e), TransportError);
    EXPECT_THROW(decode_envelope(std::span<const std::uint8_t>(e.data(), 18)), TransportError);
}

TEST(InProcessBus, SendThenReceiveIsLoopbackFaithful) {
    InProcessBus bus(3);
    const auto m = msg(MessageKind::share, 0, 2, 7, 1, 99);
    bus.endpoint(0).send(m);
    bus.flush();
    const auto got = bus.endpoint(2).take(MessageKind::share, 7);
    ASSERT_EQ(got.size(), 1U);
    EXPECT_EQ(got[0], m);
    EXPECT_TRUE(bus.endpoint(1).take(MessageKind::share, 7).empty());
}

TEST(InProcessBus, BroadcastFansOutOnceToEachPeer) {
    InProcessBus bus(3);
    TapRegistration tap;
    bus.add_tap(tap);
    bus.endpoint(1).broadcast(msg(MessageKind::broadcast, 1, 0, 0, 0, 5));
    bus.flush();
    std::size_t deliveries = 0;
    for (AgentId a = 0; a < 3; ++a) deliveries += bus.endpoint(a).take(MessageKind::broadcast, 0).size();
    EXPECT_EQ(deliveries, 2U);
    ASSERT_EQ(tap.sink->size(), 1U);
    EXPECT_EQ(tap.sink->front().receiver, kAllAgents);
}

TEST(InProcessBus, RoutingErrors) {
    InProcessBus bus(3);
    EXPECT_THROW(bus.endpoint(0).send(msg(MessageKind::share, 0, 3, 0, 0, 1)), RoutingError);
    EXPECT_THROW(bus.endpoint(0).send(msg(MessageKind::share, 0, 0, 0, 0, 1)), RoutingError);
    EXPECT_THROW(bus.endpoint(0).send(msg(MessageKind::share, 1, 2, 0, 0, 1)), InvalidInput);
}

std::vector<RoundMessage> replay(std::uint64_t seed) {
    BusOptions opt;
    opt.scheduler_seed = seed;
    opt.record_delivery_log = true;
    InProcessBus bus(20, opt);
    std::mt19937_64 traffic(123);
    std::uniform_int_distribution<int> agent(0, 19);
    for (int i = 0; i < 10000; ++i) {
        const auto from = static_cast<AgentId>(agent(traffic));
        auto to = static_cast<AgentId>(agent(traffic));
        if (to == from) to = kAllAgents;
        bus.endpoint(from).send(msg(MessageKind::share, from, to, static_cast<std::uint32_t>(i / 1000),
                                    0, static_cast<std::uint64_t>(i)));
    }
    bus.flush();
    return bus.delivery_log();
}

TEST(InProcessBus, SeededSchedulerReplaysIdentically) {
    const auto a = replay(77);
    const auto b = replay(77);
    ASSERT_EQ(a.size(), 10000U);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, replay(78));
}

TEST(InProcessBus, PerLinkOrderIsPreserved) {
    const auto log = replay(5);
    std::map<std::pair<AgentId, AgentId>, std::uint64_t> last;
    for (const auto& m : log) {
        const auto key = std::make_pair(m.sender, m.receiver);
        if (auto it = last.find(key); it != last.end()) {
            EXPECT_LT(it->second, m.payload);
        }
        last[key] = m.payload;
    }
}

TEST(InProcessBus, TapsSeeExactlyTheirLinks) {
    InProcessBus bus(4);
    TapRegistration wiretap;
    TapRegistration insider;
    insider.kind = TapKind::insider;
    insider.coalition = {1};
    bus.add_tap(wiretap);
    bus.add_tap(insider);
    std::vector<RoundMessage> sent;
    for (AgentId from = 0; from < 4; ++from) {
        for (AgentId to = 0; to < 4; ++to) {
            if (to == from) continue;
            sent.push_back(msg(MessageKind::share, from, to, 0, 0, from * 10U + to));
            bus.endpoint(from).send(sent.back());
        }
        sent.push_back(msg(MessageKind::broadcast, from, kAllAgents, 0, 0, 100U + from));
        bus.endpoint(from).broadcast(sent.back());
    }
    bus.flush();
    auto sorted = [](std::vector<RoundMessage> v) {
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
            return std::tie(a.sender, a.receiver, a.payload) < std::tie(b.sender, b.receiver, b.payload);
        });
        return v;
    };
    EXPECT_EQ(sorted(*wiretap.sink), sorted(sent));
    std::vector<RoundMessage> visible;
    for (const auto& m : sent) {
        if (m.receiver == kAllAgents || m.sender == 1 || m.receiver == 1) visible.push_back(m);
    }
    EXPECT_EQ(sorted(*insider.sink), sorted(visible));
}

TEST(InProcessBus, TapsDoNotChangeDelivery) {
    auto run = [](bool with_tap) {
        BusOptions opt;
        opt.scheduler_seed = 9;
        opt.record_delivery_log = true;
        InProcessBus bus(5, opt);
        if (with_tap) bus.add_tap({});
        for (AgentId a = 0; a < 5; ++a) {
            for (AgentId b = 0; b < 5; ++b) {
                if (a != b) bus.endpoint(a).send(msg(MessageKind::share, a, b, 0, 0, a * 5U + b));
            }
        }
        bus.flush();
        return bus.delivery_log();
    };
    EXPECT_EQ(run(false), run(true));
}

TEST(InProcessBus, SingleAgentBarrierReleasesImmediately) {
    InProcessBus bus(1);
    EXPECT_NO_THROW(bus.endpoint(0).barrier(make_phase(0, 0)));
}

TEST(InProcessBus, DelayedAgentHoldsEveryoneBack) {
    InProcessBus bus(3);
    std::atomic<int> released{0};
    std::vector<std::thread> t;
    for (AgentId a = 0; a < 2; ++a) {
        t.emplace_back([&, a] {
            bus.endpoint(a).barrier(make_phase(4, 1));
            ++released;
        });
    }
    std::this_thread::sleep_for(50ms);
    EXPECT_EQ(released.load(), 0);
    bus.endpoint(2).barrier(make_phase(4, 1));
    for (auto& th : t) th.join();
    EXPECT_EQ(released.load(), 2);
}

TEST(InProcessBus, AbsentAgentTimesOutAndIsNamed) {
    BusOptions opt;
    opt.barrier_timeout = 100ms;
    InProcessBus bus(3, opt);
    std::vector<std::string> errors(2);
    std::vector<std::thread> t;
    for (AgentId a = 0; a < 2; ++a) {
        t.emplace_back([&, a] {
            try {
                bus.endpoint(a).barrier(make_phase(0, 0));
            } catch (const RoundAbort& e) {
                errors[a] = e.what();
            }
        });
    }
    for (auto& th : t) th.join();
    for (const auto& e : errors) EXPECT_NE(e.find("missing agents: 2"), std::string::npos) << e;
}

TEST(AddressTable, ParsesAndValidates) {
    std::istringstream ok("# agents\n1 127.0.0.1 9001\n0 127.0.0.1 9000  # first\n\n");
    const auto t = parse_address_table(ok);
    ASSERT_EQ(t.size(), 2U);
    EXPECT_EQ(t[0].port, 9000);
    EXPECT_EQ(t[1].host, "127.0.0.1");
    std::istringstream gap("0 h 1\n2 h 2\n");
    EXPECT_THROW(parse_address_table(gap), IoError);
    std::istringstream bad("0 h\n");
    EXPECT_THROW(parse_address_table(bad), ParseError);
}

std::vector<PeerAddress> loopback_table(std::size_t n) {
    const auto ports = pick_free_ports(n);
    std::vector<PeerAddress> table;
    for (std::size_t i = 0; i < n; ++i) table.push_back({static_cast<AgentId>(i), "127.0.0.1", ports[i]});
    return table;
}

TEST(TcpEndpoint, MeshDeliversSharesAndBroadcasts) {
    const auto table = loopback_table(3);
    std::vector<std::vector<RoundMessage>> shares(3), broadcasts(3);
    std::vector<std::thread> t;
    for (AgentId a = 0; a < 3; ++a) {
        t.emplace_back([&, a] {
            TcpEndpoint ep(a, table);
            for (AgentId b = 0; b < 3; ++b) {
                if (b != a) ep.send(msg(MessageKind::share, a, b, 2, 5, 1000U * a + b));
            }
            ep.broadcast(msg(MessageKind::broadcast, a, 0, 2, 5, 77U + a));
            ep.barrier(make_phase(2, 0));
            shares[a] = ep.take(MessageKind::share, 2);
            broadcasts[a] = ep.take(MessageKind::broadcast, 2);
            ep.barrier(make_phase(2, 1));
        });
    }
    for (auto& th : t) th.join();
    for (AgentId a = 0; a < 3; ++a) {
        ASSERT_EQ(shares[a].size(), 2U);
        ASSERT_EQ(broadcasts[a].size(), 2U);
        for (const auto& m : shares[a]) {
            EXPECT_EQ(m.receiver, a);
            EXPECT_EQ(m.payload, 1000U * m.sender + a);
            EXPECT_EQ(m.slot, 5);
        }
        for (const auto& m : broadcasts[a]) {
            EXPECT_EQ(m.receiver, kAllAgents);
            EXPECT_EQ(m.payload, 77U + m.sender);
        }
    }
}

TEST(TcpEndpoint, BarrierTimeoutNamesTheSilentPeer) {
    const auto table = loopback_table(3);
    TcpOptions opt;
    opt.barrier_timeout = 200ms;
    std::vector<std::string> errors(3);
    std::vector<std::thread> t;
    for (AgentId a = 0; a < 3; ++a) {
        t.emplace_back([&, a] {
            TcpEndpoint ep(a, table, opt);
            if (a == 2) {
                std::this_thread::sleep_for(600ms);  // connected, never reaches the barrier
                return;
            }
            try {
                ep.barrier(make_phase(0, 0));
            } catch (const RoundAbort& e) {
                errors[a] = e.what();
            }
        });
    }
    for (auto& th : t) th.join();
    EXPECT_NE(errors[0].find("missing agents: 2"), std::string::npos) << errors[0];
    EXPECT_NE(errors[1].find("missing agents: 2"), std::string::npos) << errors[1];
}

}  // namespace
}  // namespace ssvf
