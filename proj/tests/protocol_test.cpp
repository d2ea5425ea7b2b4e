#include <gtest/gtest.h>

#include <random>
#include <set>
#include <vector>

#include "ssvf/protocol.hpp"
#include "ssvf/run_config.hpp"
#include "ssvf/verify.hpp"

namespace ssvf {
namespace {

RunConfig small_config(std::size_t n = 5, std::size_t degree = 2) {
    RunConfig rc;
    rc.n = n;
    rc.degree = degree;
    rc.slots = 8;
    rc.dt = 1.0;
    rc.d_lo = 4.0;
    rc.d_hi = 9.0;
    rc.max_iter = 25;
    rc.seed = 17;
    return rc;
}

TEST(SecureSum, ZeroVectorsSumToZero) {
    const auto cfg = make_protocol_config(3, 1, 2147483647, 3, 6.6, {4, 1.0}, 1);
    InProcessBus bus(3);
    const auto out = secure_aggregate_round({Vec(4, 0.0), Vec(4, 0.0), Vec(4, 0.0)}, cfg, bus);
    for (const auto& v : out) EXPECT_EQ(v, Vec(4, 0.0));
}

TEST(SecureSum, HandRunOverSeventeen) {
    // Dealer, share-sum and interpolation steps done by hand at the residue level.
    const FieldPrime f(17);
    const SharingPolicy policy(1, 3, f);
    const std::vector<FieldElement> nodes{{1, f}, {2, f}, {3, f}};
    std::vector<Dealing> dealings;
    for (AgentId i = 0; i < 3; ++i) {
        auto rng = agent_rng(99, i);
        dealings.push_back(deal(FieldElement(2 + i, f), policy, nodes, rng));
    }
    std::vector<SharePoint> v;
    for (std::size_t j = 0; j < 3; ++j) {
        FieldElement s = FieldElement::zero(f);
        for (const auto& d : dealings) s += d.shares[j].value;
        v.push_back({nodes[j], s});
    }
    EXPECT_EQ(reconstruct(v, policy).value(), 9U);
    EXPECT_TRUE(consistency_check(v, policy));
}

TEST(SecureSum, IntegerSecretsThroughTheProtocol) {
    // e = 31 keeps the sum 9 below e/2 so the signed decode returns it as is.
    const auto cfg = make_protocol_config(3, 1, 31, 0, 4.0, {1, 1.0}, 99);
    InProcessBus bus(3);
    const auto out = secure_aggregate_round({Vec{2.0}, Vec{3.0}, Vec{4.0}}, cfg, bus);
    for (const auto& v : out) EXPECT_EQ(v, Vec{9.0});
}

TEST(SecureSum, RandomTrialsMatchFixedPointSum) {
    const auto c = check_secure_sum_trials(25, 12, 6, 2024);
    EXPECT_TRUE(c.passed) << c.detail;
}

TEST(ProtocolConfig, RejectsTwoAgents) {
    try {
        make_protocol_config(2, 1, 2147483647, 3, 6.6, {4, 1.0}, 1);
        FAIL() << "n=2 accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("more than two agents"), std::string::npos);
    }
}

TEST(ProtocolConfig, RejectsBadParameters) {
    EXPECT_THROW(make_protocol_config(4, 4, 2147483647, 3, 6.6, {4, 1.0}, 1), ConfigError);
    EXPECT_THROW(make_protocol_config(4, 2, 2147483647, 3, 6.6, {4, 1.0}, 1, {1, 2, 2, 3}), InvalidInput);
    EXPECT_THROW(make_protocol_config(4, 2, 2147483647, 3, 6.6, {4, 1.0}, 1, {0, 1, 2, 3}), InvalidInput);
    EXPECT_THROW(make_protocol_config(4, 2, 2147483647, 9, 6.6, {4, 1.0}, 1), ConfigError);
}

TEST(RunProtocol, ZeroDemandFleetNeedsOneIteration) {
    auto rc = small_config(3, 1);
    rc.d_lo = rc.d_hi = 0.0;
    const auto sc = build_scenario(rc);
    const auto run = run_protocol(sc, build_protocol_config(rc));
    EXPECT_EQ(run.result.iterations, 1U);
    for (const auto& a : run.result.agents) EXPECT_EQ(a.x, Vec(rc.slots, 0.0));
}

TEST(RunProtocol, MatchesQuantizedOracleBitForBit) {
    const auto rc = small_config();
    const auto sc = build_scenario(rc);
    const auto cfg = build_protocol_config(rc);
    const auto run = run_protocol(sc, cfg);
    const auto c = check_oracle_equivalence(sc, cfg, run.result);
    EXPECT_TRUE(c.passed) << c.detail;
    EXPECT_EQ(run.result.trace, solve_plaintext(sc, AggregationMode::quantized, &cfg.codec).trace);
}

TEST(RunProtocol, RandomNodesGiveTheSameAggregates) {
    auto rc = small_config();
    const auto sc = build_scenario(rc);
    const auto a = run_protocol(sc, build_protocol_config(rc));
    rc.nodes = NodeScheme::random;
    const auto b = run_protocol(sc, build_protocol_config(rc));
    EXPECT_EQ(a.result.history, b.result.history);
    EXPECT_NE(a.transcript_digest, b.transcript_digest);
}

ProtocolOptions seeded(const RunConfig& rc) {
    ProtocolOptions po;
    po.bus = build_bus_options(rc);
    return po;
}

TEST(RunProtocol, DeterministicPerSeed) {
    auto rc = small_config();
    const auto sc = build_scenario(rc);
    const auto a = run_protocol(sc, build_protocol_config(rc), seeded(rc));
    const auto b = run_protocol(sc, build_protocol_config(rc), seeded(rc));
    EXPECT_EQ(a.transcript_digest, b.transcript_digest);
    rc.seed = 18;
    const auto c = run_protocol(sc, build_protocol_config(rc), seeded(rc));
    EXPECT_NE(a.transcript_digest, c.transcript_digest);
    EXPECT_EQ(a.result.history, c.result.history);
}

TEST(RunProtocol, CorruptedShareIsCaughtAndRoundNamed) {
    const auto rc = small_config();
    const auto sc = build_scenario(rc);
    ProtocolOptions po;
    po.fault = [](RoundMessage& m) {
        if (m.round == 6 && m.kind == MessageKind::share && m.sender == 0 && m.receiver == 4 &&
            m.slot == 2) {
            m.payload = (m.payload + 1) % 2147483647ULL;
        }
    };
    try {
        run_protocol(sc, build_protocol_config(rc), po);
        FAIL() << "corruption went unnoticed";
    } catch (const IntegrityError& e) {
        EXPECT_EQ(e.round(), 6U);
        EXPECT_NE(std::string(e.what()).find("round 6, slot 2"), std::string::npos) << e.what();
    }
}

TEST(RunProtocol, OutOfFieldPayloadIsRejected) {
    const auto rc = small_config();
    const auto sc = build_scenario(rc);
    ProtocolOptions po;
    po.fault = [](RoundMessage& m) {
        if (m.round == 1 && m.kind == MessageKind::broadcast && m.sender == 3) m.payload = ~0ULL;
    };
    EXPECT_THROW(run_protocol(sc, build_protocol_config(rc), po), IntegrityError);
}

TEST(RunProtocol, SelfSharesNeverTravel) {
    const auto rc = small_config(4, 2);
    const auto sc = build_scenario(rc);
    const auto cfg = build_protocol_config(rc);
    ProtocolOptions po;
    po.adversaries = {{AdversaryMode::eavesdropper, {}},
                      {AdversaryMode::honest_but_curious, {0, 1, 2, 3}}};
    const auto run = run_protocol(sc, cfg, po);
    const auto& wire = run.views[0].captured;
    const auto& polys = run.views[1].own_polynomials;
    std::size_t shares = 0;
    for (const auto& m : wire) {
        if (m.kind != MessageKind::share) continue;
        ++shares;
        ASSERT_NE(m.sender, m.receiver);
        const auto& p = polys.at(m.sender).at(m.round).at(m.slot);
        EXPECT_EQ(m.payload, p(cfg.nodes[m.receiver]).value());
        EXPECT_NE(m.payload, p(cfg.nodes[m.sender]).value());
    }
    EXPECT_EQ(shares, run.result.iterations * 4 * 3 * rc.slots);
}

TEST(RunProtocol, NodesNeverAppearOnTheWire) {
    auto rc = small_config(4, 2);
    rc.nodes = NodeScheme::random;
    const auto sc = build_scenario(rc);
    const auto cfg = build_protocol_config(rc);
    ProtocolOptions po;
    po.adversaries = {{AdversaryMode::eavesdropper, {}}};
    const auto run = run_protocol(sc, cfg, po);
    std::set<std::uint64_t> nodes;
    for (const auto& a : cfg.nodes) nodes.insert(a.value());
    for (const auto& m : run.views[0].captured) {
        EXPECT_FALSE(nodes.count(m.payload)) << "payload equals a node";
    }
}

TEST(RunProtocol, SampleTapAndPolynomialRecording) {
    const auto rc = small_config();
    const auto sc = build_scenario(rc);
    ProtocolOptions po;
    po.sample_rounds = 3;
    po.record_slot0_polynomials = true;
    const auto run = run_protocol(sc, build_protocol_config(rc), po);
    // Per round: share 0->1, share 1->0, two broadcasts.
    EXPECT_EQ(run.sampled_messages.size(), 3U * 4U);
    for (const auto& m : run.sampled_messages) {
        EXPECT_EQ(m.slot, 0);
        EXPECT_LE(m.sender, 1);
        EXPECT_LT(m.round, 3U);
    }
    EXPECT_EQ(run.outcomes[0].slot0_polynomials.size(), run.result.iterations);
    EXPECT_EQ(run.outcomes[0].slot0_polynomials[0].degree(), rc.degree);
    EXPECT_TRUE(run.outcomes[1].slot0_polynomials.empty());
}

TEST(RunProtocol, TcpThreadsMatchInProcess) {
    auto rc = small_config(4, 2);
    rc.max_iter = 10;
    const auto sc = build_scenario(rc);
    const auto cfg = build_protocol_config(rc);
    const auto inproc = run_protocol(sc, cfg);
    const auto [tcp, digest] = run_protocol_tcp_threads(sc, cfg);
    EXPECT_EQ(digest, inproc.transcript_digest);
    EXPECT_EQ(tcp.history, inproc.result.history);
}

}  // namespace
}  // namespace ssvf
