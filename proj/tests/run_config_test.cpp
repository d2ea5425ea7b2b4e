#include <gtest/gtest.h>

#include <set>

#include "ssvf/run_config.hpp"

namespace ssvf {
namespace {

TEST(RunConfig, DefaultsAreTheEvaluationPreset) {
    const RunConfig rc;
    EXPECT_EQ(rc.n, 20U);
    EXPECT_EQ(rc.slots, 48U);
    EXPECT_EQ(rc.dt, 0.25);
    EXPECT_EQ(rc.delta, 3U);
    EXPECT_EQ(rc.degree, 3U);
    EXPECT_EQ(rc.modulus, 2147483647ULL);
    EXPECT_EQ(rc.gamma, 0.01);
    EXPECT_EQ(rc.beta, 1.0);
    EXPECT_EQ(rc.eps0, 1e-6);
    EXPECT_EQ(rc.max_iter, 300U);
    EXPECT_EQ(rc.r_u, 6.6);
    EXPECT_EQ(rc.d_lo, 10.0);
    EXPECT_EQ(rc.d_hi, 20.0);
    EXPECT_EQ(rc.nodes, NodeScheme::sequential);
    const auto cfg = build_protocol_config(rc);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(cfg.nodes[i].value(), i + 1);
}

TEST(RunConfig, RejectsTwoAgentsNamingTheBound) {
    RunConfig rc;
    rc.n = 2;
    rc.degree = 1;
    try {
        rc.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("n >= 3"), std::string::npos);
        EXPECT_EQ(e.category(), ErrorCategory::config);
    }
}

TEST(RunConfig, ValidationNamesTheConstraint) {
    RunConfig rc;
    rc.degree = 20;
    EXPECT_THROW(rc.validate(), ConfigError);
    rc = RunConfig{};
    rc.mode = RunMode::plaintext;
    rc.transport = TransportKind::tcp;
    EXPECT_THROW(rc.validate(), ConfigError);
    rc = RunConfig{};
    rc.mode = RunMode::attack_replay;
    EXPECT_THROW(rc.validate(), ConfigError);
    rc.adversary = AdversaryChoice::parse("coalition:1,25");
    EXPECT_THROW(rc.validate(), ConfigError);
    rc.adversary = AdversaryChoice::parse("eavesdropper");
    rc.attack_round = 300;
    EXPECT_THROW(rc.validate(), ConfigError);
    rc.attack_round = 299;
    EXPECT_NO_THROW(rc.validate());
}

TEST(AdversaryChoice, ParsesAndPrints) {
    EXPECT_FALSE(AdversaryChoice::parse("none").spec);
    EXPECT_EQ(AdversaryChoice::parse("eavesdropper").spec->mode, AdversaryMode::eavesdropper);
    const auto c = AdversaryChoice::parse("coalition:3,1,4");
    EXPECT_EQ(c.spec->coalition, (std::vector<AgentId>{3, 1, 4}));
    EXPECT_EQ(c.str(), "coalition:3,1,4");
    EXPECT_THROW(AdversaryChoice::parse("coalition:"), ConfigError);
    EXPECT_THROW(AdversaryChoice::parse("coalition:1,x"), ConfigError);
    EXPECT_THROW(AdversaryChoice::parse("wiretap"), ConfigError);
}

TEST(RunConfig, RandomNodesAreDistinctNonzeroAndSeeded) {
    RunConfig rc;
    rc.nodes = NodeScheme::random;
    const auto a = node_values(rc);
    EXPECT_EQ(a, node_values(rc));
    std::set<std::uint64_t> seen(a.begin(), a.end());
    EXPECT_EQ(seen.size(), rc.n);
    EXPECT_FALSE(seen.count(0));
    rc.seed = 2;
    EXPECT_NE(a, node_values(rc));
}

TEST(RunConfig, BuildsAPresetScenario) {
    const RunConfig rc;
    const auto sc = build_scenario(rc);
    EXPECT_EQ(sc.fleet.size(), 20U);
    EXPECT_EQ(sc.baseline.size(), 48U);
    EXPECT_EQ(sc.max_iter, 300U);
    const auto codec = build_codec(rc);
    EXPECT_EQ(codec.delta(), 3U);
    EXPECT_EQ(build_bus_options(rc).scheduler_seed, rc.seed);
}

}  // namespace
}  // namespace ssvf
