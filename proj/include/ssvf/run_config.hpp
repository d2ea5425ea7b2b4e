#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssvf/error.hpp"
#include "ssvf/optim.hpp"
#include "ssvf/protocol.hpp"
#include "ssvf/scenario_io.hpp"

namespace ssvf {

enum class RunMode { private_run, plaintext, quantized_oracle, attack_replay };
enum class TransportKind { inproc, tcp };
enum class NodeScheme { sequential, random };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::private_run: return "private";
        case RunMode::plaintext: return "plaintext";
        case RunMode::quantized_oracle: return "quantized-oracle";
        case RunMode::attack_replay: return "attack-replay";
    }
    return "?";
}

inline const char* to_string(TransportKind t) { return t == TransportKind::tcp ? "tcp" : "inproc"; }
inline const char* to_string(NodeScheme s) { return s == NodeScheme::random ? "random" : "sequential"; }

/// "none", "eavesdropper", or "coalition:1,2,3".
struct AdversaryChoice {
    std::optional<AdversarySpec> spec;

    static AdversaryChoice parse(const std::string& text) {
        AdversaryChoice c;
        if (text.empty() || text == "none") return c;
        if (text == "eavesdropper") {
            c.spec = AdversarySpec{AdversaryMode::eavesdropper, {}};
            return c;
        }
        const std::string prefix = "coalition:";
        if (text.rfind(prefix, 0) != 0) {
            throw ConfigError("adversary must be none, eavesdropper or coalition:<ids>, got '" + text + "'");
        }
        AdversarySpec s{AdversaryMode::honest_but_curious, {}};
        std::istringstream in(text.substr(prefix.size()));
        std::string tok;
        while (std::getline(in, tok, ',')) {
            std::size_t used = 0;
            unsigned long v = 0;
            try {
                v = std::stoul(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != tok.size() || v >= kAllAgents) {
                throw ConfigError("bad coalition member '" + tok + "'");
            }
            s.coalition.push_back(static_cast<AgentId>(v));
        }
        if (s.coalition.empty()) throw ConfigError("coalition needs at least one member");
        c.spec = s;
        return c;
    }

    std::string str() const {
        if (!spec) return "none";
        if (spec->mode == AdversaryMode::eavesdropper) return "eavesdropper";
        std::string s = "coalition:";
        for (std::size_t i = 0; i < spec->coalition.size(); ++i) {
            s += (i ? "," : "") + std::to_string(spec->coalition[i]);
        }
        return s;
    }
};

/// Fully resolved run configuration. The defaults are the evaluation preset:
/// 20 EVs, 48 quarter-hour slots, delta=3, degree 3, e=2^31-1, gamma=0.01,
/// beta=1, eps0=1e-6, 300 iterations, 6.6 kW chargers, demands in [10,20] kWh.
struct RunConfig {
    RunMode mode = RunMode::private_run;
    std::size_t n = 20;
    std::size_t slots = 48;
    double dt = 0.25;
    unsigned delta = 3;
    std::size_t degree = 3;
    std::uint64_t modulus = 2147483647ULL;
    double gamma = 0.01;
    double beta = 1.0;
    double eps0 = 1e-6;
    std::size_t max_iter = 300;
    std::uint64_t seed = 1;
    double r_u = 6.6;
    double d_lo = 10.0;
    double d_hi = 20.0;
    double peak_kw = 100.0;
    double valley_kw = 40.0;
    std::string baseline;  // CSV path; synthetic valley when empty
    NodeScheme nodes = NodeScheme::sequential;
    TransportKind transport = TransportKind::inproc;
    std::string addresses;
    AdversaryChoice adversary;
    std::uint32_t target = 0;
    std::uint32_t attack_round = 0;
    std::size_t sample_rounds = 100;
    std::string out = "ssvf-out";
    std::optional<AgentId> agent_id;

    void validate() const {
        if (n < 3) {
            throw ConfigError("n=" + std::to_string(n) +
                              " rejected: privacy requires more than two agents (n >= 3)");
        }
        if (degree < 1 || n < degree + 1) {
            throw ConfigError("degree k=" + std::to_string(degree) + " needs 1 <= k <= n-1");
        }
        if (target >= n) throw ConfigError("attack target must be below n");
        if (mode == RunMode::attack_replay && attack_round >= max_iter) throw ConfigError("attack round must be below max-iter");
        if (transport == TransportKind::tcp && mode != RunMode::private_run) {
            throw ConfigError("the tcp transport only runs the private mode");
        }
        if (agent_id && *agent_id >= n) throw ConfigError("agent-id must be below n");
        if (mode == RunMode::attack_replay && !adversary.spec) {
            throw ConfigError("attack-replay needs --adversary eavesdropper or coalition:<ids>");
        }
        if (adversary.spec) {
            for (AgentId a : adversary.spec->coalition) {
                if (a >= n) throw ConfigError("coalition member " + std::to_string(a) + " is not an agent");
            }
        }
    }

    /// Derived seeds keep the streams independent while depending only on `seed`.
    std::uint64_t fleet_seed() const { return seed; }
    std::uint64_t baseline_seed() const { return seed + 1; }
    std::uint64_t protocol_seed() const { return seed + 2; }
    std::uint64_t node_seed() const { return seed + 3; }
};

inline Horizon horizon_of(const RunConfig& c) { return {c.slots, c.dt}; }

inline Scenario build_scenario(const RunConfig& c) {
    c.validate();
    Scenario sc;
    sc.horizon = horizon_of(c);
    sc.horizon.validate();
    sc.baseline = c.baseline.empty()
                      ? synthetic_valley(c.slots, c.peak_kw, c.valley_kw, c.baseline_seed()).values
                      : load_baseline(c.baseline, sc.horizon).values;
    FleetSpec fleet{c.n, c.r_u, c.d_lo, c.d_hi, c.gamma, c.fleet_seed()};
    sc.fleet = sample_fleet(fleet, sc.horizon);
    sc.beta = c.beta;
    sc.eps0 = c.eps0;
    sc.max_iter = c.max_iter;
    sc.validate();
    return sc;
}

inline std::vector<std::uint64_t> node_values(const RunConfig& c) {
    std::vector<std::uint64_t> v;
    if (c.nodes == NodeScheme::sequential) {
        for (std::size_t i = 1; i <= c.n; ++i) v.push_back(i);
        return v;
    }
    if (c.modulus - 1 < c.n) throw ConfigError("field too small for distinct random nodes");
    std::mt19937_64 rng(c.node_seed());
    std::uniform_int_distribution<std::uint64_t> pick(1, c.modulus - 1);
    std::set<std::uint64_t> seen;
    while (v.size() < c.n) {
        const auto x = pick(rng);
        if (seen.insert(x).second) v.push_back(x);
    }
    return v;
}

inline ProtocolConfig build_protocol_config(const RunConfig& c) {
    c.validate();
    return make_protocol_config(c.n, c.degree, c.modulus, c.delta, c.r_u, horizon_of(c),
                                c.protocol_seed(), node_values(c));
}

inline FixedPointCodec build_codec(const RunConfig& c) {
    return FixedPointCodec(c.delta, FieldPrime(c.modulus), c.n, c.r_u);
}

inline BusOptions build_bus_options(const RunConfig& c) {
    BusOptions b;
    b.scheduler_seed = c.seed;
    return b;
}

}  // namespace ssvf
