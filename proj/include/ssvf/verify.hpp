#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ssvf/adversary.hpp"
#include "ssvf/optim.hpp"
#include "ssvf/protocol.hpp"
#include "ssvf/run_config.hpp"
#include "ssvf/tcp_transport.hpp"

namespace ssvf {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

template <class... Parts>
std::string cat(const Parts&... parts) {
    std::ostringstream os;
    os.precision(6);
    (os << ... << parts);
    return os.str();
}

inline double stddev(const Vec& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

/// Private run vs. quantized plaintext oracle: every primal and dual value of
/// every iteration must agree exactly.
inline CheckResult check_oracle_equivalence(const Scenario& sc, const ProtocolConfig& cfg,
                                            const RunResult& private_run) {
    const RunResult oracle = solve_plaintext(sc, AggregationMode::quantized, &cfg.codec);
    CheckResult c{"oracle equivalence", false, {}};
    if (oracle.iterations != private_run.iterations) {
        c.detail = detail::cat("iteration counts differ: private ", private_run.iterations, ", oracle ",
                               oracle.iterations);
        return c;
    }
    for (std::size_t l = 0; l < oracle.history.size(); ++l) {
        if (oracle.history[l] != private_run.history[l]) {
            c.detail = detail::cat("trajectories diverge at iteration ", l);
            return c;
        }
    }
    c.passed = true;
    c.detail = detail::cat(private_run.iterations, " iterations, ", sc.fleet.size(),
                           " agents, primal and dual trajectories bit-identical");
    return c;
}

/// Decoded aggregate vs. exact sum of the same profiles, and final profiles
/// vs. an exact-real plaintext run.
inline CheckResult check_rounding_bound(const Scenario& sc, const ProtocolConfig& cfg,
                                        const RunResult& private_run, double profile_tolerance = 1e-2) {
    const double bound = static_cast<double>(sc.fleet.size()) / static_cast<double>(cfg.codec.scale());
    double worst_agg = 0.0;
    for (std::size_t l = 0; l < private_run.aggregates.size(); ++l) {
        const Vec exact = sum_profiles(private_run.history[l], sc.horizon.slots);
        for (std::size_t t = 0; t < exact.size(); ++t) {
            worst_agg = std::max(worst_agg, std::fabs(private_run.aggregates[l][t] - exact[t]));
        }
    }
    const RunResult real = solve_plaintext(sc, AggregationMode::exact);
    double worst_profile = 0.0;
    for (std::size_t i = 0; i < real.agents.size(); ++i) {
        for (std::size_t t = 0; t < sc.horizon.slots; ++t) {
            worst_profile = std::max(worst_profile,
                                     std::fabs(real.agents[i].x[t] - private_run.agents[i].x[t]));
        }
    }
    CheckResult c{"rounding bound", worst_agg < bound && worst_profile < profile_tolerance, {}};
    c.detail = detail::cat("max aggregate error ", worst_agg, " kW (bound ", bound,
                           "), max final profile gap ", worst_profile, " kW (bound ", profile_tolerance, ")");
    return c;
}

/// Randomized secure sums over the in-process bus against the plaintext
/// fixed-point sum.
inline CheckResult check_secure_sum_trials(std::size_t trials, std::size_t max_agents,
                                           std::size_t slots, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double bound = 6.6;
    std::size_t failures = 0;
    std::string first_failure;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(3, max_agents)(rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
        const auto cfg = make_protocol_config(n, k, 2147483647ULL, 3, bound, Horizon{slots, 0.25},
                                              rng());
        std::uniform_real_distribution<double> value(-bound, bound);
        std::vector<Vec> local(n, Vec(slots));
        std::vector<AgentState> states(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& v : local[i]) v = value(rng);
            states[i].x = local[i];
        }
        BusOptions bus_options;
        bus_options.scheduler_seed = rng();
        bus_options.modulus = cfg.policy.field().modulus();
        InProcessBus bus(n, bus_options);
        const auto got = secure_aggregate_round(local, cfg, bus, static_cast<std::uint32_t>(trial));
        const Vec expect = quantized_sum(states, slots, cfg.codec);
        for (std::size_t i = 0; i < n; ++i) {
            if (got[i] != expect) {
                ++failures;
                if (first_failure.empty()) first_failure = detail::cat("trial ", trial, " (n=", n, ", k=", k, ")");
                break;
            }
        }
    }
    CheckResult c{"secure-sum correctness", failures == 0, {}};
    c.detail = failures == 0 ? detail::cat(trials, " randomized trials exact")
                             : detail::cat(failures, " failing trials, first ", first_failure);
    return c;
}

/// Exhaustive census over every node subset of size 1..k drawn from k+2
/// shareholders.
inline CheckResult check_threshold_census(const std::vector<std::uint64_t>& moduli,
                                          const std::vector<std::size_t>& degrees) {
    std::size_t subsets = 0;
    for (auto e : moduli) {
        const FieldPrime field(e);
        for (auto k : degrees) {
            const std::size_t n = k + 2;
            for (std::uint32_t mask = 1; mask < (1U << n); ++mask) {
                const auto h = static_cast<std::size_t>(std::popcount(mask));
                if (h > k) continue;
                std::vector<FieldElement> nodes;
                for (std::size_t j = 0; j < n; ++j) {
                    if (mask & (1U << j)) nodes.emplace_back(j + 1, field);
                }
                const auto census = completion_census(field, k, nodes);
                ++subsets;
                if (!census.secret_independent) {
                    return {"threshold security", false,
                            detail::cat("e=", e, " k=", k, " subset mask ", mask,
                                        ": completion count depends on the secret")};
                }
            }
        }
    }
    return {"threshold security", true,
            detail::cat(subsets, " share subsets: completion counts independent of the secret")};
}

struct AdversaryChecks {
    CheckResult insider, eavesdropper, coalition, two_agents;
};

/// Attack replays against views recorded on one run. `views` must hold, in
/// order: a single insider, a full wiretap, and a coalition of all agents
/// except `target`, all covering `round`.
inline AdversaryChecks check_adversaries(const ProtocolRun& run, const ProtocolConfig& cfg,
                                         AgentId target, std::uint32_t round) {
    AdversaryChecks out;
    const auto single = attack_reconstruct(run.views.at(0), target, round);
    out.insider = {"single honest-but-curious agent", !single.recovered && single.insider.has_value(),
                   single.describe()};

    const auto wire = attack_reconstruct(run.views.at(1), target, round);
    bool witnessed = false;
    if (!wire.recovered && wire.eavesdropper && !wire.eavesdropper->exhaustive) {
        // Confirm the certificate: two shifted node assignments, both consistent
        // with every dealer, imply different secrets.
        const auto a = node_translation_witness(run.views[1], target, round, 0, cfg.nodes, 1000);
        const auto b = node_translation_witness(run.views[1], target, round, 0, cfg.nodes, 2000);
        witnessed = a.consistent && b.consistent && a.secret != b.secret;
    } else if (!wire.recovered && wire.eavesdropper) {
        witnessed = wire.eavesdropper->candidate_secrets.size() > 1;
    }
    out.eavesdropper = {"full-wiretap eavesdropper", !wire.recovered && witnessed,
                        wire.describe() + (witnessed ? "; ambiguity witnessed" : "; NO ambiguity witness")};

    const auto coalition = attack_reconstruct(run.views.at(2), target, round);
    bool exact = coalition.recovered;
    if (exact) {
        const auto& x = run.result.history.at(round).at(target).x;
        for (std::size_t t = 0; t < x.size(); ++t) {
            exact = exact && coalition.encoded[t] == cfg.codec.encode(x[t]).value();
        }
    }
    out.coalition = {"coalition of n-1 agents", exact,
                     coalition.describe() + (exact ? "; matches the target's encoded profile"
                                                   : "; profile mismatch")};

    try {
        (void)make_protocol_config(2, 1, cfg.policy.field().modulus(), cfg.codec.delta(),
                                   cfg.codec.magnitude_bound(), cfg.horizon, 0);
        out.two_agents = {"n=2 rejected", false, "two-agent configuration was accepted"};
    } catch (const ConfigError& e) {
        out.two_agents = {"n=2 rejected", true, e.what()};
    }
    return out;
}

inline std::vector<AdversarySpec> standard_adversaries(std::size_t agents, AgentId target,
                                                       std::uint32_t round) {
    std::vector<AgentId> others;
    for (std::size_t a = 0; a < agents; ++a) {
        if (a != target) others.push_back(static_cast<AgentId>(a));
    }
    const AgentId spy = target == 0 ? 1 : 0;
    return {AdversarySpec{AdversaryMode::honest_but_curious, {spy}, round, round},
            AdversarySpec{AdversaryMode::eavesdropper, {}, round, round},
            AdversarySpec{AdversaryMode::honest_but_curious, others, round, round}};
}

struct ValleyChecks {
    CheckResult flattening, box, residual;
};

inline ValleyChecks check_valley_filling(const Scenario& sc, const RunResult& r) {
    ValleyChecks out;
    const Vec ev = sum_profiles(r.agents, sc.horizon.slots);
    Vec total(sc.horizon.slots);
    for (std::size_t t = 0; t < total.size(); ++t) total[t] = sc.baseline[t] + ev[t];
    const double before = detail::stddev(sc.baseline);
    const double after = detail::stddev(total);
    out.flattening = {"std reduction", after < before,
                      detail::cat("std(P_b) = ", before, " kW, std(P_b + sum x) = ", after, " kW")};

    std::size_t violations = 0;
    for (std::size_t i = 0; i < r.agents.size(); ++i) {
        for (std::size_t t = 0; t < sc.horizon.slots; ++t) {
            const double x = r.agents[i].x[t];
            if (!(x >= 0.0 && x <= sc.fleet[i].r_max[t])) ++violations;
        }
    }
    out.box = {"box constraints", violations == 0, detail::cat(violations, " entries outside [0, r_max]")};

    double mean_demand = 0.0;
    for (const auto& ev_spec : sc.fleet) mean_demand += ev_spec.demand;
    mean_demand /= static_cast<double>(sc.fleet.size());
    const double residual = max_demand_residual(sc, r.agents);
    out.residual = {"demand residual", residual < 0.01 * mean_demand,
                    detail::cat("max |G x_i - d_i| = ", residual, " kWh after ", r.iterations,
                                " iterations; target < ", 0.01 * mean_demand, " kWh (1% of mean demand)")};
    return out;
}

inline CheckResult check_charging_shape(const Scenario& sc, const RunResult& r, double lo = 1.0,
                                        double hi = 6.6, std::size_t slack = 2) {
    double min_peak = hi, max_peak = 0.0;
    std::size_t outside = 0;
    for (const auto& a : r.agents) {
        const double peak = *std::max_element(a.x.begin(), a.x.end());
        min_peak = std::min(min_peak, peak);
        max_peak = std::max(max_peak, peak);
        if (peak < lo || peak > hi) ++outside;
    }
    const Vec ev = sum_profiles(r.agents, sc.horizon.slots);
    const auto argmax = static_cast<std::size_t>(std::max_element(ev.begin(), ev.end()) - ev.begin());
    const auto argmin = static_cast<std::size_t>(
        std::min_element(sc.baseline.begin(), sc.baseline.end()) - sc.baseline.begin());
    const std::size_t gap = argmax > argmin ? argmax - argmin : argmin - argmax;
    CheckResult c{"charging shape", outside == 0 && gap <= slack, {}};
    c.detail = detail::cat("per-EV max rates in [", min_peak, ", ", max_peak, "] kW, ", outside,
                           " outside [", lo, ", ", hi, "]; EV load peaks at slot ", argmax,
                           ", baseline minimum at slot ", argmin);
    return c;
}

/// Central differences of the Lagrangian against both analytic gradients.
inline CheckResult check_gradients(std::size_t instances, std::uint64_t seed, double tolerance = 1e-6) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
        const std::size_t slots = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Scenario sc;
        sc.horizon = {slots, 0.25 + u(rng)};
        for (std::size_t t = 0; t < slots; ++t) sc.baseline.push_back(20.0 + 80.0 * u(rng));
        std::vector<AgentState> states(n);
        for (std::size_t i = 0; i < n; ++i) {
            EvSpec ev{Vec(slots, 6.6), 0.0, 0.01};
            ev.demand = u(rng) * sc.horizon.dt * 6.6 * static_cast<double>(slots);
            sc.fleet.push_back(ev);
            for (std::size_t t = 0; t < slots; ++t) states[i].x.push_back(6.6 * u(rng));
            states[i].lambda = -50.0 + 100.0 * u(rng);
        }
        const Vec agg = sum_profiles(states, slots);
        auto rel = [](double analytic, double numeric) {
            return std::fabs(analytic - numeric) / std::max(1.0, std::fabs(analytic));
        };
        for (std::size_t i = 0; i < n; ++i) {
            const Vec g = primal_gradient(sc.baseline, agg, states[i].lambda, sc.horizon.dt);
            for (std::size_t t = 0; t < slots; ++t) {
                const double h = 1e-4;
                auto plus = states, minus = states;
                plus[i].x[t] += h;
                minus[i].x[t] -= h;
                const double fd = (lagrangian(sc, plus) - lagrangian(sc, minus)) / (2 * h);
                worst = std::max(worst, rel(g[t], fd));
            }
            const double h = 1e-4;
            auto plus = states, minus = states;
            plus[i].lambda += h;
            minus[i].lambda -= h;
            const double fd = (lagrangian(sc, plus) - lagrangian(sc, minus)) / (2 * h);
            worst = std::max(worst, rel(dual_gradient(states[i].x, sc.fleet[i], sc.horizon.dt), fd));
        }
    }
    return {"gradient correctness", worst < tolerance,
            detail::cat(instances, " instances, worst relative error ", worst, " (tolerance ", tolerance, ")")};
}

/// Runs the protocol with every agent on its own thread but talking over
/// loopback TCP, and returns the assembled result and transcript digest.
inline std::pair<RunResult, std::uint64_t> run_protocol_tcp_threads(const Scenario& sc,
                                                                    const ProtocolConfig& cfg,
                                                                    TcpOptions options = {}) {
    detail::check_run_inputs(sc, cfg);
    const std::size_t n = cfg.agents();
    const auto ports = pick_free_ports(n);
    std::vector<PeerAddress> table;
    for (std::size_t i = 0; i < n; ++i) table.push_back({static_cast<AgentId>(i), "127.0.0.1", ports[i]});
    std::vector<AgentOutcome> outcomes(n);
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n; ++i) {
        threads.emplace_back([&, i] {
            try {
                TcpEndpoint ep(static_cast<AgentId>(i), table, options);
                SecureAgent agent(static_cast<AgentId>(i), cfg, ep);
                outcomes[i] = agent.run(sc);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    RunResult r = assemble_run(sc, outcomes);
    const auto digest = transcript_digest(outcomes, r);
    return {std::move(r), digest};
}

struct VerifyOptions {
    /// Corrupts one share payload in this round to exercise the integrity layer.
    std::optional<std::uint32_t> corrupt_round;
    bool include_tcp = true;
};

/// Small-scale version of the full acceptance suite.
inline std::vector<CheckResult> verify_small(const VerifyOptions& opt = {}) {
    std::vector<CheckResult> out;
    RunConfig rc;
    rc.n = 6;
    rc.slots = 12;
    rc.dt = 1.0;
    rc.degree = 3;
    rc.max_iter = 60;
    rc.d_lo = 5.0;
    rc.d_hi = 10.0;
    rc.seed = 11;
    const Scenario sc = build_scenario(rc);
    const ProtocolConfig cfg = build_protocol_config(rc);
    const AgentId target = 2;
    const std::uint32_t round = 5;

    ProtocolOptions po;
    po.bus = build_bus_options(rc);
    po.adversaries = standard_adversaries(rc.n, target, round);
    if (opt.corrupt_round) {
        po.fault = [r = *opt.corrupt_round](RoundMessage& m) {
            if (m.kind == MessageKind::share && m.round == r && m.sender == 0 && m.receiver == 1 &&
                m.slot == 0) {
                m.payload = m.payload == 0 ? 1 : m.payload - 1;
            }
        };
    }
    ProtocolRun run;
    try {
        run = run_protocol(sc, cfg, po);
        out.push_back({"integrity", true, "every broadcast point lay on one aggregate polynomial"});
    } catch (const IntegrityError& e) {
        out.push_back({"integrity", false, e.what()});
        return out;
    }

    out.push_back(check_oracle_equivalence(sc, cfg, run.result));
    out.push_back(check_rounding_bound(sc, cfg, run.result));
    out.push_back(check_secure_sum_trials(20, 8, 4, 5));
    out.push_back(check_threshold_census({17}, {1, 2}));
    const auto adv = check_adversaries(run, cfg, target, round);
    out.push_back(adv.insider);
    out.push_back(adv.eavesdropper);
    out.push_back(adv.coalition);
    out.push_back(adv.two_agents);
    const auto valley = check_valley_filling(sc, run.result);
    out.push_back(valley.flattening);
    out.push_back(valley.box);
    out.push_back(check_gradients(20, 3));

    ProtocolRun again = run_protocol(sc, cfg, ProtocolOptions{build_bus_options(rc), {}, 0, false, {}});
    out.push_back({"determinism", again.transcript_digest == run.transcript_digest,
                   detail::cat("transcript digests ", std::hex, run.transcript_digest, " and ",
                               again.transcript_digest)});
    if (opt.include_tcp) {
        try {
            const auto [tcp, digest] = run_protocol_tcp_threads(sc, cfg);
            out.push_back({"transport equivalence", digest == run.transcript_digest,
                           detail::cat("in-process ", std::hex, run.transcript_digest, ", tcp ", digest)});
        } catch (const Error& e) {
            out.push_back({"transport equivalence", false, e.what()});
        }
    }
    return out;
}

}  // namespace ssvf
