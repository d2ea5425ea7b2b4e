#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ssvf/encoding.hpp"
#include "ssvf/error.hpp"

namespace ssvf {

using Vec = std::vector<double>;

struct Horizon {
    std::size_t slots = 0;  // T
    double dt = 0.0;        // slot length in hours

    void validate() const {
        if (slots < 1) throw ConfigError("horizon needs at least one slot");
        if (!(dt > 0.0)) throw ConfigError("slot length dt must be positive");
    }
};

/// Private parameters of one EV: rate bounds (kW), energy demand (kWh) and
/// its primal step size.
struct EvSpec {
    Vec r_max;
    double demand = 0.0;
    double gamma = 0.01;

    void validate(const Horizon& h) const {
        if (r_max.size() != h.slots) {
            throw ConfigError("r_max has " + std::to_string(r_max.size()) + " slots, horizon has " +
                              std::to_string(h.slots));
        }
        for (double r : r_max) {
            if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("r_max must be finite and >= 0");
        }
        const double capacity = h.dt * std::accumulate(r_max.begin(), r_max.end(), 0.0);
        if (!(demand >= 0.0) || demand > capacity) {
            throw ConfigError("demand " + std::to_string(demand) + " kWh infeasible; capacity is " +
                              std::to_string(capacity) + " kWh");
        }
        if (!(gamma > 0.0)) throw ConfigError("primal step size gamma must be positive");
    }
};

struct AgentState {
    Vec x;              // charging profile, kW
    double lambda = 0;  // dual of the demand constraint

    friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct Scenario {
    Horizon horizon;
    Vec baseline;
    std::vector<EvSpec> fleet;
    double beta = 1.0;
    double eps0 = 1e-6;
    std::size_t max_iter = 300;

    void validate() const {
        horizon.validate();
        if (baseline.size() != horizon.slots) {
            throw ConfigError("baseline has " + std::to_string(baseline.size()) +
                              " slots, horizon has " + std::to_string(horizon.slots));
        }
        if (fleet.empty()) throw ConfigError("fleet is empty");
        for (const auto& ev : fleet) ev.validate(horizon);
        if (!(beta > 0.0)) throw ConfigError("dual step size beta must be positive");
        if (!(eps0 > 0.0)) throw ConfigError("tolerance eps0 must be positive");
    }
};

/// P_b + aggregate + lambda * (dt, ..., dt).
inline Vec primal_gradient(std::span<const double> baseline, std::span<const double> aggregate,
                           double lambda, double dt) {
    if (baseline.size() != aggregate.size()) {
        throw InvalidInput("primal_gradient: baseline and aggregate lengths differ");
    }
    Vec g(baseline.size());
    for (std::size_t t = 0; t < g.size(); ++t) g[t] = baseline[t] + aggregate[t] + lambda * dt;
    return g;
}

/// G x - d: energy delivered minus demand, in kWh.
inline double dual_gradient(std::span<const double> x, const EvSpec& spec, double dt) {
    double energy = 0.0;
    for (double v : x) energy += v;
    return dt * energy - spec.demand;
}

/// Euclidean projection onto the box [0, r_max].
inline Vec project_box(std::span<const double> x, const EvSpec& spec) {
    if (x.size() != spec.r_max.size()) throw InvalidInput("project_box: length mismatch");
    Vec out(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = std::clamp(x[t], 0.0, spec.r_max[t]);
    return out;
}

inline Vec primal_step(const AgentState& state, const EvSpec& spec,
                       std::span<const double> baseline, std::span<const double> aggregate,
                       double dt) {
    const Vec g = primal_gradient(baseline, aggregate, state.lambda, dt);
    if (g.size() != state.x.size()) throw InvalidInput("primal_step: state length mismatch");
    Vec raw(g.size());
    for (std::size_t t = 0; t < g.size(); ++t) raw[t] = state.x[t] - spec.gamma * g[t];
    return project_box(raw, spec);
}

inline double dual_step(const AgentState& state, const EvSpec& spec, double beta, double dt) {
    return state.lambda + beta * dual_gradient(state.x, spec, dt);
}

/// ||x' - x||^2 + (lambda' - lambda)^2.
inline double convergence_error(const AgentState& prev, const AgentState& next) {
    if (prev.x.size() != next.x.size()) throw InvalidInput("convergence_error: length mismatch");
    double e = 0.0;
    for (std::size_t t = 0; t < prev.x.size(); ++t) {
        const double d = next.x[t] - prev.x[t];
        e += d * d;
    }
    const double dl = next.lambda - prev.lambda;
    return e + dl * dl;
}

/// One local iteration: both updates read the pre-step state. Returns eps_i.
inline double local_update(AgentState& state, const EvSpec& spec, std::span<const double> baseline,
                           std::span<const double> aggregate, double dt, double beta) {
    AgentState next;
    next.x = primal_step(state, spec, baseline, aggregate, dt);
    next.lambda = dual_step(state, spec, beta, dt);
    const double eps = convergence_error(state, next);
    state = std::move(next);
    return eps;
}

/// 1/2 ||P_b + aggregate||^2.
inline double valley_objective(std::span<const double> baseline, std::span<const double> aggregate) {
    double s = 0.0;
    for (std::size_t t = 0; t < baseline.size(); ++t) {
        const double v = baseline[t] + aggregate[t];
        s += v * v;
    }
    return 0.5 * s;
}

inline Vec sum_profiles(std::span<const AgentState> states, std::size_t slots) {
    Vec sum(slots, 0.0);
    for (const auto& s : states) {
        for (std::size_t t = 0; t < slots; ++t) sum[t] += s.x[t];
    }
    return sum;
}

/// Relaxed Lagrangian of the valley-filling problem.
inline double lagrangian(const Scenario& sc, std::span<const AgentState> states) {
    double l = valley_objective(sc.baseline, sum_profiles(states, sc.horizon.slots));
    for (std::size_t i = 0; i < states.size(); ++i) {
        l += states[i].lambda * dual_gradient(states[i].x, sc.fleet[i], sc.horizon.dt);
    }
    return l;
}

/// Aggregate sum with every addend floored to delta digits, as the secure
/// protocol computes it.
inline Vec quantized_sum(std::span<const AgentState> states, std::size_t slots,
                         const FixedPointCodec& codec) {
    Vec sum(slots);
    for (std::size_t t = 0; t < slots; ++t) {
        std::int64_t acc = 0;
        for (const auto& s : states) acc += codec.to_scaled(s.x[t]);
        sum[t] = codec.from_scaled(acc);
    }
    return sum;
}

struct TraceRow {
    std::size_t iteration = 0;
    std::size_t agent = 0;
    double eps = 0.0;
    double lambda = 0.0;
    double objective = 0.0;  // 1/2 ||P_b + aggregate||^2 with the aggregate the agents saw

    friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

/// Outputs shared by the plaintext solver and the secure protocol.
struct RunResult {
    std::vector<AgentState> agents;
    std::size_t iterations = 0;
    std::vector<bool> stopped;
    std::vector<TraceRow> trace;
    std::vector<Vec> aggregates;                 // [l] aggregate used in iteration l
    std::vector<std::vector<AgentState>> history;  // [l][i], l = 0..iterations
    std::vector<double> objective;               // exact objective of history[l]
};

inline std::vector<AgentState> initial_states(const Scenario& sc) {
    return std::vector<AgentState>(sc.fleet.size(), AgentState{Vec(sc.horizon.slots, 0.0), 0.0});
}

/// Bookkeeping after iteration `l` finished; used by every execution path so
/// their results compare bit for bit.
inline void record_iteration(RunResult& r, const Scenario& sc, std::size_t l, const Vec& aggregate,
                             std::span<const double> eps) {
    const double obj = valley_objective(sc.baseline, aggregate);
    for (std::size_t i = 0; i < r.agents.size(); ++i) {
        r.trace.push_back({l, i, eps[i], r.agents[i].lambda, obj});
    }
    r.aggregates.push_back(aggregate);
    r.history.push_back(r.agents);
    r.objective.push_back(valley_objective(sc.baseline, sum_profiles(r.agents, sc.horizon.slots)));
    r.iterations = l + 1;
}

inline RunResult begin_run(const Scenario& sc) {
    RunResult r;
    r.agents = initial_states(sc);
    r.stopped.assign(sc.fleet.size(), false);
    r.history.push_back(r.agents);
    r.objective.push_back(valley_objective(sc.baseline, Vec(sc.horizon.slots, 0.0)));
    return r;
}

enum class AggregationMode { exact, quantized };

/// Projected-gradient loop with the aggregate computed in the clear. In
/// quantized mode every addend is floored to the codec's precision, which
/// makes the run an exact oracle for the secure protocol.
inline RunResult solve_plaintext(const Scenario& sc, AggregationMode mode,
                                 const FixedPointCodec* codec = nullptr) {
    sc.validate();
    if (mode == AggregationMode::quantized && codec == nullptr) {
        throw ConfigError("quantized aggregation needs a codec");
    }
    const std::size_t n = sc.fleet.size();
    const std::size_t slots = sc.horizon.slots;
    RunResult r = begin_run(sc);
    for (std::size_t l = 0; l < sc.max_iter; ++l) {
        if (std::all_of(r.stopped.begin(), r.stopped.end(), [](bool b) { return b; })) break;
        const Vec aggregate = mode == AggregationMode::exact ? sum_profiles(r.agents, slots)
                                                             : quantized_sum(r.agents, slots, *codec);
        Vec eps(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (r.stopped[i]) continue;
            eps[i] = local_update(r.agents[i], sc.fleet[i], sc.baseline, aggregate, sc.horizon.dt,
                                  sc.beta);
            if (eps[i] <= sc.eps0) r.stopped[i] = true;
        }
        record_iteration(r, sc, l, aggregate, eps);
    }
    return r;
}

/// max_i |G x_i - d_i| in kWh.
inline double max_demand_residual(const Scenario& sc, std::span<const AgentState> states) {
    double worst = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        worst = std::max(worst, std::fabs(dual_gradient(states[i].x, sc.fleet[i], sc.horizon.dt)));
    }
    return worst;
}

}  // namespace ssvf
