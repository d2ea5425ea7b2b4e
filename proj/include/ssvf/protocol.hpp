#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ssvf/digest.hpp"
#include "ssvf/encoding.hpp"
#include "ssvf/error.hpp"
#include "ssvf/field.hpp"
#include "ssvf/optim.hpp"
#include "ssvf/shamir.hpp"
#include "ssvf/transport.hpp"
#include "ssvf/wire.hpp"

namespace ssvf {

/// Everything the agents agree on before the first round. The nodes
/// alpha_1..alpha_n are common knowledge among agents but never sent.
struct ProtocolConfig {
    SharingPolicy policy;
    FixedPointCodec codec;
    std::vector<FieldElement> nodes;
    Horizon horizon;
    std::uint64_t seed = 0;

    std::size_t agents() const { return policy.shareholders(); }

    void validate() const {
        if (agents() < 3) {
            throw ConfigError("n=" + std::to_string(agents()) +
                              " rejected: privacy against honest-but-curious agents requires "
                              "more than two agents (n >= 3)");
        }
        if (agents() >= kAllAgents) throw ConfigError("too many agents for the wire format");
        validate_nodes(nodes, policy);
        if (!(codec.field() == policy.field())) {
            throw ConfigError("codec and sharing policy use different fields");
        }
        if (codec.capacity() < agents()) {
            throw ConfigError("codec capacity " + std::to_string(codec.capacity()) +
                              " is below the number of agents " + std::to_string(agents()));
        }
        horizon.validate();
        if (horizon.slots > std::numeric_limits<std::uint16_t>::max()) {
            throw ConfigError("too many slots for the wire format");
        }
    }
};

/// Sequential nodes alpha_i = i (1-based) unless explicit values are given.
inline ProtocolConfig make_protocol_config(std::size_t agents, std::size_t degree,
                                           std::uint64_t modulus, unsigned delta,
                                           double magnitude_bound, Horizon horizon,
                                           std::uint64_t seed,
                                           std::vector<std::uint64_t> node_values = {}) {
    const FieldPrime field(modulus);
    ProtocolConfig cfg{SharingPolicy(degree, agents, field),
                       FixedPointCodec(delta, field, agents, magnitude_bound),
                       {},
                       horizon,
                       seed};
    if (node_values.empty()) {
        for (std::size_t i = 1; i <= agents; ++i) node_values.push_back(i);
    }
    for (auto v : node_values) {
        if (v >= modulus) throw ConfigError("node value outside the field");
        cfg.nodes.emplace_back(v, field);
    }
    cfg.validate();
    return cfg;
}

/// Per-agent coefficient stream, independent across agents.
inline std::mt19937_64 agent_rng(std::uint64_t seed, AgentId id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U),
                      static_cast<std::uint32_t>(id), 0x5eed5eedU};
    return std::mt19937_64(seq);
}

enum class AdversaryMode { honest_but_curious, eavesdropper };

struct AdversarySpec {
    AdversaryMode mode = AdversaryMode::eavesdropper;
    std::vector<AgentId> coalition;  // honest-but-curious members
    std::uint32_t first_round = 0;
    std::uint32_t last_round = std::numeric_limits<std::uint32_t>::max();
};

/// Protocol parameters an outsider is assumed to know. Nodes are not among them.
struct PublicParameters {
    std::size_t agents = 0;
    std::size_t degree = 0;
    std::uint64_t modulus = 0;
    unsigned delta = 0;
    std::size_t slots = 0;
};

/// The information set an attacker accumulates during a run.
struct AdversaryView {
    AdversaryMode mode = AdversaryMode::eavesdropper;
    std::vector<AgentId> coalition;
    PublicParameters params;
    std::vector<RoundMessage> captured;
    std::vector<FieldElement> nodes;  // insiders only
    /// Insiders only: member -> [round - first_round][slot] dealt polynomial.
    std::map<AgentId, std::vector<std::vector<SecretPolynomial>>> own_polynomials;
    std::uint32_t first_round = 0;
};

/// What one agent produces over a run.
struct AgentOutcome {
    AgentId id = 0;
    std::vector<AgentState> history;  // [0] initial, then after every iteration
    std::vector<double> eps;
    std::vector<Vec> aggregates;
    bool stopped = false;
    std::uint64_t sent_digest = 0;
    std::vector<SecretPolynomial> slot0_polynomials;               // when requested
    std::vector<std::vector<SecretPolynomial>> dealt_polynomials;  // insiders only
};

struct AgentRecording {
    bool slot0_polynomials = false;
    bool all_polynomials = false;
    std::uint32_t first_round = 0;
    std::uint32_t last_round = std::numeric_limits<std::uint32_t>::max();
};

/// One EV. Acts as dealer and shareholder in every round and updates its
/// own primal and dual variables from the reconstructed aggregate.
class SecureAgent {
public:
    SecureAgent(AgentId id, const ProtocolConfig& cfg, Endpoint& endpoint,
                AgentRecording recording = {})
        : id_(id), cfg_(cfg), ep_(endpoint), rng_(agent_rng(cfg.seed, id)), rec_(recording) {
        if (id >= cfg.agents()) throw ConfigError("agent id outside the configuration");
        if (endpoint.agents() != cfg.agents()) {
            throw ConfigError("transport size does not match the number of agents");
        }
        const std::size_t t = cfg.policy.threshold();
        const std::span<const FieldElement> base(cfg.nodes.data(), t);
        zero_weights_ = lagrange_weights(base, cfg.nodes[0].rebind(0));
        for (std::size_t m = t; m < cfg.agents(); ++m) {
            check_weights_.push_back(lagrange_weights(base, cfg.nodes[m]));
        }
    }

    std::uint64_t sent_digest() const { return digest_.digest(); }
    const std::vector<SecretPolynomial>& slot0_polynomials() const { return slot0_; }
    std::vector<std::vector<SecretPolynomial>>& dealt_polynomials() { return dealt_; }

    /// One secure-sum round over every slot. Returns the decoded sum of all
    /// agents' vectors; every agent obtains the same values.
    Vec aggregate(std::span<const double> x, std::uint32_t round) {
        const std::size_t n = cfg_.agents();
        const std::size_t slots = cfg_.horizon.slots;
        if (x.size() != slots) throw InvalidInput("local vector length differs from horizon");
        const FieldElement zero = cfg_.nodes[0].rebind(0);

        const bool record = rec_.all_polynomials && round >= rec_.first_round &&
                            round <= rec_.last_round;
        if (record) dealt_.emplace_back();
        std::vector<FieldElement> v(slots, zero);
        for (std::size_t t = 0; t < slots; ++t) {
            const Dealing d = deal(cfg_.codec.encode(x[t]), cfg_.policy, cfg_.nodes, rng_);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == id_) continue;
                emit_send({MessageKind::share, id_, static_cast<AgentId>(j), round,
                           static_cast<std::uint16_t>(t), d.shares[j].value.value()});
            }
            v[t] = d.shares[id_].value;
            if (rec_.slot0_polynomials && t == 0) slot0_.push_back(d.polynomial);
            if (record) dealt_.back().push_back(d.polynomial);
        }
        ep_.barrier(make_phase(round, 0));

        // v_i = sum over dealers l of p_l(alpha_i), own share included.
        const auto shares = ep_.take(MessageKind::share, round);
        check_complete(shares, round, "share", [&](const RoundMessage& m) {
            return m.receiver == id_;
        });
        for (const auto& m : shares) v[m.slot] += zero.rebind(m.payload);

        for (std::size_t t = 0; t < slots; ++t) {
            emit_broadcast({MessageKind::broadcast, id_, kAllAgents, round,
                            static_cast<std::uint16_t>(t), v[t].value()});
        }
        ep_.barrier(make_phase(round, 1));

        const auto points = ep_.take(MessageKind::broadcast, round);
        check_complete(points, round, "broadcast",
                       [](const RoundMessage& m) { return m.receiver == kAllAgents; });
        std::vector<std::vector<FieldElement>> value(n, std::vector<FieldElement>(slots, zero));
        value[id_] = v;
        for (const auto& m : points) value[m.sender][m.slot] = zero.rebind(m.payload);

        Vec sum(slots);
        const std::size_t t_count = cfg_.policy.threshold();
        for (std::size_t t = 0; t < slots; ++t) {
            for (std::size_t c = 0; c < check_weights_.size(); ++c) {
                FieldElement expect = zero;
                for (std::size_t l = 0; l < t_count; ++l) expect += check_weights_[c][l] * value[l][t];
                if (expect != value[t_count + c][t]) {
                    throw IntegrityError(round, "integrity failure in round " + std::to_string(round) +
                                                    ", slot " + std::to_string(t) +
                                                    ": broadcast of agent " +
                                                    std::to_string(t_count + c) +
                                                    " is off the aggregate polynomial");
                }
            }
            FieldElement s = zero;
            for (std::size_t l = 0; l < t_count; ++l) s += zero_weights_[l] * value[l][t];
            sum[t] = cfg_.codec.decode(s);
        }
        return sum;
    }

    /// Exchanges stop votes; true when every agent has stopped.
    bool all_stopped(bool self_stopped, std::uint32_t round) {
        emit_broadcast({MessageKind::status, id_, kAllAgents, round, 0, self_stopped ? 1U : 0U});
        ep_.barrier(make_phase(round, 2));
        const auto votes = ep_.take(MessageKind::status, round);
        check_complete(votes, round, "status", [](const RoundMessage&) { return true; }, 1);
        return self_stopped && std::all_of(votes.begin(), votes.end(),
                                           [](const RoundMessage& m) { return m.payload == 1; });
    }

    /// The full iterative loop for this agent.
    AgentOutcome run(const Scenario& sc) {
        const EvSpec& spec = sc.fleet.at(id_);
        AgentOutcome out;
        out.id = id_;
        AgentState state{Vec(sc.horizon.slots, 0.0), 0.0};
        out.history.push_back(state);
        bool stopped = false;
        for (std::size_t l = 0; l < sc.max_iter; ++l) {
            const auto round = static_cast<std::uint32_t>(l);
            const Vec agg = aggregate(state.x, round);
            double eps = 0.0;
            if (!stopped) {
                eps = local_update(state, spec, sc.baseline, agg, sc.horizon.dt, sc.beta);
                stopped = eps <= sc.eps0;
            }
            out.eps.push_back(eps);
            out.aggregates.push_back(agg);
            out.history.push_back(state);
            if (l + 1 < sc.max_iter && all_stopped(stopped, round)) break;
        }
        out.stopped = stopped;
        out.sent_digest = sent_digest();
        out.slot0_polynomials = slot0_;
        out.dealt_polynomials = std::move(dealt_);
        return out;
    }

private:
    void emit_send(const RoundMessage& m) {
        digest_.update(encode_envelope(m));
        ep_.send(m);
    }

    void emit_broadcast(const RoundMessage& m) {
        digest_.update(encode_envelope(m));
        ep_.broadcast(m);
    }

    template <class Accept>
    void check_complete(const std::vector<RoundMessage>& msgs, std::uint32_t round,
                        const char* what, Accept accept, std::size_t per_sender = 0) {
        const std::size_t n = cfg_.agents();
        const std::size_t slots = per_sender == 0 ? cfg_.horizon.slots : per_sender;
        std::vector<std::size_t> count(n, 0);
        for (const auto& m : msgs) {
            if (m.sender >= n || m.sender == id_ || m.slot >= slots || !accept(m) ||
                ((m.kind == MessageKind::share || m.kind == MessageKind::broadcast) &&
                 m.payload >= cfg_.policy.field().modulus())) {
                throw IntegrityError(round, std::string("malformed ") + what + " message from agent " +
                                                std::to_string(m.sender) + " in round " +
                                                std::to_string(round));
            }
            ++count[m.sender];
        }
        std::string missing;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == id_) continue;
            if (count[j] > slots) {
                throw IntegrityError(round, std::string("duplicate ") + what +
                                                " messages from agent " + std::to_string(j));
            }
            if (count[j] < slots) missing += (missing.empty() ? "" : ",") + std::to_string(j);
        }
        if (!missing.empty()) {
            throw RoundAbort(std::string("round ") + std::to_string(round) + ": missing " + what +
                             " messages from agents " + missing);
        }
    }

    AgentId id_;
    const ProtocolConfig& cfg_;
    Endpoint& ep_;
    std::mt19937_64 rng_;
    AgentRecording rec_;
    Fnv1a digest_;
    std::vector<FieldElement> zero_weights_;
    std::vector<std::vector<FieldElement>> check_weights_;
    std::vector<SecretPolynomial> slot0_;
    std::vector<std::vector<SecretPolynomial>> dealt_;
};

/// Merges per-agent outcomes into a RunResult, checking that every agent
/// reconstructed the same aggregates.
inline RunResult assemble_run(const Scenario& sc, const std::vector<AgentOutcome>& outcomes) {
    if (outcomes.size() != sc.fleet.size()) throw ConfigError("outcome count differs from fleet");
    const std::size_t iters = outcomes.front().eps.size();
    for (const auto& o : outcomes) {
        if (o.eps.size() != iters || o.aggregates.size() != iters || o.history.size() != iters + 1) {
            throw IntegrityError(0, "agents disagree on the number of iterations");
        }
    }
    RunResult r = begin_run(sc);
    for (std::size_t l = 0; l < iters; ++l) {
        const Vec& agg = outcomes.front().aggregates[l];
        Vec eps(outcomes.size());
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            if (outcomes[i].aggregates[l] != agg) {
                throw IntegrityError(static_cast<std::uint32_t>(l),
                                     "agents reconstructed different aggregates in round " +
                                         std::to_string(l));
            }
            r.agents[i] = outcomes[i].history[l + 1];
            eps[i] = outcomes[i].eps[l];
        }
        record_iteration(r, sc, l, agg, eps);
    }
    for (std::size_t i = 0; i < outcomes.size(); ++i) r.stopped[i] = outcomes[i].stopped;
    return r;
}

/// Fingerprint of a run: every agent's sent-message stream, every
/// aggregate and the final primal/dual state.
inline std::uint64_t transcript_digest(const std::vector<AgentOutcome>& outcomes,
                                       const RunResult& r) {
    Fnv1a h;
    for (const auto& o : outcomes) h.update_u64(o.sent_digest);
    h.update_u64(r.iterations);
    for (const auto& agg : r.aggregates) {
        for (double v : agg) h.update_double(v);
    }
    for (const auto& a : r.agents) {
        for (double v : a.x) h.update_double(v);
        h.update_double(a.lambda);
    }
    return h.digest();
}

struct ProtocolOptions {
    BusOptions bus;
    std::vector<AdversarySpec> adversaries;
    /// Messages of agents 0 and 1 on slot 0 for the first `sample_rounds` rounds.
    std::size_t sample_rounds = 0;
    bool record_slot0_polynomials = false;
    InProcessBus::Fault fault;
};

struct ProtocolRun {
    RunResult result;
    std::vector<AgentOutcome> outcomes;
    std::uint64_t transcript_digest = 0;
    std::vector<RoundMessage> sampled_messages;
    std::vector<AdversaryView> views;  // one per requested adversary
};

inline PublicParameters public_parameters(const ProtocolConfig& cfg) {
    return {cfg.agents(), cfg.policy.degree(), cfg.policy.field().modulus(), cfg.codec.delta(),
            cfg.horizon.slots};
}

namespace detail {

inline void check_run_inputs(const Scenario& sc, const ProtocolConfig& cfg) {
    sc.validate();
    cfg.validate();
    if (sc.fleet.size() != cfg.agents()) {
        throw ConfigError("scenario has " + std::to_string(sc.fleet.size()) +
                          " EVs but the protocol is configured for " + std::to_string(cfg.agents()));
    }
    if (sc.horizon.slots != cfg.horizon.slots) throw ConfigError("scenario and protocol horizons differ");
    for (const auto& ev : sc.fleet) {
        for (double r : ev.r_max) {
            if (r > cfg.codec.magnitude_bound()) {
                throw ConfigError("r_max " + std::to_string(r) + " exceeds the codec magnitude bound");
            }
        }
    }
}

/// Runs one callable per agent on its own thread. On failure the bus is
/// aborted so that peers blocked in barriers unwind; the most specific error
/// (anything other than a RoundAbort) is rethrown.
template <class Body>
void run_agents(InProcessBus& bus, std::size_t n, Body body) {
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        threads.emplace_back([&, i] {
            try {
                body(static_cast<AgentId>(i));
            } catch (const std::exception& e) {
                errors[i] = std::current_exception();
                bus.abort(std::string("agent ") + std::to_string(i) + " failed: " + e.what());
            }
        });
    }
    for (auto& t : threads) t.join();
    std::exception_ptr first;
    for (auto& e : errors) {
        if (!e) continue;
        try {
            std::rethrow_exception(e);
        } catch (const RoundAbort&) {
            if (!first) first = e;
        } catch (...) {
            std::rethrow_exception(e);
        }
    }
    if (first) std::rethrow_exception(first);
}

}  // namespace detail

/// One secure-sum round over an in-process bus, every agent on its own thread.
/// Returns each agent's decoded copy of the sum.
inline std::vector<Vec> secure_aggregate_round(const std::vector<Vec>& local,
                                               const ProtocolConfig& cfg, InProcessBus& bus,
                                               std::uint32_t round = 0) {
    cfg.validate();
    if (local.size() != cfg.agents()) throw InvalidInput("one local vector per agent required");
    std::vector<Vec> out(local.size());
    detail::run_agents(bus, local.size(), [&](AgentId i) {
        SecureAgent agent(i, cfg, bus.endpoint(i));
        out[i] = agent.aggregate(local[i], round);
    });
    return out;
}

/// Runs the privacy-preserving loop with every agent on its own thread over
/// an in-process bus.
inline ProtocolRun run_protocol(const Scenario& sc, const ProtocolConfig& cfg,
                                const ProtocolOptions& options = {}) {
    detail::check_run_inputs(sc, cfg);
    const std::size_t n = cfg.agents();
    BusOptions bus_options = options.bus;
    bus_options.modulus = cfg.policy.field().modulus();
    InProcessBus bus(n, bus_options);
    if (options.fault) bus.set_fault(options.fault);

    ProtocolRun run;
    std::vector<TapRegistration> adversary_taps;
    for (const AdversarySpec& spec : options.adversaries) {
        for (AgentId a : spec.coalition) {
            if (a >= n) throw ConfigError("coalition member " + std::to_string(a) + " is not an agent");
        }
        TapRegistration tap;
        tap.kind = spec.mode == AdversaryMode::eavesdropper ? TapKind::eavesdropper : TapKind::insider;
        tap.coalition = spec.coalition;
        tap.filter = [first = spec.first_round, last = spec.last_round](const RoundMessage& m) {
            return m.round >= first && m.round <= last;
        };
        adversary_taps.push_back(tap);
        bus.add_tap(tap);
    }
    std::optional<TapRegistration> sample_tap;
    if (options.sample_rounds > 0) {
        sample_tap.emplace();
        sample_tap->kind = TapKind::insider;
        sample_tap->coalition = {0, 1};
        sample_tap->filter = [rounds = options.sample_rounds](const RoundMessage& m) {
            return m.slot == 0 && m.round < rounds && m.sender <= 1 &&
                   (m.kind == MessageKind::broadcast ||
                    (m.kind == MessageKind::share && m.receiver <= 1));
        };
        bus.add_tap(*sample_tap);
    }

    std::vector<AgentOutcome> outcomes(n);
    std::vector<std::uint32_t> recorded_from(n, 0);
    detail::run_agents(bus, n, [&](AgentId i) {
        AgentRecording rec;
        rec.slot0_polynomials = options.record_slot0_polynomials && i == 0;
        // Insiders keep their own polynomials over the union of requested windows.
        for (const AdversarySpec& spec : options.adversaries) {
            if (spec.mode != AdversaryMode::honest_but_curious) continue;
            if (std::find(spec.coalition.begin(), spec.coalition.end(), i) == spec.coalition.end()) continue;
            if (!rec.all_polynomials) {
                rec.first_round = spec.first_round;
                rec.last_round = spec.last_round;
            } else {
                rec.first_round = std::min(rec.first_round, spec.first_round);
                rec.last_round = std::max(rec.last_round, spec.last_round);
            }
            rec.all_polynomials = true;
        }
        recorded_from[i] = rec.first_round;
        SecureAgent agent(i, cfg, bus.endpoint(i), rec);
        outcomes[i] = agent.run(sc);
    });

    run.result = assemble_run(sc, outcomes);
    run.transcript_digest = transcript_digest(outcomes, run.result);

    if (sample_tap) run.sampled_messages = std::move(*sample_tap->sink);
    for (std::size_t v = 0; v < adversary_taps.size(); ++v) {
        const AdversarySpec& spec = options.adversaries[v];
        AdversaryView view;
        view.mode = spec.mode;
        view.coalition = spec.coalition;
        view.params = public_parameters(cfg);
        view.first_round = spec.first_round;
        view.captured = std::move(*adversary_taps[v].sink);
        if (spec.mode == AdversaryMode::honest_but_curious) {
            view.nodes = cfg.nodes;
            for (AgentId member : spec.coalition) {
                // Re-base the member's recording onto this view's window.
                const auto& o = outcomes.at(member);
                const std::uint32_t rec_first = recorded_from[member];
                auto& polys = view.own_polynomials[member];
                for (std::size_t r = 0; r < o.dealt_polynomials.size(); ++r) {
                    const std::uint64_t round = rec_first + r;
                    if (round >= spec.first_round && round <= spec.last_round) {
                        polys.push_back(o.dealt_polynomials[r]);
                    }
                }
            }
        }
        run.views.push_back(std::move(view));
    }
    run.outcomes = std::move(outcomes);
    return run;
}

}  // namespace ssvf
