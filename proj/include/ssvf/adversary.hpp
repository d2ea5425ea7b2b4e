#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssvf/error.hpp"
#include "ssvf/field.hpp"
#include "ssvf/protocol.hpp"
#include "ssvf/shamir.hpp"
#include "ssvf/wire.hpp"

namespace ssvf {

/// Enumeration budget for exhaustive certificates.
inline constexpr std::uint64_t kExhaustiveBudget = 2'000'000;

struct InsiderCertificate {
    std::size_t points_held = 0;  // evaluations of the target polynomial at known nodes
    std::size_t threshold = 0;
    std::size_t outsiders = 0;  // agents outside the coalition, target included
    bool exhaustive = false;
    /// Exhaustive mode: consistent (secret, c_1..c_k) tuples for each candidate secret.
    std::vector<std::uint64_t> completions_per_secret;
    /// Completions per candidate secret are e^free_dimensions.
    std::size_t free_dimensions = 0;
    /// Degree-k polynomials that agree with every held point but carry different secrets.
    std::vector<SecretPolynomial> witnesses;
    /// u with u(0)=1 and u(alpha_c)=0 for every member: adding d*u to the target's
    /// polynomial and -d*u to the partner's leaves the coalition's view unchanged.
    std::vector<FieldElement> shift;
    std::optional<AgentId> shift_partner;

    bool secret_independent() const {
        if (!exhaustive) return true;
        return std::adjacent_find(completions_per_secret.begin(), completions_per_secret.end(),
                                  std::not_equal_to<>()) == completions_per_secret.end();
    }
};

struct EavesdropperCertificate {
    std::size_t evaluations_known = 0;  // values of the target polynomial, abscissae unknown
    std::size_t nodes_known = 0;
    bool exhaustive = false;
    std::uint64_t assignments_checked = 0;
    std::uint64_t consistent_assignments = 0;
    std::vector<std::uint64_t> candidate_secrets;  // exhaustive mode, sorted and distinct
    double log2_search_space = 0.0;                 // injective node assignments
};

struct AttackResult {
    AgentId target = 0;
    std::uint32_t round = 0;
    std::size_t certificate_slot = 0;
    bool recovered = false;
    std::string method;
    std::vector<std::uint64_t> encoded;  // recovered residues per slot
    Vec profile;                          // decoded recovered profile, kW
    std::optional<InsiderCertificate> insider;
    std::optional<EavesdropperCertificate> eavesdropper;

    std::string describe() const {
        std::ostringstream os;
        os << "target " << target << ", round " << round << ": ";
        if (recovered) {
            os << "secret recovered by " << method << " (" << profile.size() << " slots)";
            return os.str();
        }
        os << "insufficient information";
        if (insider) {
            os << "; holds " << insider->points_held << " of " << insider->threshold
               << " points needed";
            if (insider->exhaustive) {
                os << "; exhaustive count of completions per secret = "
                   << (insider->completions_per_secret.empty() ? 0
                                                               : insider->completions_per_secret[0])
                   << (insider->secret_independent() ? " for every candidate" : " (VARIES)");
            } else {
                os << "; every candidate secret has e^" << insider->free_dimensions
                   << " completions";
            }
            os << "; " << insider->witnesses.size() << " witness polynomials";
            if (insider->shift_partner) {
                os << "; view invariant under shift with agent " << *insider->shift_partner;
            }
        }
        if (eavesdropper) {
            os << "; " << eavesdropper->evaluations_known
               << " evaluations of the target polynomial at unknown nodes";
            if (eavesdropper->exhaustive) {
                os << "; " << eavesdropper->consistent_assignments << " of "
                   << eavesdropper->assignments_checked << " node assignments consistent, "
                   << eavesdropper->candidate_secrets.size() << " distinct candidate secrets";
            } else {
                os << "; node search space 2^" << std::lround(eavesdropper->log2_search_space)
                   << ", consistent assignments come in affine orbits with distinct secrets";
            }
        }
        return os.str();
    }
};

/// Payloads of one (round, slot), indexed by agent.
struct SlotTranscript {
    std::vector<std::vector<std::optional<std::uint64_t>>> share;  // [dealer][receiver]
    std::vector<std::optional<std::uint64_t>> broadcast;
};

inline std::vector<SlotTranscript> round_transcript(const AdversaryView& view, std::uint32_t round) {
    const std::size_t n = view.params.agents;
    std::vector<SlotTranscript> slots(view.params.slots);
    for (auto& s : slots) {
        s.share.assign(n, std::vector<std::optional<std::uint64_t>>(n));
        s.broadcast.assign(n, std::nullopt);
    }
    for (const auto& m : view.captured) {
        if (m.round != round || m.slot >= slots.size() || m.sender >= n) continue;
        if (m.kind == MessageKind::share && m.receiver < n) {
            slots[m.slot].share[m.sender][m.receiver] = m.payload;
        } else if (m.kind == MessageKind::broadcast) {
            slots[m.slot].broadcast[m.sender] = m.payload;
        }
    }
    return slots;
}

namespace detail {

inline double decode_residue(std::uint64_t z, const PublicParameters& p) {
    const std::int64_t signed_value = 2 * z >= p.modulus
                                          ? static_cast<std::int64_t>(z) - static_cast<std::int64_t>(p.modulus)
                                          : static_cast<std::int64_t>(z);
    return static_cast<double>(signed_value) / std::pow(10.0, static_cast<double>(p.delta));
}

/// base^exp, or nullopt when it exceeds `cap`.
inline std::optional<std::uint64_t> bounded_pow(std::uint64_t base, std::size_t exp, std::uint64_t cap) {
    std::uint64_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (r > cap / base) return std::nullopt;
        r *= base;
    }
    return r;
}

/// Multiplies polynomial `p` (ascending coefficients) by (z - root).
inline void mul_linear(std::vector<FieldElement>& p, const FieldElement& root) {
    std::vector<FieldElement> out(p.size() + 1, root.rebind(0));
    for (std::size_t i = 0; i < p.size(); ++i) {
        out[i + 1] += p[i];
        out[i] -= p[i] * root;
    }
    p = std::move(out);
}

/// Coefficients of the interpolant through `points`, padded to `length`.
inline std::vector<FieldElement> interpolate_coefficients(std::span<const SharePoint> points,
                                                          std::size_t length) {
    const FieldElement zero = points.front().node.rebind(0);
    std::vector<FieldElement> acc(std::max(length, points.size()), zero);
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<FieldElement> basis{zero.rebind(1)};
        FieldElement den = zero.rebind(1);
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (j == i) continue;
            mul_linear(basis, points[j].node);
            den *= points[i].node - points[j].node;
        }
        const FieldElement scale = points[i].value * inv(den);
        for (std::size_t c = 0; c < basis.size(); ++c) acc[c] += basis[c] * scale;
    }
    return acc;
}

/// All n evaluations of each dealer's polynomial visible on the wire: the
/// self-share follows from the dealer's broadcast minus shares it received.
inline std::vector<std::optional<std::vector<FieldElement>>> wire_evaluations(
    const SlotTranscript& s, const FieldPrime& field) {
    const std::size_t n = s.broadcast.size();
    std::vector<std::optional<std::vector<FieldElement>>> out(n);
    for (std::size_t d = 0; d < n; ++d) {
        std::vector<FieldElement> y(n, FieldElement::zero(field));
        bool complete = s.broadcast[d].has_value();
        FieldElement self = complete ? FieldElement(*s.broadcast[d], field) : y[0];
        for (std::size_t j = 0; j < n && complete; ++j) {
            if (j == d) continue;
            if (!s.share[d][j] || !s.share[j][d]) {
                complete = false;
                break;
            }
            y[j] = FieldElement(*s.share[d][j], field);
            self -= FieldElement(*s.share[j][d], field);
        }
        if (!complete) continue;
        y[d] = self;
        out[d] = std::move(y);
    }
    return out;
}

inline bool on_degree_k(std::span<const FieldElement> nodes, std::span<const FieldElement> values,
                        std::size_t degree) {
    std::vector<SharePoint> pts;
    for (std::size_t j = 0; j < nodes.size(); ++j) pts.push_back({nodes[j], values[j]});
    for (std::size_t j = degree + 1; j < pts.size(); ++j) {
        if (interpolate_at(pts, degree + 1, pts[j].node) != pts[j].value) return false;
    }
    return true;
}

inline InsiderCertificate insider_certificate(const AdversaryView& view, AgentId target,
                                              const std::vector<SharePoint>& held,
                                              const FieldPrime& field) {
    const std::size_t k = view.params.degree;
    const std::size_t n = view.params.agents;
    InsiderCertificate cert;
    cert.points_held = held.size();
    cert.threshold = k + 1;
    cert.outsiders = n - view.coalition.size();
    cert.free_dimensions = k - held.size();
    const std::uint64_t e = field.modulus();

    if (const auto total = bounded_pow(e, k + 1, kExhaustiveBudget)) {
        cert.exhaustive = true;
        cert.completions_per_secret.assign(e, 0);
        std::vector<FieldElement> coeffs(k + 1, FieldElement::zero(field));
        for (std::uint64_t idx = 0; idx < *total; ++idx) {
            std::uint64_t rest = idx;
            for (auto& c : coeffs) {
                c = FieldElement(rest % e, field);
                rest /= e;
            }
            const bool fits = std::all_of(held.begin(), held.end(), [&](const SharePoint& p) {
                return eval_poly(coeffs, p.node) == p.value;
            });
            if (fits) ++cert.completions_per_secret[coeffs[0].value()];
        }
    }

    // Witnesses: pin the secret, the held points and k - h free points at zero value.
    std::set<std::uint64_t> candidates{0, 1, e - 1, e / 2};
    std::set<std::uint64_t> used{0};
    for (const auto& p : held) used.insert(p.node.value());
    for (std::uint64_t s : candidates) {
        std::vector<SharePoint> pts{{FieldElement::zero(field), FieldElement(s, field)}};
        pts.insert(pts.end(), held.begin(), held.end());
        for (std::uint64_t z = 1; pts.size() < k + 1; ++z) {
            if (!used.count(z)) pts.push_back({FieldElement(z, field), FieldElement::zero(field)});
        }
        SecretPolynomial w{interpolate_coefficients(pts, k + 1)};
        cert.witnesses.push_back(std::move(w));
    }

    if (cert.outsiders >= 2 && view.coalition.size() <= k) {
        std::vector<SharePoint> pts{{FieldElement::zero(field), FieldElement::one(field)}};
        for (AgentId c : view.coalition) pts.push_back({view.nodes.at(c), FieldElement::zero(field)});
        cert.shift = interpolate_coefficients(pts, k + 1);
        for (std::size_t a = 0; a < n; ++a) {
            const bool member = std::find(view.coalition.begin(), view.coalition.end(), a) !=
                                view.coalition.end();
            if (!member && a != target) {
                cert.shift_partner = static_cast<AgentId>(a);
                break;
            }
        }
    }
    return cert;
}

inline EavesdropperCertificate eavesdropper_certificate(const SlotTranscript& s, AgentId target,
                                                        const PublicParameters& p,
                                                        const FieldPrime& field) {
    const std::size_t n = p.agents;
    EavesdropperCertificate cert;
    const auto evals = wire_evaluations(s, field);
    if (evals[target]) cert.evaluations_known = n;
    for (std::size_t j = 0; j < n; ++j) {
        cert.log2_search_space += std::log2(static_cast<double>(field.modulus() - 1 - j));
    }
    // Exhaustive search over injective assignments of nonzero nodes.
    std::uint64_t space = 1;
    bool small = true;
    for (std::size_t j = 0; j < n && small; ++j) {
        const std::uint64_t f = field.modulus() - 1 - j;
        if (f == 0 || space > kExhaustiveBudget / f) small = false;
        else space *= f;
    }
    if (!small || !evals[target]) return cert;
    cert.exhaustive = true;

    std::set<std::uint64_t> secrets;
    std::vector<FieldElement> nodes(n, FieldElement::zero(field));
    std::vector<bool> taken(field.modulus(), false);
    auto recurse = [&](auto&& self, std::size_t j) -> void {
        if (j == n) {
            ++cert.assignments_checked;
            for (std::size_t d = 0; d < n; ++d) {
                if (evals[d] && !on_degree_k(nodes, *evals[d], p.degree)) return;
            }
            ++cert.consistent_assignments;
            std::vector<SharePoint> pts;
            for (std::size_t i = 0; i <= p.degree; ++i) pts.push_back({nodes[i], (*evals[target])[i]});
            secrets.insert(interpolate_at_zero(pts, pts.size()).value());
            return;
        }
        for (std::uint64_t v = 1; v < field.modulus(); ++v) {
            if (taken[v]) continue;
            taken[v] = true;
            nodes[j] = FieldElement(v, field);
            self(self, j + 1);
            taken[v] = false;
        }
    };
    recurse(recurse, 0);
    cert.candidate_secrets.assign(secrets.begin(), secrets.end());
    return cert;
}

}  // namespace detail

/// Replays the strongest passive attack available to the view's holder on
/// one round. Recovery is attempted on every slot; the certificate is built
/// for `certificate_slot`.
inline AttackResult attack_reconstruct(const AdversaryView& view, AgentId target,
                                       std::uint32_t round, std::size_t certificate_slot = 0) {
    const PublicParameters& p = view.params;
    if (target >= p.agents) throw InvalidInput("attack target outside the agent range");
    if (certificate_slot >= p.slots) throw InvalidInput("certificate slot outside the horizon");
    const FieldPrime field(p.modulus);
    const auto transcript = round_transcript(view, round);

    AttackResult result;
    result.target = target;
    result.round = round;
    result.certificate_slot = certificate_slot;

    if (view.mode == AdversaryMode::eavesdropper) {
        // Without the nodes the only computable quantity is the set of
        // evaluations; exhaustive search decides recovery on tiny fields.
        result.eavesdropper =
            detail::eavesdropper_certificate(transcript[certificate_slot], target, p, field);
        const auto& c = *result.eavesdropper;
        if (c.exhaustive && c.candidate_secrets.size() == 1) {
            result.recovered = true;
            result.method = "exhaustive node search";
            result.encoded = {c.candidate_secrets[0]};
            result.profile = {detail::decode_residue(c.candidate_secrets[0], p)};
        }
        return result;
    }

    const auto& members = view.coalition;
    const bool target_inside = std::find(members.begin(), members.end(), target) != members.end();
    const std::size_t local_round = round - view.first_round;
    auto own_poly = [&](AgentId a, std::size_t slot) -> const SecretPolynomial& {
        return view.own_polynomials.at(a).at(local_round).at(slot);
    };

    std::vector<std::uint64_t> encoded;
    std::string method;
    auto held_points = [&](std::size_t t) {
        std::vector<SharePoint> held;
        for (AgentId c : members) {
            const auto& share = transcript[t].share[target][c];
            if (c != target && share) held.push_back({view.nodes.at(c), FieldElement(*share, field)});
        }
        return held;
    };
    for (std::size_t t = 0; t < p.slots; ++t) {
        const SlotTranscript& s = transcript[t];
        std::optional<FieldElement> secret;
        if (target_inside) {
            secret = own_poly(target, t).secret();
            method = "own polynomial";
        }
        const auto held = held_points(t);
        if (!secret && held.size() >= p.degree + 1) {
            secret = interpolate_at_zero(held, p.degree + 1);
            method = "interpolation of held points";
        }
        if (!secret && members.size() + 1 == p.agents) {
            std::vector<SharePoint> pts;
            for (std::size_t a = 0; a < p.agents && pts.size() <= p.degree; ++a) {
                if (s.broadcast[a]) pts.push_back({view.nodes.at(a), FieldElement(*s.broadcast[a], field)});
            }
            if (pts.size() == p.degree + 1) {
                FieldElement sum = interpolate_at_zero(pts, pts.size());
                for (AgentId c : members) sum -= own_poly(c, t).secret();
                secret = sum;
                method = "aggregate minus coalition secrets";
            }
        }
        if (!secret) break;
        encoded.push_back(secret->value());
    }

    if (encoded.size() == p.slots) {
        result.recovered = true;
        result.method = method;
        result.encoded = encoded;
        for (auto z : encoded) result.profile.push_back(detail::decode_residue(z, p));
        return result;
    }
    result.insider = detail::insider_certificate(view, target, held_points(certificate_slot), field);
    return result;
}

struct TranslationWitness {
    bool consistent = false;  // every dealer's evaluations fit a degree-k polynomial
    std::uint64_t secret = 0;  // the target secret implied by the shifted nodes
};

/// Checks the alternative node assignment alpha_j + shift against every
/// dealer's wire-visible evaluations. Validation helper: it needs the true
/// nodes, which the eavesdropper itself never holds. A consistent witness
/// with a different secret shows the payloads alone do not pin the secret.
inline TranslationWitness node_translation_witness(const AdversaryView& view, AgentId target,
                                                   std::uint32_t round, std::size_t slot,
                                                   std::span<const FieldElement> true_nodes,
                                                   std::uint64_t shift) {
    const PublicParameters& p = view.params;
    const FieldPrime field(p.modulus);
    const auto transcript = round_transcript(view, round);
    const auto evals = detail::wire_evaluations(transcript.at(slot), field);
    TranslationWitness w;
    std::vector<FieldElement> nodes;
    for (const auto& a : true_nodes) {
        nodes.push_back(a + FieldElement(shift % p.modulus, field));
        if (nodes.back().is_zero()) return w;
    }
    for (const auto& e : evals) {
        if (!e || !detail::on_degree_k(nodes, *e, p.degree)) return w;
    }
    std::vector<SharePoint> pts;
    for (std::size_t i = 0; i <= p.degree; ++i) pts.push_back({nodes[i], (*evals[target])[i]});
    w.consistent = true;
    w.secret = interpolate_at_zero(pts, pts.size()).value();
    return w;
}

/// Exhaustive threshold census over one node subset: for every polynomial of
/// degree k, tally (observed shares, secret). The sharing leaks nothing iff
/// every observable share tuple is produced by the same number of
/// polynomials for each candidate secret.
struct CompletionCensus {
    std::size_t subset_size = 0;
    bool secret_independent = false;
    std::uint64_t completions = 0;  // polynomials per (share tuple, secret)
    std::uint64_t polynomials = 0;
};

inline CompletionCensus completion_census(const FieldPrime& field, std::size_t degree,
                                          std::span<const FieldElement> subset) {
    const std::uint64_t e = field.modulus();
    const auto total = detail::bounded_pow(e, degree + 1, 100'000'000);
    const auto tuples = detail::bounded_pow(e, subset.size() + 1, 100'000'000);
    if (!total || !tuples) throw InvalidInput("field too large for an exhaustive census");
    if (subset.size() > degree) throw InvalidInput("census subsets must hold at most k shares");

    std::vector<std::uint32_t> table(*tuples, 0);
    std::vector<FieldElement> coeffs(degree + 1, FieldElement::zero(field));
    for (std::uint64_t idx = 0; idx < *total; ++idx) {
        std::uint64_t rest = idx;
        for (auto& c : coeffs) {
            c = FieldElement(rest % e, field);
            rest /= e;
        }
        std::uint64_t key = coeffs[0].value();
        for (const auto& node : subset) key = key * e + eval_poly(coeffs, node).value();
        ++table[key];
    }
    CompletionCensus c;
    c.subset_size = subset.size();
    c.polynomials = *total;
    c.completions = table[0];
    c.secret_independent = std::all_of(table.begin(), table.end(),
                                       [&](std::uint32_t v) { return v == table[0]; });
    return c;
}

}  // namespace ssvf
