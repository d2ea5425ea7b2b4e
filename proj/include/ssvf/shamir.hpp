#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ssvf/error.hpp"
#include "ssvf/field.hpp"

namespace ssvf {

/// (k, n) sharing with polynomials of degree k: any k+1 shares reconstruct,
/// k or fewer reveal nothing about the constant term.
class SharingPolicy {
public:
    SharingPolicy(std::size_t degree, std::size_t shareholders, FieldPrime field)
        : degree_(degree), shareholders_(shareholders), field_(field) {
        if (degree < 1) throw ConfigError("polynomial degree k must be at least 1");
        if (shareholders < degree + 1) {
            throw ConfigError("need n >= k+1 shareholders (n=" + std::to_string(shareholders) +
                              ", k=" + std::to_string(degree) + ")");
        }
    }

    std::size_t degree() const noexcept { return degree_; }
    std::size_t shareholders() const noexcept { return shareholders_; }
    std::size_t threshold() const noexcept { return degree_ + 1; }
    const FieldPrime& field() const noexcept { return field_; }

private:
    std::size_t degree_;
    std::size_t shareholders_;
    FieldPrime field_;
};

struct SecretPolynomial {
    std::vector<FieldElement> coeffs;  // coeffs[0] is the secret

    const FieldElement& secret() const { return coeffs.front(); }
    std::size_t degree() const { return coeffs.size() - 1; }
    FieldElement operator()(const FieldElement& z) const { return eval_poly(coeffs, z); }
};

struct Dealing {
    SecretPolynomial polynomial;
    std::vector<SharePoint> shares;  // shares[j] = (nodes[j], p(nodes[j]))
};

/// Rejects zero or repeated abscissae and a node count different from n.
inline void validate_nodes(std::span<const FieldElement> nodes, const SharingPolicy& policy) {
    if (nodes.size() != policy.shareholders()) {
        throw InvalidInput("expected " + std::to_string(policy.shareholders()) + " nodes, got " +
                           std::to_string(nodes.size()));
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].modulus() != policy.field().modulus()) {
            throw ConfigError("node field does not match sharing policy");
        }
        if (nodes[i].is_zero()) throw InvalidInput("share node must be nonzero");
        for (std::size_t j = 0; j < i; ++j) {
            if (nodes[i] == nodes[j]) {
                throw InvalidInput("duplicate share node " + std::to_string(nodes[i].value()));
            }
        }
    }
}

/// Shares a polynomial whose non-constant coefficients are supplied.
inline Dealing deal_with_coefficients(const FieldElement& secret,
                                      std::span<const FieldElement> coefficients,
                                      const SharingPolicy& policy,
                                      std::span<const FieldElement> nodes) {
    validate_nodes(nodes, policy);
    if (coefficients.size() != policy.degree()) {
        throw InvalidInput("expected " + std::to_string(policy.degree()) + " coefficients");
    }
    Dealing d;
    d.polynomial.coeffs.reserve(policy.degree() + 1);
    d.polynomial.coeffs.push_back(secret);
    d.polynomial.coeffs.insert(d.polynomial.coeffs.end(), coefficients.begin(), coefficients.end());
    d.shares.reserve(nodes.size());
    for (const auto& node : nodes) d.shares.push_back({node, d.polynomial(node)});
    return d;
}

/// Draws c_1..c_k uniformly from the field (zero included) and shares `secret`.
template <class Urbg>
Dealing deal(const FieldElement& secret, const SharingPolicy& policy,
             std::span<const FieldElement> nodes, Urbg& rng) {
    if (secret.modulus() != policy.field().modulus()) {
        throw ConfigError("secret field does not match sharing policy");
    }
    std::vector<FieldElement> coefficients;
    coefficients.reserve(policy.degree());
    for (std::size_t j = 0; j < policy.degree(); ++j) {
        coefficients.push_back(uniform_element(policy.field(), rng));
    }
    return deal_with_coefficients(secret, coefficients, policy, nodes);
}

/// Interpolates the lowest-indexed k+1 shares at zero.
inline FieldElement reconstruct(std::span<const SharePoint> shares, const SharingPolicy& policy) {
    if (shares.size() < policy.threshold()) {
        throw ThresholdError("reconstruction needs " + std::to_string(policy.threshold()) +
                             " shares, got " + std::to_string(shares.size()));
    }
    return interpolate_at_zero(shares, policy.threshold());
}

/// True iff every share beyond the first k+1 lies on their interpolant.
/// Vacuously true without surplus shares.
inline bool consistency_check(std::span<const SharePoint> shares, const SharingPolicy& policy) {
    const std::size_t t = policy.threshold();
    if (shares.size() <= t) return true;
    for (std::size_t j = t; j < shares.size(); ++j) {
        if (interpolate_at(shares, t, shares[j].node) != shares[j].value) return false;
    }
    return true;
}

}  // namespace ssvf
