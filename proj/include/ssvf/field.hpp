#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ssvf/error.hpp"

namespace ssvf {

namespace detail {

__extension__ using uint128 = unsigned __int128;

inline std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
    return static_cast<std::uint64_t>(static_cast<uint128>(a) * b % m);
}

inline std::uint64_t powmod(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
    std::uint64_t result = 1 % m;
    base %= m;
    while (exp != 0) {
        if (exp & 1U) result = mulmod(result, base, m);
        base = mulmod(base, base, m);
        exp >>= 1U;
    }
    return result;
}

}  // namespace detail

/// Deterministic Miller-Rabin; the witness set below is exact for all n < 2^64.
inline bool is_prime(std::uint64_t n) {
    if (n < 2) return false;
    constexpr std::uint64_t small[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    for (std::uint64_t p : small) {
        if (n % p == 0) return n == p;
    }
    std::uint64_t d = n - 1;
    unsigned r = 0;
    while ((d & 1U) == 0) {
        d >>= 1U;
        ++r;
    }
    for (std::uint64_t a : small) {
        std::uint64_t x = detail::powmod(a, d, n);
        if (x == 1 || x == n - 1) continue;
        bool composite = true;
        for (unsigned i = 1; i < r; ++i) {
            x = detail::mulmod(x, x, n);
            if (x == n - 1) {
                composite = false;
                break;
            }
        }
        if (composite) return false;
    }
    return true;
}

/// Prime modulus e of the field [0, e). Validated on construction.
class FieldPrime {
public:
    static constexpr std::uint64_t kMaxModulus = std::uint64_t{1} << 63U;

    explicit FieldPrime(std::uint64_t modulus) : modulus_(modulus) {
        if (modulus < 5) {
            throw ConfigError("field modulus must be at least 5, got " + std::to_string(modulus));
        }
        if (modulus >= kMaxModulus) {
            throw ConfigError("field modulus must be below 2^63");
        }
        if (!is_prime(modulus)) {
            throw ConfigError("field modulus " + std::to_string(modulus) + " is not prime");
        }
    }

    std::uint64_t modulus() const noexcept { return modulus_; }

    friend bool operator==(const FieldPrime&, const FieldPrime&) = default;

private:
    std::uint64_t modulus_;
};

/// Residue in [0, e). Every operation keeps the value reduced.
class FieldElement {
public:
    FieldElement(std::uint64_t value, const FieldPrime& field)
        : value_(value % field.modulus()), modulus_(field.modulus()) {}

    static FieldElement zero(const FieldPrime& field) { return {0, field}; }
    static FieldElement one(const FieldPrime& field) { return {1, field}; }

    /// Reduces a signed integer, so -1 maps to e-1.
    static FieldElement from_signed(std::int64_t v, const FieldPrime& field) {
        const auto m = static_cast<std::int64_t>(field.modulus());
        std::int64_t r = v % m;
        if (r < 0) r += m;
        return {static_cast<std::uint64_t>(r), field};
    }

    std::uint64_t value() const noexcept { return value_; }
    std::uint64_t modulus() const noexcept { return modulus_; }

    /// Element of the same field holding v mod e.
    FieldElement rebind(std::uint64_t v) const {
        FieldElement r = *this;
        r.value_ = v % modulus_;
        return r;
    }

    bool is_zero() const noexcept { return value_ == 0; }

    friend bool operator==(const FieldElement&, const FieldElement&) = default;

    friend FieldElement operator+(FieldElement a, const FieldElement& b) {
        a.check_same(b);
        std::uint64_t s = a.value_ + b.value_;
        if (s >= a.modulus_) s -= a.modulus_;
        a.value_ = s;
        return a;
    }

    friend FieldElement operator-(FieldElement a, const FieldElement& b) {
        a.check_same(b);
        a.value_ = a.value_ >= b.value_ ? a.value_ - b.value_ : a.value_ + a.modulus_ - b.value_;
        return a;
    }

    friend FieldElement operator*(FieldElement a, const FieldElement& b) {
        a.check_same(b);
        a.value_ = detail::mulmod(a.value_, b.value_, a.modulus_);
        return a;
    }

    FieldElement operator-() const {
        FieldElement r = *this;
        r.value_ = value_ == 0 ? 0 : modulus_ - value_;
        return r;
    }

    FieldElement& operator+=(const FieldElement& b) { return *this = *this + b; }
    FieldElement& operator-=(const FieldElement& b) { return *this = *this - b; }
    FieldElement& operator*=(const FieldElement& b) { return *this = *this * b; }

private:
    void check_same(const FieldElement& other) const {
        if (modulus_ != other.modulus_) {
            throw ConfigError("field modulus mismatch: " + std::to_string(modulus_) + " vs " +
                              std::to_string(other.modulus_));
        }
    }

    std::uint64_t value_;
    std::uint64_t modulus_;
};

inline FieldElement add(const FieldElement& a, const FieldElement& b) { return a + b; }
inline FieldElement mul(const FieldElement& a, const FieldElement& b) { return a * b; }

/// Multiplicative inverse by the extended Euclidean algorithm.
inline FieldElement inv(const FieldElement& a) {
    if (a.is_zero()) throw DivisionByZero();
    const auto m = static_cast<std::int64_t>(a.modulus());
    std::int64_t old_r = static_cast<std::int64_t>(a.value()), r = m;
    std::int64_t old_s = 1, s = 0;
    while (r != 0) {
        const std::int64_t q = old_r / r;
        std::int64_t t = old_r - q * r;
        old_r = r;
        r = t;
        t = old_s - q * s;
        old_s = s;
        s = t;
    }
    // old_r is gcd(a, m) == 1 since m is prime and a != 0.
    std::int64_t x = old_s % m;
    if (x < 0) x += m;
    return a.rebind(static_cast<std::uint64_t>(x));
}

/// Uniform draw from [0, e) using the caller's generator.
template <class Urbg>
FieldElement uniform_element(const FieldPrime& field, Urbg& rng) {
    std::uniform_int_distribution<std::uint64_t> dist(0, field.modulus() - 1);
    return {dist(rng), field};
}

/// Horner evaluation; coeffs[0] is the constant term.
inline FieldElement eval_poly(std::span<const FieldElement> coeffs, const FieldElement& z) {
    if (coeffs.empty()) throw InvalidInput("eval_poly: empty coefficient list");
    FieldElement acc = coeffs.back();
    for (auto it = coeffs.rbegin() + 1; it != coeffs.rend(); ++it) acc = acc * z + *it;
    return acc;
}

/// A point (node, value) on a polynomial; node is the abscissa, never zero
/// when used for sharing.
struct SharePoint {
    FieldElement node;
    FieldElement value;

    friend bool operator==(const SharePoint&, const SharePoint&) = default;
};

namespace detail {

inline void check_interpolation_nodes(std::span<const SharePoint> points, std::size_t count) {
    if (count == 0) throw InvalidInput("interpolation needs at least one point");
    if (count > points.size()) {
        throw InvalidInput("interpolation asked for " + std::to_string(count) + " points, only " +
                           std::to_string(points.size()) + " given");
    }
    for (std::size_t i = 0; i < count; ++i) {
        if (points[i].node.is_zero()) throw InvalidInput("interpolation node equal to zero");
        for (std::size_t j = 0; j < i; ++j) {
            if (points[i].node == points[j].node) {
                throw InvalidInput("duplicate interpolation node " +
                                   std::to_string(points[i].node.value()));
            }
        }
    }
}

}  // namespace detail

/// Value at z of the unique degree-(count-1) polynomial through the first
/// `count` points.
inline FieldElement interpolate_at(std::span<const SharePoint> points, std::size_t count,
                                   const FieldElement& z) {
    detail::check_interpolation_nodes(points, count);
    FieldElement acc = points[0].node.rebind(0);
    for (std::size_t i = 0; i < count; ++i) {
        FieldElement num = acc.rebind(1);
        FieldElement den = acc.rebind(1);
        for (std::size_t j = 0; j < count; ++j) {
            if (j == i) continue;
            num *= z - points[j].node;
            den *= points[i].node - points[j].node;
        }
        acc += points[i].value * num * inv(den);
    }
    return acc;
}

/// Weights w with sum_i w_i * v_i equal to the interpolant at z, for fixed
/// nodes; lets callers reuse the basis across many value vectors.
inline std::vector<FieldElement> lagrange_weights(std::span<const FieldElement> nodes,
                                                  const FieldElement& z) {
    std::vector<FieldElement> w;
    w.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        FieldElement num = z.rebind(1);
        FieldElement den = z.rebind(1);
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            if (j == i) continue;
            if (nodes[j] == nodes[i]) throw InvalidInput("duplicate interpolation node");
            num *= z - nodes[j];
            den *= nodes[i] - nodes[j];
        }
        w.push_back(num * inv(den));
    }
    return w;
}

/// Lagrange basis evaluated at zero: sum_i v_i prod_{j!=i} x_j / (x_j - x_i).
inline FieldElement interpolate_at_zero(std::span<const SharePoint> points, std::size_t count) {
    if (points.empty()) throw InvalidInput("interpolation needs at least one point");
    return interpolate_at(points, count, points[0].node.rebind(0));
}

}  // namespace ssvf
