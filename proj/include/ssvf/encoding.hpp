#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssvf/error.hpp"
#include "ssvf/field.hpp"

namespace ssvf {

// Real <-> field translation: z = floor(10^delta * theta) mod e, decoded by
// mapping the upper half of the field back to negatives.
class FixedPointCodec {
public:
    static constexpr unsigned kMaxDelta = 15;

    /// `capacity` is the largest number of encoded values that will be summed
    /// before a decode; `magnitude_bound` caps |theta| for every encoded value.
    FixedPointCodec(unsigned delta, FieldPrime field, std::size_t capacity, double magnitude_bound)
        : delta_(delta), field_(field), capacity_(capacity), bound_(magnitude_bound) {
        if (delta > kMaxDelta) {
            throw ConfigError("delta must be at most " + std::to_string(kMaxDelta));
        }
        if (capacity == 0) throw ConfigError("codec capacity must be positive");
        if (!(magnitude_bound > 0.0) || !std::isfinite(magnitude_bound)) {
            throw ConfigError("codec magnitude bound must be positive and finite");
        }
        scale_ = 1;
        for (unsigned i = 0; i < delta; ++i) scale_ *= 10;
        const long double worst = static_cast<long double>(capacity) *
                                  static_cast<long double>(scale_) *
                                  static_cast<long double>(magnitude_bound);
        if (!(worst < static_cast<long double>(field.modulus()) / 2.0L)) {
            throw ConfigError("codec overflow: capacity * 10^delta * bound = " +
                              std::to_string(static_cast<double>(worst)) +
                              " must stay below e/2 = " +
                              std::to_string(static_cast<double>(field.modulus()) / 2.0));
        }
    }

    unsigned delta() const noexcept { return delta_; }
    const FieldPrime& field() const noexcept { return field_; }
    std::size_t capacity() const noexcept { return capacity_; }
    double magnitude_bound() const noexcept { return bound_; }
    std::int64_t scale() const noexcept { return scale_; }

    /// floor(10^delta * theta) as a signed integer.
    std::int64_t to_scaled(double theta) const {
        if (!(std::fabs(theta) <= bound_)) {
            throw RangeError("value " + std::to_string(theta) + " exceeds codec magnitude bound " +
                             std::to_string(bound_));
        }
        return static_cast<std::int64_t>(std::floor(static_cast<double>(scale_) * theta));
    }

    double from_scaled(std::int64_t scaled) const {
        return static_cast<double>(scaled) / static_cast<double>(scale_);
    }

    FieldElement encode(double theta) const {
        return FieldElement::from_signed(to_scaled(theta), field_);
    }

    /// phi(z): z - e when z >= e/2, z otherwise.
    std::int64_t to_signed(const FieldElement& z) const {
        if (z.modulus() != field_.modulus()) throw ConfigError("decode: field modulus mismatch");
        const std::uint64_t v = z.value();
        if (2 * v >= field_.modulus()) {
            return -static_cast<std::int64_t>(field_.modulus() - v);
        }
        return static_cast<std::int64_t>(v);
    }

    double decode(const FieldElement& z) const { return from_scaled(to_signed(z)); }

    std::vector<FieldElement> encode_vector(std::span<const double> v) const {
        std::vector<FieldElement> out;
        out.reserve(v.size());
        for (double x : v) out.push_back(encode(x));
        return out;
    }

    std::vector<double> decode_vector(std::span<const FieldElement> z) const {
        std::vector<double> out;
        out.reserve(z.size());
        for (const auto& e : z) out.push_back(decode(e));
        return out;
    }

private:
    unsigned delta_;
    FieldPrime field_;
    std::size_t capacity_;
    double bound_;
    std::int64_t scale_ = 1;
};

}  // namespace ssvf
