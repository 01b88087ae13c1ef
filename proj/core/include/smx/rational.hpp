#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "smx/errors.hpp"

namespace smx {

// Exact non-negative rational, kept reduced with a positive denominator.
// Used where drift-free arithmetic matters (learning-rate multipliers,
// compute-per-dimension ratios).
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
        if (den == 0) {
            throw DomainError("rational with zero denominator");
        }
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    static Rational integer(std::int64_t n) { return Rational(n, 1); }

    Rational operator*(const Rational &o) const {
        return Rational(num * o.num, den * o.den);
    }
    Rational operator/(const Rational &o) const {
        if (o.num == 0) {
            throw DomainError("rational division by zero");
        }
        return Rational(num * o.den, den * o.num);
    }
    bool operator==(const Rational &o) const {
        return num == o.num && den == o.den;
    }
    bool operator!=(const Rational &o) const { return !(*this == o); }

    double to_double() const {
        return static_cast<double>(num) / static_cast<double>(den);
    }
    std::string to_string() const {
        if (den == 1) {
            return std::to_string(num);
        }
        return std::to_string(num) + "/" + std::to_string(den);
    }
};

} // namespace smx
