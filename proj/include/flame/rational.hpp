#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace flame {

// Exact rational scalar for the symbolic layer. Overflow is not a concern at
// the magnitudes the derivations produce (coefficients stay tiny).
struct Rat {
    std::int64_t num = 0;
    std::int64_t den = 1;

    constexpr Rat() = default;
    constexpr Rat(std::int64_t n) : num(n), den(1) {}
    Rat(std::int64_t n, std::int64_t d) : num(n), den(d) { reduce(); }

    void reduce() {
        if (den == 0) throw std::domain_error("rational with zero denominator");
        if (den < 0) { num = -num; den = -den; }
        std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
        if (num == 0) den = 1;
    }

    bool is_zero() const { return num == 0; }
    bool is_one() const { return num == 1 && den == 1; }
    bool is_minus_one() const { return num == -1 && den == 1; }

    friend Rat operator*(Rat a, Rat b) { return Rat(a.num * b.num, a.den * b.den); }
    friend Rat operator+(Rat a, Rat b) { return Rat(a.num * b.den + b.num * a.den, a.den * b.den); }
    friend Rat operator-(Rat a) { return Rat(-a.num, a.den); }
    friend bool operator==(Rat a, Rat b) { return a.num == b.num && a.den == b.den; }
    friend bool operator<(Rat a, Rat b) { return a.num * b.den < b.num * a.den; }

    Rat inverse() const { return Rat(den, num); }
    double value() const { return double(num) / double(den); }

    std::string str() const {
        if (den == 1) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(den);
    }
};

} // namespace flame
