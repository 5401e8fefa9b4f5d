#pragma once

#include <stdexcept>
#include <string>

namespace flame {

// Symbolic extent: coeff*var + constant, where var is one of n (problem
// size), m (total iteration count) or k (width of the traversed region).
// The zero extent is var==0, constant==0.
struct SymDim {
    char var = 0;  // 0 means no variable
    int coeff = 0;
    int constant = 0;

    constexpr SymDim() = default;
    constexpr SymDim(int c) : var(0), coeff(0), constant(c) {}
    constexpr SymDim(char v, int co, int c) : var(v), coeff(co), constant(c) {
    }

    static SymDim sym(char v, int plus = 0) { return SymDim(v, 1, plus); }

    bool is_zero() const { return coeff == 0 && constant == 0; }
    bool is_const() const { return var == 0 || coeff == 0; }
    bool is_one() const { return is_const() && constant == 1; }

    // Two extents are interchangeable when they grow with the same variable;
    // constant extents must agree exactly. k+2 matches k, 1 does not match k,
    // and distinct variables never match.
    static bool match(const SymDim& a, const SymDim& b) {
        bool ca = a.is_const(), cb = b.is_const();
        if (ca != cb) return false;
        if (ca) return a.constant == b.constant;
        return a.var == b.var;
    }

    friend bool operator==(const SymDim& a, const SymDim& b) {
        if (a.is_const() && b.is_const()) return a.constant == b.constant;
        return a.var == b.var && a.coeff == b.coeff && a.constant == b.constant;
    }
    friend bool operator!=(const SymDim& a, const SymDim& b) { return !(a == b); }

    friend SymDim operator+(const SymDim& a, const SymDim& b) {
        if (a.is_const()) return SymDim(b.var, b.coeff, a.constant + b.constant);
        if (b.is_const()) return SymDim(a.var, a.coeff, a.constant + b.constant);
        if (a.var != b.var) throw std::domain_error("adding extents of different variables");
        return SymDim(a.var, a.coeff + b.coeff, a.constant + b.constant);
    }

    SymDim plus(int c) const { return SymDim(var, coeff, constant + c); }

    // Concrete value under an assignment of the variable.
    int eval(int n, int m, int k) const {
        int v = constant;
        if (coeff != 0) {
            int base = var == 'n' ? n : var == 'm' ? m : k;
            v += coeff * base;
        }
        return v;
    }

    std::string str() const {
        if (is_const()) return std::to_string(constant);
        std::string s;
        if (coeff != 1) s += std::to_string(coeff) + "*";
        s += var;
        if (constant > 0) s += "+" + std::to_string(constant);
        return s;
    }
};

} // namespace flame
