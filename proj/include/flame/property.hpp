#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flame/algebra.hpp"
#include "flame/term.hpp"

namespace flame {

enum class PropertyName {
    Matrix, Vector, Scalar, Square, Input, Output, FirstColumnInput,
    NonSingular, Symmetric, SPD,
    Diagonal, LowerTriangular, UpperTriangular, StrictlyUpperTriangular,
    UpperDiagonal, LowerDiagonal,
    DiagonalR, UpperDiagonalR, LowerDiagonalR,
    UpperTrapezoidal, LowerTrapezoidal,
    UpperTriangularR, LowerTriangularR,
    ZeroDiagonal, Orthogonal, Orthonormal, UpperHessenberg, Zero,
};

inline const char* property_name(PropertyName p) {
    switch (p) {
        case PropertyName::Matrix: return "Matrix";
        case PropertyName::Vector: return "Vector";
        case PropertyName::Scalar: return "Scalar";
        case PropertyName::Square: return "Square";
        case PropertyName::Input: return "Input";
        case PropertyName::Output: return "Output";
        case PropertyName::FirstColumnInput: return "FirstColumnInput";
        case PropertyName::NonSingular: return "NonSingular";
        case PropertyName::Symmetric: return "Symmetric";
        case PropertyName::SPD: return "SPD";
        case PropertyName::Diagonal: return "Diagonal";
        case PropertyName::LowerTriangular: return "LowerTriangular";
        case PropertyName::UpperTriangular: return "UpperTriangular";
        case PropertyName::StrictlyUpperTriangular: return "StrictlyUpperTriangular";
        case PropertyName::UpperDiagonal: return "UpperDiagonal";
        case PropertyName::LowerDiagonal: return "LowerDiagonal";
        case PropertyName::DiagonalR: return "DiagonalR";
        case PropertyName::UpperDiagonalR: return "UpperDiagonalR";
        case PropertyName::LowerDiagonalR: return "LowerDiagonalR";
        case PropertyName::UpperTrapezoidal: return "UpperTrapezoidal";
        case PropertyName::LowerTrapezoidal: return "LowerTrapezoidal";
        case PropertyName::UpperTriangularR: return "UpperTriangularR";
        case PropertyName::LowerTriangularR: return "LowerTriangularR";
        case PropertyName::ZeroDiagonal: return "ZeroDiagonal";
        case PropertyName::Orthogonal: return "Orthogonal";
        case PropertyName::Orthonormal: return "Orthonormal";
        case PropertyName::UpperHessenberg: return "UpperHessenberg";
        case PropertyName::Zero: return "Zero";
    }
    return "?";
}

inline std::optional<PropertyName> property_from_name(const std::string& s) {
    static const std::map<std::string, PropertyName> tbl = [] {
        std::map<std::string, PropertyName> m;
        for (int i = 0; i <= int(PropertyName::Zero); ++i)
            m[property_name(PropertyName(i))] = PropertyName(i);
        return m;
    }();
    auto it = tbl.find(s);
    if (it == tbl.end()) return std::nullopt;
    return it->second;
}

// Band of possibly-nonzero entries: lo <= j - i <= hi. INF encodes an
// unbounded side; an empty band (lo > hi) is the zero matrix.
struct Band {
    static constexpr int INF = 1 << 20;
    int lo = -INF, hi = INF;

    static Band full() { return {-INF, INF}; }
    static Band none() { return {INF, -INF}; }
    static Band diag() { return {0, 0}; }

    bool is_full() const { return lo <= -INF && hi >= INF; }
    bool empty() const { return lo > hi; }

    friend Band operator+(Band a, Band b) {  // band of a product
        if (a.empty() || b.empty()) return none();
        int lo = (a.lo <= -INF || b.lo <= -INF) ? -INF : a.lo + b.lo;
        int hi = (a.hi >= INF || b.hi >= INF) ? INF : a.hi + b.hi;
        return {lo, hi};
    }
    Band hull(Band b) const {  // band of a sum
        if (empty()) return b;
        if (b.empty()) return *this;
        return {std::min(lo, b.lo), std::max(hi, b.hi)};
    }
    Band transposed() const {
        if (empty()) return *this;
        int nlo = hi >= INF ? -INF : -hi;
        int nhi = lo <= -INF ? INF : -lo;
        return {nlo, nhi};
    }
    Band inverse() const {  // triangularity survives inversion; bandwidth does not
        if (lo >= 0 && hi >= 0) return {0, INF};
        if (lo <= 0 && hi <= 0) return {-INF, 0};
        return full();
    }
    // shift when restricting to a block whose top-left corner sits at
    // (rowStart, colStart) of the parent
    Band local(int row_start_minus_col_start) const {
        if (empty()) return *this;
        int d = row_start_minus_col_start;
        int nlo = lo <= -INF ? -INF : lo + d;
        int nhi = hi >= INF ? INF : hi + d;
        return {nlo, nhi};
    }
};

// Band encoded by a shape property, independent of matrix extent.
inline std::optional<Band> band_of_property(PropertyName p) {
    using P = PropertyName;
    switch (p) {
        case P::Diagonal: case P::DiagonalR: return Band{0, 0};
        case P::UpperDiagonal: case P::UpperDiagonalR: return Band{1, 1};
        case P::LowerDiagonal: case P::LowerDiagonalR: return Band{-1, -1};
        case P::UpperTriangular: case P::UpperTriangularR: case P::UpperTrapezoidal:
            return Band{0, Band::INF};
        case P::LowerTriangular: case P::LowerTriangularR: case P::LowerTrapezoidal:
            return Band{-Band::INF, 0};
        case P::StrictlyUpperTriangular: return Band{1, Band::INF};
        case P::UpperHessenberg: return Band{-1, Band::INF};
        case P::Zero: return Band::none();
        default: return std::nullopt;
    }
}

// Name for a band given the subject's shape. rows ? cols is resolved with
// symbolic dims; returns nullopt when the band imposes no constraint or no
// vocabulary name fits.
inline std::optional<PropertyName> property_for_band(Band b, const Dims& d) {
    using P = PropertyName;
    if (b.empty()) return P::Zero;
    if (b.is_full()) return std::nullopt;
    bool square = d.first == d.second;
    bool rows_gt = false, rows_lt = false;
    if (!square) {
        // compare symbolically: equal var -> compare constants; n vs k-ish is
        // not comparable, leave both false (treated as square-name fallback)
        if (SymDim::match(d.first, d.second)) {
            rows_gt = d.first.constant > d.second.constant;
            rows_lt = d.first.constant < d.second.constant;
        }
    }
    if (b.lo == 0 && b.hi == 0) {
        if (square) return P::Diagonal;
        return P::DiagonalR;
    }
    if (b.lo == 1 && b.hi == 1) return square ? P::UpperDiagonal : P::UpperDiagonalR;
    if (b.lo == -1 && b.hi == -1) return square ? P::LowerDiagonal : P::LowerDiagonalR;
    if (b.lo >= 1) return square ? std::optional<P>(P::StrictlyUpperTriangular) : std::nullopt;
    if (b.lo >= 0) {
        if (square) return P::UpperTriangular;
        if (rows_gt) return P::UpperTriangularR;
        if (rows_lt) return P::UpperTrapezoidal;
        return std::nullopt;
    }
    if (b.hi <= 0) {
        if (square) return P::LowerTriangular;
        if (rows_lt) return P::LowerTriangularR;
        if (rows_gt) return P::LowerTrapezoidal;
        return std::nullopt;
    }
    if (b.lo == -1) return square ? std::optional<P>(P::UpperHessenberg) : std::nullopt;
    return std::nullopt;
}

struct Property {
    PropertyName name;
    TermPtr subject;

    std::string key() const { return std::string(property_name(name)) + "[" + key_of(subject) + "]"; }
    std::string str() const { return std::string(property_name(name)) + "[" + print_term(subject) + "]"; }
};

// Insertion-ordered set of properties keyed canonically. Band-family subjects
// are stored sign-stripped (a band is insensitive to scaling by -1).
struct PropertySet {
    std::vector<Property> items;
    std::set<std::string> keys;

    static bool sign_insensitive(PropertyName p) {
        return band_of_property(p).has_value() || p == PropertyName::NonSingular ||
               p == PropertyName::Symmetric || p == PropertyName::ZeroDiagonal ||
               p == PropertyName::Zero;
    }

    static Property canon(Property p) {
        if (sign_insensitive(p.name)) p.subject = Algebra::strip_sign(p.subject);
        return p;
    }

    bool add(Property p) {
        p = canon(std::move(p));
        auto k = p.key();
        if (keys.count(k)) return false;
        keys.insert(k);
        items.push_back(std::move(p));
        return true;
    }

    bool contains(const Property& p) const { return keys.count(canon(p).key()) != 0; }
    bool contains(PropertyName n, const TermPtr& subject) const { return contains({n, subject}); }

    bool empty() const { return items.empty(); }
    size_t size() const { return items.size(); }
    auto begin() const { return items.begin(); }
    auto end() const { return items.end(); }

    std::vector<Property> with_name(PropertyName n) const {
        std::vector<Property> out;
        for (auto& p : items)
            if (p.name == n) out.push_back(p);
        return out;
    }
};

// Best-known band of a term, combining structural constants, stored
// properties and band algebra over products/sums/inverses/transposes.
inline Band band_of_term(const Algebra& alg, const PropertySet& props, const TermPtr& t0) {
    TermPtr t = Algebra::strip_sign(t0);
    Band best = Band::full();
    for (auto& p : props.items) {
        auto b = band_of_property(p.name);
        if (!b) continue;
        if (term_eq(p.subject, t)) {
            best.lo = std::max(best.lo, b->lo);
            best.hi = std::min(best.hi, b->hi);
        }
    }
    if (!best.is_full()) return best;
    using K = Term::Kind;
    switch (t->kind) {
        case K::Const:
            switch (t->ckind) {
                case ConstKind::Identity: return Band::diag();
                case ConstKind::IdentityDropLast: return t->transposed ? Band{0, 0} : Band{0, 0};
                case ConstKind::LowerShift: return t->transposed ? Band{1, 1} : Band{-1, -1};
                case ConstKind::LowerShiftDropLast: return t->transposed ? Band{1, 1} : Band{-1, -1};
                case ConstKind::Zero: return Band::none();
                default: return Band::full();
            }
        case K::Scalar:
            return t->coeff.is_zero() ? Band::none() : Band::diag();
        case K::Product: {
            Band acc = Band::diag();
            for (auto& k : t->kids) {
                if (alg.known_scalar(k)) continue;
                acc = acc + band_of_term(alg, props, k);
            }
            return acc;
        }
        case K::Sum: {
            Band acc = Band::none();
            for (auto& k : t->kids) acc = acc.hull(band_of_term(alg, props, k));
            return acc;
        }
        case K::Inverse:
            return band_of_term(alg, props, t->kids[0]).inverse();
        case K::Operand: {
            if (t->transposed || t->inverted) {
                TermPtr plain = with_flags(t, false, false);
                Band b = band_of_term(alg, props, plain);
                if (t->transposed) b = b.transposed();
                if (t->inverted) b = b.inverse();
                return b;
            }
            return Band::full();
        }
        default:
            return Band::full();
    }
}

} // namespace flame
