#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "flame/rational.hpp"
#include "flame/symdim.hpp"

namespace flame {

enum class ConstKind {
    Identity,            // I
    LowerShift,          // J, ones on the subdiagonal
    IdentityDropLast,    // Iu, identity with the last column omitted
    LowerShiftDropLast,  // Ju
    UnitFirst,           // e0
    UnitLast,            // er
    Ones,                // e
    Zero,
};

struct Term;
using TermPtr = std::shared_ptr<const Term>;

// Symbolic expression tree. Canonical form (established by Algebra::normalize):
// transposes only as atom decorations, inverses on atoms or wrapping
// sums/grids/non-square-factor products, negation as a rational coefficient
// on Product nodes, no nested products/sums.
struct Term {
    enum class Kind {
        Operand,    // a declared operand or one of its blocks
        Scalar,     // rational literal
        Product,    // coeff * factor1 * factor2 * ...
        Sum,        // t1 + t2 + ...
        Grid,       // rows x cols block matrix
        Const,      // structural constant
        Norm,       // || t ||
        Call,       // {outs} := op(args); used as an assignment rhs
        Quotient,   // scalar fraction
        Inverse,    // inverse of a non-atom
        Transpose,  // construction-time only; eliminated by normalize
    };

    Kind kind;

    // Operand
    std::string base;     // declared operand name
    std::string region;   // "", "L", "R", "+", "TL", "0", "01", ...
    std::string disp;     // display name, e.g. "delta_BR"; cosmetic
    bool transposed = false;
    bool inverted = false;

    // Scalar / Product coefficient
    Rat coeff{1};

    // Product factors / Sum terms / Grid blocks (row-major) / single child
    std::vector<TermPtr> kids;
    int grows = 0, gcols = 0;

    // Const
    ConstKind ckind = ConstKind::Zero;
    SymDim crows, ccols;

    // Call
    std::string opname;
    std::vector<TermPtr> outs;

    mutable std::string key_cache;  // canonical key, filled lazily

    explicit Term(Kind k) : kind(k) {}
    Term(const Term& o)
        : kind(o.kind), base(o.base), region(o.region), disp(o.disp), transposed(o.transposed),
          inverted(o.inverted), coeff(o.coeff), kids(o.kids), grows(o.grows), gcols(o.gcols),
          ckind(o.ckind), crows(o.crows), ccols(o.ccols), opname(o.opname), outs(o.outs) {}
    Term& operator=(const Term&) = delete;
};

// ---- builders -------------------------------------------------------------

inline TermPtr mk(Term&& t) { return std::make_shared<Term>(std::move(t)); }

inline TermPtr opnd(std::string base, std::string region = "", std::string disp = "") {
    Term t(Term::Kind::Operand);
    t.base = std::move(base);
    t.region = std::move(region);
    t.disp = disp.empty() ? (t.region.empty() ? t.base : t.base + "_" + t.region) : std::move(disp);
    return mk(std::move(t));
}

inline TermPtr with_flags(const TermPtr& a, bool transposed, bool inverted) {
    Term t = *a;
    t.transposed = transposed;
    t.inverted = inverted;
    return mk(std::move(t));
}

inline TermPtr lit(std::int64_t n, std::int64_t d = 1) {
    Term t(Term::Kind::Scalar);
    t.coeff = Rat(n, d);
    return mk(std::move(t));
}

inline TermPtr lit(Rat r) {
    Term t(Term::Kind::Scalar);
    t.coeff = r;
    return mk(std::move(t));
}

inline TermPtr mul(std::vector<TermPtr> fs, Rat coeff = Rat(1)) {
    Term t(Term::Kind::Product);
    t.coeff = coeff;
    t.kids = std::move(fs);
    return mk(std::move(t));
}

inline TermPtr add(std::vector<TermPtr> ts) {
    Term t(Term::Kind::Sum);
    t.kids = std::move(ts);
    return mk(std::move(t));
}

inline TermPtr sub(const TermPtr& a, const TermPtr& b) { return add({a, mul({b}, Rat(-1))}); }
inline TermPtr neg(const TermPtr& a) { return mul({a}, Rat(-1)); }

inline TermPtr grid(int rows, int cols, std::vector<TermPtr> blocks) {
    Term t(Term::Kind::Grid);
    t.grows = rows;
    t.gcols = cols;
    t.kids = std::move(blocks);
    return mk(std::move(t));
}

inline TermPtr cst(ConstKind k, SymDim rows, SymDim cols, bool transposed = false) {
    Term t(Term::Kind::Const);
    t.ckind = k;
    t.crows = rows;
    t.ccols = cols;
    t.transposed = transposed;
    return mk(std::move(t));
}

inline TermPtr zero(SymDim rows = SymDim(0), SymDim cols = SymDim(0)) {
    return cst(ConstKind::Zero, rows, cols);
}

inline TermPtr tr(const TermPtr& a) {
    Term t(Term::Kind::Transpose);
    t.kids = {a};
    return mk(std::move(t));
}

inline TermPtr inv(const TermPtr& a) {
    Term t(Term::Kind::Inverse);
    t.kids = {a};
    return mk(std::move(t));
}

inline TermPtr quo(const TermPtr& n, const TermPtr& d) {
    Term t(Term::Kind::Quotient);
    t.kids = {n, d};
    return mk(std::move(t));
}

inline TermPtr norm(const TermPtr& a) {
    Term t(Term::Kind::Norm);
    t.kids = {a};
    return mk(std::move(t));
}

inline TermPtr call(std::string op, std::vector<TermPtr> args, std::vector<TermPtr> outs) {
    Term t(Term::Kind::Call);
    t.opname = std::move(op);
    t.kids = std::move(args);
    t.outs = std::move(outs);
    return mk(std::move(t));
}

inline bool is_atom(const Term& t) {
    return t.kind == Term::Kind::Operand || t.kind == Term::Kind::Const ||
           t.kind == Term::Kind::Scalar;
}

inline bool is_zero_term(const TermPtr& t) {
    if (t->kind == Term::Kind::Const && t->ckind == ConstKind::Zero) return true;
    if (t->kind == Term::Kind::Scalar && t->coeff.is_zero()) return true;
    return false;
}

// ---- ordering, equality, keys ---------------------------------------------

namespace detail {
inline const char* const_token(ConstKind k) {
    switch (k) {
        case ConstKind::Identity: return "I";
        case ConstKind::LowerShift: return "J";
        case ConstKind::IdentityDropLast: return "Iu";
        case ConstKind::LowerShiftDropLast: return "Ju";
        case ConstKind::UnitFirst: return "e0";
        case ConstKind::UnitLast: return "er";
        case ConstKind::Ones: return "e";
        case ConstKind::Zero: return "0";
    }
    return "?";
}
} // namespace detail

// Canonical structural key. Sum children are sorted, so the key is invariant
// under commutative reordering of sums; everything else is positional.
inline void key_into(const TermPtr& t, std::string& out);

inline const std::string& key_of(const TermPtr& t) {
    if (t->key_cache.empty()) {
        std::string s;
        key_into(t, s);
        t->key_cache = std::move(s);
    }
    return t->key_cache;
}

inline void key_into(const TermPtr& t, std::string& out) {
    using K = Term::Kind;
    switch (t->kind) {
        case K::Operand:
            out += "o(";
            out += t->base;
            out += '#';
            out += t->region;
            if (t->transposed) out += 'T';
            if (t->inverted) out += 'V';
            out += ')';
            break;
        case K::Scalar:
            out += "s(";
            out += t->coeff.str();
            out += ')';
            break;
        case K::Const:
            out += "c(";
            out += detail::const_token(t->ckind);
            if (t->transposed) out += 'T';
            if (t->inverted) out += 'V';
            out += ';';
            out += t->crows.str();
            out += ',';
            out += t->ccols.str();
            out += ')';
            break;
        case K::Product: {
            out += "p(";
            out += t->coeff.str();
            for (auto& k : t->kids) {
                out += ' ';
                out += key_of(k);
            }
            out += ')';
            break;
        }
        case K::Sum: {
            std::vector<std::string> keys;
            keys.reserve(t->kids.size());
            for (auto& k : t->kids) keys.push_back(key_of(k));
            std::sort(keys.begin(), keys.end());
            out += "a(";
            for (auto& k : keys) {
                out += k;
                out += ' ';
            }
            out += ')';
            break;
        }
        case K::Grid: {
            out += "g(";
            out += std::to_string(t->grows);
            out += 'x';
            out += std::to_string(t->gcols);
            for (auto& k : t->kids) {
                out += ' ';
                out += key_of(k);
            }
            out += ')';
            break;
        }
        case K::Norm:
            out += "n(";
            key_into(t->kids[0], out);
            out += ')';
            break;
        case K::Quotient:
            out += "q(";
            key_into(t->kids[0], out);
            out += ' ';
            key_into(t->kids[1], out);
            out += ')';
            break;
        case K::Inverse:
            out += "v(";
            key_into(t->kids[0], out);
            out += ')';
            break;
        case K::Transpose:
            out += "t(";
            key_into(t->kids[0], out);
            out += ')';
            break;
        case K::Call: {
            out += "f(";
            out += t->opname;
            for (auto& k : t->outs) {
                out += ' ';
                out += key_of(k);
            }
            out += '|';
            for (auto& k : t->kids) {
                out += ' ';
                out += key_of(k);
            }
            out += ')';
            break;
        }
    }
}

inline bool term_eq(const TermPtr& a, const TermPtr& b) {
    if (a == b) return true;
    return key_of(a) == key_of(b);
}

// ---- printing --------------------------------------------------------------

inline std::string print_term(const TermPtr& t);

namespace detail {

inline bool needs_parens_in_product(const Term& t) {
    return t.kind == Term::Kind::Sum || t.kind == Term::Kind::Quotient;
}

inline std::string print_atom(const Term& t) {
    std::string s;
    if (t.kind == Term::Kind::Operand) {
        s = t.disp.empty() ? (t.region.empty() ? t.base : t.base + "_" + t.region) : t.disp;
    } else {
        s = const_token(t.ckind);
    }
    if (t.inverted && t.transposed) s += "^-T";
    else if (t.inverted) s += "^-1";
    else if (t.transposed) s += "^T";
    return s;
}

inline std::string print_factor(const TermPtr& t) {
    std::string s = print_term(t);
    if (needs_parens_in_product(*t)) return "(" + s + ")";
    return s;
}

} // namespace detail

inline std::string print_term(const TermPtr& t) {
    using K = Term::Kind;
    switch (t->kind) {
        case K::Operand:
        case K::Const:
            return detail::print_atom(*t);
        case K::Scalar:
            return t->coeff.str();
        case K::Product: {
            std::string s;
            if (t->coeff.is_minus_one()) s += "-";
            else if (!t->coeff.is_one()) s += t->coeff.str() + " ";
            bool first = true;
            for (auto& k : t->kids) {
                if (!first || (s.size() && s != "-")) s += " ";
                else if (s == "-") s += " ";
                s += detail::print_factor(k);
                first = false;
            }
            if (t->kids.empty()) s = t->coeff.str();
            return s;
        }
        case K::Sum: {
            std::string s;
            for (size_t i = 0; i < t->kids.size(); ++i) {
                const TermPtr& k = t->kids[i];
                bool negated = k->kind == K::Product && k->coeff < Rat(0);
                if (i == 0) {
                    s += print_term(k);
                } else if (negated) {
                    Term flipped = *k;
                    flipped.coeff = -flipped.coeff;
                    s += " - " + print_term(mk(std::move(flipped)));
                } else {
                    s += " + " + print_term(k);
                }
            }
            return s;
        }
        case K::Grid: {
            std::string s = "[";
            for (int r = 0; r < t->grows; ++r) {
                if (r) s += "; ";
                for (int c = 0; c < t->gcols; ++c) {
                    if (c) s += ", ";
                    s += print_term(t->kids[r * t->gcols + c]);
                }
            }
            return s + "]";
        }
        case K::Norm:
            return "|| " + print_term(t->kids[0]) + " ||";
        case K::Quotient: {
            auto wrap = [](const TermPtr& x) {
                std::string s = print_term(x);
                if (x->kind == K::Sum) return "(" + s + ")";
                return s;
            };
            return wrap(t->kids[0]) + " / " + wrap(t->kids[1]);
        }
        case K::Inverse:
            return "inv(" + print_term(t->kids[0]) + ")";
        case K::Transpose:
            return "T(" + print_term(t->kids[0]) + ")";
        case K::Call: {
            std::string s = t->opname + "(";
            for (size_t i = 0; i < t->kids.size(); ++i) {
                if (i) s += ", ";
                s += print_term(t->kids[i]);
            }
            return s + ")";
        }
    }
    return "?";
}

// ---- equations and assignments ---------------------------------------------

struct Equation {
    TermPtr lhs, rhs;
    std::string key() const { return key_of(lhs) + "=" + key_of(rhs); }
};

// Multi-target only when rhs is a Call; single target otherwise.
struct Assignment {
    std::vector<TermPtr> targets;
    TermPtr rhs;

    std::string key() const {
        std::string s;
        for (auto& t : targets) {
            key_into(t, s);
            s += ',';
        }
        s += ":=";
        key_into(rhs, s);
        return s;
    }

    std::string str() const {
        std::string s;
        if (rhs->kind == Term::Kind::Call) {
            s += "{";
            for (size_t i = 0; i < rhs->outs.size(); ++i) {
                if (i) s += ", ";
                s += print_term(rhs->outs[i]);
            }
            s += "}";
        } else {
            for (size_t i = 0; i < targets.size(); ++i) {
                if (i) s += ", ";
                s += print_term(targets[i]);
            }
        }
        s += " := " + print_term(rhs);
        return s;
    }
};

} // namespace flame
