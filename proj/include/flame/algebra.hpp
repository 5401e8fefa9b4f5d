#pragma once

#include <functional>
#include <map>
#include <unordered_map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "flame/term.hpp"

namespace flame {

struct FlameError : std::runtime_error {
    std::string tag;
    FlameError(std::string tag_, const std::string& what_)
        : std::runtime_error("[" + tag_ + "] " + what_), tag(std::move(tag_)) {}
};

struct DimensionMismatch : FlameError {
    explicit DimensionMismatch(const std::string& w) : FlameError("DimensionMismatch", w) {}
};

using Dims = std::pair<SymDim, SymDim>;

// Shared symbolic context: block dimensions, atoms known symmetric (their
// transpose decoration is dropped during normalization) and terms known to be
// zero (consulted when simplifying block products).
struct Algebra {
    std::map<std::pair<std::string, std::string>, Dims> dims;  // (base, region) -> dims
    std::set<std::string> symmetric_atoms;
    std::set<std::string> zero_keys;  // canonical keys of sign-stripped zero terms

    // memoization; terms are immutable, entries pin their keys alive
    mutable std::unordered_map<const Term*, std::pair<TermPtr, std::optional<Dims>>> dims_cache;
    mutable std::unordered_map<const Term*, std::pair<TermPtr, TermPtr>> norm_cache;

    void declare(const std::string& base, const std::string& region, SymDim r, SymDim c) {
        auto it = dims.find({base, region});
        if (it != dims.end() && it->second.first == r && it->second.second == c) return;
        dims[{base, region}] = {r, c};
        dims_cache.clear();
        norm_cache.clear();
    }

    std::optional<Dims> lookup(const Term& t) const {
        auto it = dims.find({t.base, t.region});
        if (it == dims.end()) return std::nullopt;
        Dims d = it->second;
        if (t.transposed) std::swap(d.first, d.second);
        if (t.inverted) std::swap(d.first, d.second);
        return d;
    }

    // ---- dimensions ---------------------------------------------------------

    // Returns nullopt when some operand is undeclared; throws on inconsistent
    // chains so malformed terms never normalize silently.
    std::optional<Dims> dims_of(const TermPtr& t) const {
        auto hit = dims_cache.find(t.get());
        if (hit != dims_cache.end()) return hit->second.second;
        auto result = dims_of_uncached(t);
        dims_cache.emplace(t.get(), std::make_pair(t, result));
        return result;
    }

    std::optional<Dims> dims_of_uncached(const TermPtr& t) const {
        using K = Term::Kind;
        switch (t->kind) {
            case K::Operand:
                return lookup(*t);
            case K::Scalar:
                return Dims{SymDim(1), SymDim(1)};
            case K::Const: {
                Dims d{t->crows, t->ccols};
                if (t->transposed) std::swap(d.first, d.second);
                if (t->inverted) std::swap(d.first, d.second);
                return d;
            }
            case K::Product: {
                std::optional<Dims> acc;
                for (auto& k : t->kids) {
                    auto dk = dims_of(k);
                    if (!dk) return std::nullopt;
                    if (dk->first.is_one() && dk->second.is_one()) continue;  // scalar factor
                    if (!acc) {
                        acc = dk;
                    } else {
                        if (acc->second != dk->first && !(acc->second.is_zero() || dk->first.is_zero()))
                            throw DimensionMismatch("product chain " + print_term(t));
                        acc->second = dk->second;
                        if (dk->first.is_zero()) acc->second = dk->second;
                    }
                }
                if (!acc) return Dims{SymDim(1), SymDim(1)};
                return acc;
            }
            case K::Sum: {
                std::optional<Dims> acc;
                for (auto& k : t->kids) {
                    auto dk = dims_of(k);
                    if (!dk) return std::nullopt;
                    if (!acc) acc = dk;
                    else if (!(acc->first == dk->first && acc->second == dk->second))
                        throw DimensionMismatch("sum of unequal shapes " + print_term(t));
                }
                return acc;
            }
            case K::Grid: {
                SymDim rows(0), cols(0);
                for (int r = 0; r < t->grows; ++r) {
                    auto d = dims_of(t->kids[r * t->gcols]);
                    if (!d) return std::nullopt;
                    rows = rows + d->first;
                }
                for (int c = 0; c < t->gcols; ++c) {
                    auto d = dims_of(t->kids[c]);
                    if (!d) return std::nullopt;
                    cols = cols + d->second;
                }
                return Dims{rows, cols};
            }
            case K::Norm:
            case K::Quotient:
                return Dims{SymDim(1), SymDim(1)};
            case K::Inverse: {
                auto d = dims_of(t->kids[0]);
                if (!d) return std::nullopt;
                return Dims{d->second, d->first};
            }
            case K::Transpose: {
                auto d = dims_of(t->kids[0]);
                if (!d) return std::nullopt;
                return Dims{d->second, d->first};
            }
            case K::Call:
                return std::nullopt;
        }
        return std::nullopt;
    }

    bool vanishes(const TermPtr& t) const {
        auto d = dims_of(t);
        return d && (d->first.is_zero() || d->second.is_zero());
    }

    bool known_square(const TermPtr& t) const {
        auto d = dims_of(t);
        return d && d->first == d->second;
    }

    bool known_scalar(const TermPtr& t) const {
        auto d = dims_of(t);
        return d && d->first.is_one() && d->second.is_one();
    }

    // ---- normalization ------------------------------------------------------

    TermPtr normalize(const TermPtr& t) const {
        auto hit = norm_cache.find(t.get());
        if (hit != norm_cache.end()) return hit->second.second;
        TermPtr result = normalize_uncached(t);
        norm_cache.emplace(t.get(), std::make_pair(t, result));
        return result;
    }

    TermPtr normalize_uncached(const TermPtr& t) const {
        using K = Term::Kind;
        switch (t->kind) {
            case K::Operand: {
                Term a = *t;
                if (a.transposed && a.region.empty() && symmetric_atoms.count(a.base)) a.transposed = false;
                if (a.transposed) {
                    auto d = lookup(*t);
                    // transpose of a scalar operand is itself
                    if (d) {
                        auto raw = dims.at({a.base, a.region});
                        if (raw.first.is_one() && raw.second.is_one()) a.transposed = false;
                    }
                }
                return mk(std::move(a));
            }
            case K::Scalar:
                return t;
            case K::Const: {
                Term a = *t;
                if (a.ckind == ConstKind::Zero) {
                    if (a.transposed) { std::swap(a.crows, a.ccols); a.transposed = false; }
                    a.inverted = false;
                }
                if (a.ckind == ConstKind::Identity) { a.transposed = false; a.inverted = false; }
                return mk(std::move(a));
            }
            case K::Transpose:
                return transpose_of(normalize(t->kids[0]));
            case K::Inverse:
                return inverse_of(normalize(t->kids[0]));
            case K::Norm: {
                Term a(K::Norm);
                a.kids = {normalize(t->kids[0])};
                return mk(std::move(a));
            }
            case K::Quotient: {
                TermPtr n = normalize(t->kids[0]);
                TermPtr d = normalize(t->kids[1]);
                if (d->kind == K::Scalar && d->coeff.is_one()) return n;
                return quo(n, d);
            }
            case K::Call: {
                Term a = *t;
                for (auto& k : a.kids) k = normalize(k);
                for (auto& o : a.outs) o = normalize(o);
                return mk(std::move(a));
            }
            case K::Sum: {
                std::vector<TermPtr> parts;
                for (auto& k : t->kids) {
                    TermPtr nk = normalize(k);
                    if (is_zero_term(nk)) continue;
                    if (nk->kind == K::Sum) parts.insert(parts.end(), nk->kids.begin(), nk->kids.end());
                    else parts.push_back(nk);
                }
                if (parts.empty()) {
                    auto d = dims_of(t);
                    return d ? zero(d->first, d->second) : zero();
                }
                if (parts.size() == 1) return parts[0];
                Term a(K::Sum);
                a.kids = std::move(parts);
                return mk(std::move(a));
            }
            case K::Product: {
                Rat c = t->coeff;
                std::vector<TermPtr> fs;
                bool zeroed = false;
                std::function<void(const TermPtr&)> take = [&](const TermPtr& f) {
                    if (is_zero_term(f)) { zeroed = true; return; }
                    if (f->kind == K::Scalar) { c = c * f->coeff; return; }
                    if (f->kind == K::Product) {
                        c = c * f->coeff;
                        for (auto& g : f->kids) take(g);
                        return;
                    }
                    if (f->kind == K::Const && f->ckind == ConstKind::Identity && !f->inverted) return;
                    fs.push_back(f);
                };
                for (auto& k : t->kids) take(normalize(k));
                if (zeroed || c.is_zero()) {
                    auto d = dims_of(t);
                    return d ? zero(d->first, d->second) : zero();
                }
                // a zero inner extent annihilates the product
                for (size_t i = 0; i + 1 < fs.size(); ++i) {
                    auto d = dims_of(fs[i]);
                    if (d && d->second.is_zero()) {
                        auto whole = dims_of(t);
                        return whole ? zero(whole->first, whole->second) : zero();
                    }
                }
                if (fs.empty()) return lit(c);
                if (fs.size() == 1 && c.is_one()) return fs[0];
                // a bare coefficient on a sum distributes into it
                if (fs.size() == 1 && fs[0]->kind == K::Sum) {
                    std::vector<TermPtr> parts;
                    for (auto& k : fs[0]->kids) parts.push_back(normalize(mul({k}, c)));
                    std::stable_sort(parts.begin(), parts.end(), [](const TermPtr& x, const TermPtr& y) {
                        bool nx = x->kind == K::Product && x->coeff < Rat(0);
                        bool ny = y->kind == K::Product && y->coeff < Rat(0);
                        return !nx && ny;
                    });
                    return normalize(add(std::move(parts)));
                }
                Term a(K::Product);
                a.coeff = c;
                a.kids = std::move(fs);
                return mk(std::move(a));
            }
            case K::Grid: {
                // splice nested grids with conforming sub-splits
                Term g = *t;
                for (auto& k : g.kids) k = normalize(k);
                return splice_grid(mk(std::move(g)));
            }
        }
        return t;
    }

    TermPtr transpose_of(const TermPtr& t) const {
        using K = Term::Kind;
        switch (t->kind) {
            case K::Operand: {
                Term a = *t;
                a.transposed = !a.transposed;
                return normalize(mk(std::move(a)));
            }
            case K::Scalar:
                return t;
            case K::Const: {
                Term a = *t;
                a.transposed = !a.transposed;
                return normalize(mk(std::move(a)));
            }
            case K::Product: {
                std::vector<TermPtr> fs;
                for (auto it = t->kids.rbegin(); it != t->kids.rend(); ++it) fs.push_back(transpose_of(*it));
                return normalize(mul(std::move(fs), t->coeff));
            }
            case K::Sum: {
                std::vector<TermPtr> ts;
                for (auto& k : t->kids) ts.push_back(transpose_of(k));
                return normalize(add(std::move(ts)));
            }
            case K::Grid: {
                std::vector<TermPtr> blocks(t->kids.size());
                for (int r = 0; r < t->grows; ++r)
                    for (int c = 0; c < t->gcols; ++c)
                        blocks[c * t->grows + r] = transpose_of(t->kids[r * t->gcols + c]);
                return grid(t->gcols, t->grows, std::move(blocks));
            }
            case K::Inverse:
                return inverse_of(transpose_of(t->kids[0]));
            case K::Norm:
            case K::Quotient:
                return t;  // scalar-valued
            case K::Transpose:
                return normalize(t->kids[0]);
            case K::Call:
                throw FlameError("Internal", "transpose of a function call");
        }
        return t;
    }

    TermPtr inverse_of(const TermPtr& t) const {
        using K = Term::Kind;
        switch (t->kind) {
            case K::Operand: {
                Term a = *t;
                a.inverted = !a.inverted;
                return normalize(mk(std::move(a)));
            }
            case K::Scalar:
                return lit(t->coeff.inverse());
            case K::Const: {
                if (t->ckind == ConstKind::Identity) return t;
                Term a = *t;
                a.inverted = !a.inverted;
                return mk(std::move(a));
            }
            case K::Inverse:
                return normalize(t->kids[0]);
            case K::Product: {
                // pull the rational coefficient out, distribute when every
                // factor is square
                bool all_square = true;
                for (auto& k : t->kids)
                    if (!known_square(k)) { all_square = false; break; }
                if (all_square && !t->kids.empty()) {
                    std::vector<TermPtr> fs;
                    for (auto it = t->kids.rbegin(); it != t->kids.rend(); ++it) fs.push_back(inverse_of(*it));
                    return normalize(mul(std::move(fs), t->coeff.inverse()));
                }
                if (!t->coeff.is_one()) {
                    Term bare = *t;
                    bare.coeff = Rat(1);
                    return normalize(mul({inv(mk(std::move(bare)))}, t->coeff.inverse()));
                }
                return inv(t);
            }
            case K::Quotient:
                return quo(normalize(t->kids[1]), normalize(t->kids[0]));
            default:
                return inv(t);
        }
    }

    TermPtr splice_grid(const TermPtr& g) const {
        bool has_nested = false;
        for (auto& k : g->kids)
            if (k->kind == Term::Kind::Grid) { has_nested = true; break; }
        if (!has_nested) {
            if (g->grows == 1 && g->gcols == 1) return g->kids[0];
            return g;
        }
        // compute sub-splits per grid row/col, require consistency
        std::vector<int> rsub(g->grows, 1), csub(g->gcols, 1);
        for (int r = 0; r < g->grows; ++r)
            for (int c = 0; c < g->gcols; ++c) {
                const TermPtr& b = g->kids[r * g->gcols + c];
                int br = 1, bc = 1;
                if (b->kind == Term::Kind::Grid) { br = b->grows; bc = b->gcols; }
                if (br > rsub[r]) rsub[r] = br;
                if (bc > csub[c]) csub[c] = bc;
            }
        int R = 0, C = 0;
        for (int x : rsub) R += x;
        for (int x : csub) C += x;
        std::vector<TermPtr> blocks(size_t(R) * C);
        int ro = 0;
        for (int r = 0; r < g->grows; ++r) {
            int co = 0;
            for (int c = 0; c < g->gcols; ++c) {
                const TermPtr& b = g->kids[r * g->gcols + c];
                int br = b->kind == Term::Kind::Grid ? b->grows : 1;
                int bc = b->kind == Term::Kind::Grid ? b->gcols : 1;
                if (br != rsub[r] || bc != csub[c]) {
                    if (!(br == 1 && bc == 1 && is_zero_term(b)))
                        throw DimensionMismatch("inconsistent nested grid splits");
                }
                for (int i = 0; i < rsub[r]; ++i)
                    for (int j = 0; j < csub[c]; ++j) {
                        TermPtr blk;
                        if (b->kind == Term::Kind::Grid && i < br && j < bc) blk = b->kids[i * bc + j];
                        else if (b->kind != Term::Kind::Grid && i == 0 && j == 0) blk = b;
                        else blk = zero();
                        blocks[size_t(ro + i) * C + (co + j)] = blk;
                    }
                co += csub[c];
            }
            ro += rsub[r];
        }
        if (R == 1 && C == 1) return blocks[0];
        return grid(R, C, std::move(blocks));
    }

    // ---- zero oracle --------------------------------------------------------

    static TermPtr strip_sign(const TermPtr& t) {
        if (t->kind == Term::Kind::Product) {
            Term a = *t;
            if (a.coeff < Rat(0)) a.coeff = -a.coeff;
            if (a.coeff.is_one() && a.kids.size() == 1) return a.kids[0];
            return mk(std::move(a));
        }
        return t;
    }

    bool known_zero(const TermPtr& t) const {
        if (is_zero_term(t)) return true;
        if (zero_keys.empty()) return false;
        TermPtr s = strip_sign(t);
        if (zero_keys.count(key_of(s))) return true;
        // a product with a known-zero contiguous chunk is zero
        if (s->kind == Term::Kind::Product && s->kids.size() >= 2) {
            for (size_t i = 0; i < s->kids.size(); ++i)
                for (size_t len = 1; i + len <= s->kids.size(); ++len) {
                    TermPtr sub = len == 1 ? s->kids[i] : mul(std::vector<TermPtr>(s->kids.begin() + i, s->kids.begin() + i + len));
                    if (zero_keys.count(key_of(strip_sign(sub)))) return true;
                }
        }
        return false;
    }

    // normalize, then drop summands that the zero oracle recognizes
    TermPtr reduce(const TermPtr& t) const {
        TermPtr n = normalize(t);
        if (known_zero(n)) {
            auto d = dims_of(n);
            return d ? zero(d->first, d->second) : zero();
        }
        if (n->kind == Term::Kind::Sum) {
            std::vector<TermPtr> keep;
            for (auto& k : n->kids)
                if (!known_zero(k)) keep.push_back(k);
            if (keep.size() != n->kids.size()) return normalize(add(std::move(keep)));
        }
        return n;
    }
};

// ---- substitution -----------------------------------------------------------

// Replacement map: keys are atoms or whole sub-products; occurrences inside
// longer products are replaced as contiguous factor runs.
struct Subst {
    std::vector<std::pair<TermPtr, TermPtr>> rules;

    void map(const TermPtr& from, const TermPtr& to) { rules.push_back({from, to}); }

    TermPtr operator()(const TermPtr& t) const { return apply(t); }

    TermPtr apply(const TermPtr& t) const {
        for (auto& [from, to] : rules)
            if (term_eq(t, from)) return to;
        using K = Term::Kind;
        switch (t->kind) {
            case K::Operand: {
                // match modulo decorations: substituting X in X^T yields (to)^T
                for (auto& [from, to] : rules) {
                    if (from->kind != K::Operand) continue;
                    if (from->base == t->base && from->region == t->region &&
                        !from->transposed && !from->inverted && (t->transposed || t->inverted)) {
                        TermPtr r = to;
                        if (t->transposed) r = tr(r);
                        if (t->inverted) r = inv(r);
                        return r;
                    }
                }
                return t;
            }
            case K::Scalar:
            case K::Const:
                return t;
            case K::Product: {
                std::vector<TermPtr> fs = t->kids;
                // contiguous-run product keys first
                bool changed = true;
                while (changed) {
                    changed = false;
                    for (auto& [from, to] : rules) {
                        if (from->kind != K::Product || from->kids.size() < 2) continue;
                        size_t m = from->kids.size();
                        if (fs.size() < m) continue;
                        for (size_t i = 0; i + m <= fs.size(); ++i) {
                            bool hit = true;
                            for (size_t j = 0; j < m; ++j)
                                if (!term_eq(fs[i + j], from->kids[j])) { hit = false; break; }
                            if (hit) {
                                fs.erase(fs.begin() + i, fs.begin() + i + m);
                                fs.insert(fs.begin() + i, to);
                                changed = true;
                                break;
                            }
                        }
                        if (changed) break;
                    }
                }
                for (auto& f : fs) f = apply(f);
                return mul(std::move(fs), t->coeff);
            }
            default: {
                Term a = *t;
                for (auto& k : a.kids) k = apply(k);
                for (auto& o : a.outs) o = apply(o);
                return mk(std::move(a));
            }
        }
    }
};

inline TermPtr substitute(const Algebra& alg, const TermPtr& t, const Subst& s) {
    return alg.normalize(s.apply(t));
}

// ---- occurrence search -------------------------------------------------------

// Does `needle` occur in `hay` as a subterm, counting contiguous factor runs
// of products?
inline bool occurs_in(const TermPtr& hay, const TermPtr& needle) {
    if (term_eq(hay, needle)) return true;
    using K = Term::Kind;
    if (hay->kind == K::Product) {
        if (needle->kind == K::Product && needle->kids.size() >= 2) {
            size_t m = needle->kids.size();
            if (hay->kids.size() >= m) {
                for (size_t i = 0; i + m <= hay->kids.size(); ++i) {
                    bool hit = true;
                    for (size_t j = 0; j < m; ++j)
                        if (!term_eq(hay->kids[i + j], needle->kids[j])) { hit = false; break; }
                    if (hit && needle->coeff.is_one()) return true;
                }
            }
        }
        for (auto& k : hay->kids)
            if (occurs_in(k, needle)) return true;
        return false;
    }
    for (auto& k : hay->kids)
        if (occurs_in(k, needle)) return true;
    for (auto& o : hay->outs)
        if (occurs_in(o, needle)) return true;
    return false;
}

inline bool occurs_in_eq(const Equation& e, const TermPtr& needle) {
    return occurs_in(e.lhs, needle) || occurs_in(e.rhs, needle);
}

// Factor list of a term viewed as a product (scalar coefficient dropped).
inline std::vector<TermPtr> factors_of(const TermPtr& t) {
    if (t->kind == Term::Kind::Product) return t->kids;
    if (t->kind == Term::Kind::Scalar) return {};
    return {t};
}

} // namespace flame
