#pragma once

#include <cassert>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "flame/decls.hpp"
#include "flame/property.hpp"

namespace flame {

struct UnsupportedShape : FlameError {
    explicit UnsupportedShape(const std::string& w) : FlameError("UnsupportedShape", w) {}
};

struct UnknownAtInit : FlameError {
    explicit UnknownAtInit(const std::string& w) : FlameError("UnknownAtInit", w) {}
};

// ---- symbolic offsets -------------------------------------------------------
// Offsets and extents are linear in the region width k. Zero-block decisions
// sample k; every band and offset in the vocabulary is linear, so a few
// samples decide the whole family.

struct Lin {  // a*k + b
    int a = 0, b = 0;
    int at(int k) const { return a * k + b; }
    friend Lin operator+(Lin x, Lin y) { return {x.a + y.a, x.b + y.b}; }
    friend Lin operator-(Lin x, Lin y) { return {x.a - y.a, x.b - y.b}; }
    bool operator==(const Lin& o) const { return a == o.a && b == o.b; }
};

inline Lin lin_of(const SymDim& d) {
    if (d.is_const()) return {0, d.constant};
    return {d.coeff, d.constant};
}

inline bool lin_zero(const Lin& l) { return l.a == 0 && l.b == 0; }

inline bool block_intersects_band(Band band, Lin R0, Lin C0, Lin r, Lin c) {
    if (band.empty()) return false;
    for (int k : {1, 2, 3, 64}) {
        int rows = r.at(k), cols = c.at(k);
        if (rows <= 0 || cols <= 0) continue;
        long delta = C0.at(k) - R0.at(k);
        long lo = delta - (rows - 1), hi = delta + (cols - 1);
        long blo = band.lo <= -Band::INF ? lo : band.lo;
        long bhi = band.hi >= Band::INF ? hi : band.hi;
        if (std::max(lo, blo) <= std::min(hi, bhi)) return true;
    }
    return false;
}

// ---- structural-constant blocks ----------------------------------------------

namespace detail {

inline bool lin_in_range(const Lin& x, const Lin& len) {
    for (int k : {1, 2, 3, 64})
        if (!(x.at(k) >= 0 && x.at(k) < len.at(k))) return false;
    return true;
}

// Block of a diagonal-line constant: nonzero where (global i) - (global j) == shift.
inline TermPtr diag_const_block(int shift, Lin R0, Lin C0, Lin r, Lin c, SymDim rdim, SymDim cdim) {
    Lin sigma = Lin{0, shift} - R0 + C0;  // local: i' - j' == sigma
    bool rk = !rdim.is_const(), ck = !cdim.is_const();
    if (rk && ck) {
        if (lin_zero(sigma)) return cst(ConstKind::Identity, rdim, cdim);
        if (sigma == Lin{0, 1}) return cst(ConstKind::LowerShift, rdim, cdim);
        if (sigma == Lin{0, -1}) return cst(ConstKind::LowerShift, cdim, rdim, true);
        // does i' == j' + sigma ever land inside the block?
        bool hit = false;
        for (int k : {1, 2, 3, 64}) {
            int rows = r.at(k), cols = c.at(k), s = sigma.at(k);
            for (int j = 0; j < cols && !hit; ++j)
                if (j + s >= 0 && j + s < rows) hit = true;
        }
        if (!hit) return zero(rdim, cdim);
        throw UnsupportedShape("constant block with unsupported diagonal offset");
    }
    if (rk && !ck) {  // column block, width 1: nonzero row i' == sigma
        if (!lin_in_range(sigma, r)) return zero(rdim, cdim);
        if (lin_zero(sigma)) return cst(ConstKind::UnitFirst, rdim, cdim);
        if (sigma == lin_of(rdim) - Lin{0, 1}) return cst(ConstKind::UnitLast, rdim, cdim);
        throw UnsupportedShape("interior unit column in constant partition");
    }
    if (!rk && ck) {  // row block, height 1: nonzero col j' == -sigma
        Lin j = Lin{0, 0} - sigma;
        if (!lin_in_range(j, c)) return zero(rdim, cdim);
        if (lin_zero(j)) return cst(ConstKind::UnitFirst, cdim, rdim, true);
        if (j == lin_of(cdim) - Lin{0, 1}) return cst(ConstKind::UnitLast, cdim, rdim, true);
        throw UnsupportedShape("interior unit row in constant partition");
    }
    return lin_zero(sigma) ? lit(1) : zero(rdim, cdim);
}

} // namespace detail

// Block (R0..R0+r) x (C0..C0+c) of a structural constant whose full extent is
// fullRows x fullCols.
inline TermPtr const_block(ConstKind kind, bool transposed, Lin R0, Lin C0, Lin r, Lin c,
                           SymDim rdim, SymDim cdim, Lin fullRows, Lin fullCols) {
    if (transposed) {
        Algebra plain;
        TermPtr b = const_block(kind, false, C0, R0, c, r, cdim, rdim, fullCols, fullRows);
        return plain.transpose_of(b);
    }
    switch (kind) {
        case ConstKind::Zero:
            return zero(rdim, cdim);
        case ConstKind::Identity:
        case ConstKind::IdentityDropLast:
            return detail::diag_const_block(0, R0, C0, r, c, rdim, cdim);
        case ConstKind::LowerShift:
        case ConstKind::LowerShiftDropLast:
            return detail::diag_const_block(1, R0, C0, r, c, rdim, cdim);
        case ConstKind::UnitFirst:
        case ConstKind::UnitLast: {
            if (!cdim.is_one()) throw UnsupportedShape("unit vector is a column");
            Lin target = kind == ConstKind::UnitFirst ? Lin{0, 0} : fullRows - Lin{0, 1};
            Lin local = target - R0;
            if (!detail::lin_in_range(local, r)) return zero(rdim, cdim);
            if (rdim.is_one()) return lit(1);
            if (lin_zero(local)) return cst(ConstKind::UnitFirst, rdim, cdim);
            if (local == lin_of(rdim) - Lin{0, 1}) return cst(ConstKind::UnitLast, rdim, cdim);
            throw UnsupportedShape("interior unit entry in constant partition");
        }
        case ConstKind::Ones: {
            if (!cdim.is_one()) throw UnsupportedShape("ones vector is a column");
            if (rdim.is_one()) return lit(1);
            return cst(ConstKind::Ones, rdim, cdim);
        }
    }
    return zero(rdim, cdim);
}

// ---- partition scheme ---------------------------------------------------------

enum class SplitLevel { Region, Renamed, Numeral };

struct OperandScheme {
    enum class Pattern { None, Cols2, Cols3, Square2, Hess } pattern = Pattern::None;
    std::vector<std::string> row_labels, col_labels;  // region labels per split part
    std::vector<SymDim> row_split, col_split;
};

struct PartitionScheme {
    MethodDescription desc;  // owned copy; schemes outlive their inputs
    std::map<std::string, OperandScheme> ops;
    Algebra region_alg;
    Algebra numeral_alg;

    const OperandScheme& of(const std::string& name) const { return ops.at(name); }
    bool partitioned(const std::string& name) const {
        auto it = ops.find(name);
        return it != ops.end() && it->second.pattern != OperandScheme::Pattern::None;
    }
};

namespace detail {

inline Band declared_band(const OperandDecl& o) {
    Band b = Band::full();
    for (auto p : o.props) {
        auto pb = band_of_property(p);
        if (pb) { b.lo = std::max(b.lo, pb->lo); b.hi = std::min(b.hi, pb->hi); }
    }
    return b;
}

inline std::vector<Lin> offsets_of(const std::vector<SymDim>& split) {
    std::vector<Lin> off;
    Lin acc{0, 0};
    for (auto& s : split) {
        off.push_back(acc);
        acc = acc + lin_of(s);
    }
    return off;
}

inline Lin total_of(const std::vector<SymDim>& split) {
    Lin acc{0, 0};
    for (auto& s : split) acc = acc + lin_of(s);
    return acc;
}

} // namespace detail

// Grid of block references for one operand; blocks the operand's band forces
// to vanish become explicit zero constants.
inline TermPtr operand_grid(const OperandDecl& o, const std::vector<std::string>& row_labels,
                            const std::vector<std::string>& col_labels,
                            const std::vector<SymDim>& row_split, const std::vector<SymDim>& col_split,
                            Algebra* register_into) {
    Band band = detail::declared_band(o);
    auto roff = detail::offsets_of(row_split), coff = detail::offsets_of(col_split);
    int R = int(row_split.size()), C = int(col_split.size());
    std::vector<TermPtr> blocks;
    blocks.reserve(size_t(R) * C);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) {
            SymDim r = row_split[i], c = col_split[j];
            std::string region = row_labels[i] + col_labels[j];
            if (!block_intersects_band(band, roff[i], coff[j], lin_of(r), lin_of(c))) {
                blocks.push_back(zero(r, c));
                continue;
            }
            TermPtr ref = region.empty() ? opnd(o.name)
                                         : opnd(o.name, region, block_display(o.name, region, r, c));
            if (register_into && !region.empty()) register_into->declare(o.name, region, r, c);
            blocks.push_back(ref);
        }
    if (R == 1 && C == 1) return blocks[0];
    return grid(R, C, std::move(blocks));
}

// The adopted iterative-method initial partitioning (last-column split).
inline PartitionScheme initial_partition(const MethodDescription& desc) {
    PartitionScheme S;
    S.desc = desc;
    S.region_alg = desc.algebra();
    S.numeral_alg = desc.algebra();
    SymDim n = SymDim::sym('n'), k = SymDim::sym('k'), one(1);

    for (auto& o : desc.operands) {
        OperandScheme os;
        switch (o.shape) {
            case ShapeRole::SquareFixed:
            case ShapeRole::VectorFixed:
            case ShapeRole::ScalarFixed:
                os.pattern = OperandScheme::Pattern::None;
                break;
            case ShapeRole::TallGrowingFull:
                os.pattern = OperandScheme::Pattern::Cols3;
                os.row_labels = {""};
                os.col_labels = {"L", "R", "+"};
                os.row_split = {n};
                os.col_split = {k, one, one};
                break;
            case ShapeRole::TallGrowing:
                os.pattern = OperandScheme::Pattern::Cols2;
                os.row_labels = {""};
                os.col_labels = {"L", "R"};
                os.row_split = {n};
                os.col_split = {k, one};
                break;
            case ShapeRole::SmallSquareGrowing:
                os.pattern = OperandScheme::Pattern::Square2;
                os.row_labels = {"T", "B"};
                os.col_labels = {"L", "R"};
                os.row_split = {k, one};
                os.col_split = {k, one};
                break;
            case ShapeRole::TrailingGrowing:
                os.pattern = OperandScheme::Pattern::Hess;
                os.row_labels = {"T", "M", "B"};
                os.col_labels = {"L", "R"};
                os.row_split = {k, one, one};
                os.col_split = {k, one};
                break;
        }
        S.ops[o.name] = os;
    }
    return S;
}

// ---- level-specific grids -------------------------------------------------------

inline std::vector<std::string> numeral_labels(int parts) {
    std::vector<std::string> v;
    for (int i = 0; i < parts; ++i) v.push_back(std::to_string(i));
    return v;
}

struct SplitVal {
    TermPtr g;
    std::vector<SymDim> rsplit, csplit;
    bool is_grid() const { return g->kind == Term::Kind::Grid; }
    TermPtr block(int i, int j) const { return is_grid() ? g->kids[i * g->gcols + j] : g; }
    int rows() const { return int(rsplit.size()); }
    int cols() const { return int(csplit.size()); }
};

struct LevelSpec {
    SplitLevel level = SplitLevel::Region;
    const PartitionScheme* scheme = nullptr;

    std::vector<SymDim> split_dim(const SymDim& d) const {
        SymDim k = SymDim::sym('k'), one(1);
        if (d.is_const() || d.var == 'n') return {d};
        int units = d.constant + (level == SplitLevel::Region ? 1 : level == SplitLevel::Numeral ? 2 : 0);
        std::vector<SymDim> v{k};
        for (int i = 0; i < units; ++i) v.push_back(one);
        return v;
    }

    std::vector<std::string> labels_for(const SymDim& d, const std::vector<std::string>& region_labels,
                                        size_t parts) const {
        if (d.is_const() || d.var == 'n') return {""};
        if (level == SplitLevel::Numeral) return numeral_labels(int(parts));
        return std::vector<std::string>(region_labels.begin(), region_labels.begin() + parts);
    }

    SplitVal operand_val(const OperandDecl& o, Algebra& alg) const {
        const OperandScheme& os = scheme->of(o.name);
        if (os.pattern == OperandScheme::Pattern::None) {
            Dims fdims = o.dims();
            return {opnd(o.name), {fdims.first}, {fdims.second}};
        }
        const OperandDecl& full = o.underlined_of.empty() ? o : *scheme->desc.find(o.underlined_of);
        const OperandScheme& fos = scheme->of(full.name);
        Dims fdims = o.dims();
        std::vector<SymDim> rs = split_dim(fdims.first), cs = split_dim(fdims.second);
        auto rl = labels_for(fdims.first, fos.row_labels, rs.size());
        auto cl = labels_for(fdims.second, fos.col_labels, cs.size());
        TermPtr g = operand_grid(full, rl, cl, rs, cs, &alg);
        return {g, rs, cs};
    }
};

// ---- flattening --------------------------------------------------------------

struct Flattener {
    const MethodDescription& desc;
    LevelSpec spec;
    Algebra& alg;

    SplitVal as_grid(const TermPtr& t) const {
        using K = Term::Kind;
        switch (t->kind) {
            case K::Operand: {
                if (!t->region.empty()) {
                    auto d = alg.dims_of(t);
                    if (!d) throw FlameError("UndeclaredOperand", print_term(t));
                    return {t, {d->first}, {d->second}};
                }
                const OperandDecl* o = desc.find(t->base);
                if (!o) throw FlameError("UndeclaredOperand", t->base);
                SplitVal v = spec.operand_val(*o, alg);
                if (t->transposed) v = transpose_val(v);
                if (t->inverted) throw FlameError("Internal", "flatten of inverted operand " + t->base);
                return v;
            }
            case K::Scalar:
                return {t, {SymDim(1)}, {SymDim(1)}};
            case K::Const: {
                SymDim rd = t->crows, cd = t->ccols;
                auto rs = spec.split_dim(rd), cs = spec.split_dim(cd);
                if (t->transposed) { std::swap(rd, cd); std::swap(rs, cs); }
                if (rs.size() == 1 && cs.size() == 1) {
                    // rebuild at the split extent so keys agree across levels
                    TermPtr c = cst(t->ckind, t->transposed ? cs[0] : rs[0],
                                    t->transposed ? rs[0] : cs[0], t->transposed);
                    if (t->inverted) c = inv(c);
                    return {c, rs, cs};
                }
                auto roff = detail::offsets_of(rs), coff = detail::offsets_of(cs);
                Lin fr = detail::total_of(rs), fc = detail::total_of(cs);
                std::vector<TermPtr> blocks;
                for (size_t i = 0; i < rs.size(); ++i)
                    for (size_t j = 0; j < cs.size(); ++j)
                        blocks.push_back(const_block(t->ckind, t->transposed, roff[i], coff[j],
                                                     lin_of(rs[i]), lin_of(cs[j]), rs[i], cs[j], fr, fc));
                return {grid(int(rs.size()), int(cs.size()), std::move(blocks)), rs, cs};
            }
            case K::Product: {
                SplitVal acc;
                bool first = true;
                for (auto& f : t->kids) {
                    SplitVal fv = as_grid(f);
                    if (first) { acc = fv; first = false; }
                    else acc = mul_vals(acc, fv);
                }
                if (first) return {lit(t->coeff), {SymDim(1)}, {SymDim(1)}};
                if (!t->coeff.is_one()) acc = scale_val(acc, t->coeff);
                return acc;
            }
            case K::Sum: {
                SplitVal acc;
                bool first = true;
                for (auto& f : t->kids) {
                    SplitVal fv = as_grid(f);
                    if (first) { acc = fv; first = false; }
                    else acc = add_vals(acc, fv);
                }
                return acc;
            }
            case K::Transpose:
                return transpose_val(as_grid(t->kids[0]));
            default:
                throw FlameError("Internal", "flatten of unsupported node " + print_term(t));
        }
    }

    SplitVal transpose_val(const SplitVal& v) const { return {alg.transpose_of(v.g), v.csplit, v.rsplit}; }

    SplitVal scale_val(const SplitVal& v, Rat c) const {
        if (!v.is_grid()) return {alg.normalize(mul({v.g}, c)), v.rsplit, v.csplit};
        std::vector<TermPtr> blocks;
        for (auto& b : v.g->kids) blocks.push_back(alg.normalize(mul({b}, c)));
        return {grid(v.rows(), v.cols(), std::move(blocks)), v.rsplit, v.csplit};
    }

    static bool splits_eq(const std::vector<SymDim>& a, const std::vector<SymDim>& b) {
        if (a.size() != b.size()) return false;
        for (size_t i = 0; i < a.size(); ++i)
            if (!(a[i] == b[i])) return false;
        return true;
    }

    bool scalar_val(const SplitVal& v) const {
        return v.rows() == 1 && v.cols() == 1 && v.rsplit[0].is_one() && v.csplit[0].is_one();
    }

    SplitVal mul_vals(const SplitVal& a, const SplitVal& b) const {
        if (scalar_val(a) || scalar_val(b)) {
            const SplitVal& s = scalar_val(a) ? a : b;
            const SplitVal& m = scalar_val(a) ? b : a;
            if (!m.is_grid())
                return {alg.normalize(scalar_val(a) ? mul({s.g, m.g}) : mul({m.g, s.g})), m.rsplit, m.csplit};
            std::vector<TermPtr> blocks;
            for (auto& x : m.g->kids)
                blocks.push_back(alg.normalize(scalar_val(a) ? mul({s.g, x}) : mul({x, s.g})));
            return {grid(m.rows(), m.cols(), std::move(blocks)), m.rsplit, m.csplit};
        }
        if (!splits_eq(a.csplit, b.rsplit)) throw DimensionMismatch("grid product conformance");
        int R = a.rows(), C = b.cols(), S = int(a.csplit.size());
        std::vector<TermPtr> blocks;
        for (int i = 0; i < R; ++i)
            for (int j = 0; j < C; ++j) {
                std::vector<TermPtr> terms;
                for (int s = 0; s < S; ++s) terms.push_back(mul({a.block(i, s), b.block(s, j)}));
                blocks.push_back(alg.reduce(add(std::move(terms))));
            }
        if (R == 1 && C == 1) return {blocks[0], a.rsplit, b.csplit};
        return {grid(R, C, std::move(blocks)), a.rsplit, b.csplit};
    }

    SplitVal add_vals(const SplitVal& a, const SplitVal& b) const {
        if (!splits_eq(a.rsplit, b.rsplit) || !splits_eq(a.csplit, b.csplit))
            throw DimensionMismatch("grid sum conformance");
        if (!a.is_grid() && !b.is_grid()) return {alg.reduce(add({a.g, b.g})), a.rsplit, a.csplit};
        int R = a.rows(), C = a.cols();
        std::vector<TermPtr> blocks;
        for (int i = 0; i < R; ++i)
            for (int j = 0; j < C; ++j)
                blocks.push_back(alg.reduce(add({a.block(i, j), b.block(i, j)})));
        return {grid(R, C, std::move(blocks)), a.rsplit, a.csplit};
    }

    std::vector<Equation> flatten_eq(const Equation& e) const {
        SplitVal l = as_grid(e.lhs), r = as_grid(e.rhs);
        if (!splits_eq(l.rsplit, r.rsplit) || !splits_eq(l.csplit, r.csplit))
            throw DimensionMismatch("equation sides partition differently");
        std::vector<Equation> out;
        for (int i = 0; i < l.rows(); ++i)
            for (int j = 0; j < l.cols(); ++j) {
                TermPtr lb = l.block(i, j), rb = r.block(i, j);
                if (is_zero_term(lb) && is_zero_term(rb)) continue;
                out.push_back({lb, rb});
            }
        return out;
    }
};

// Block-level restatement of known properties.
inline PropertySet partition_properties(const MethodDescription& desc, const PartitionScheme& scheme,
                                        const PropertySet& props, SplitLevel level, Algebra& alg) {
    PropertySet out;
    LevelSpec spec{level, &scheme};
    Flattener fl{desc, spec, alg};

    for (auto& p : props) {
        bool is_band = band_of_property(p.name).has_value();
        bool is_zd = p.name == PropertyName::ZeroDiagonal;
        if (!is_band && !is_zd) {
            bool touched = false;
            std::function<void(const TermPtr&)> scan = [&](const TermPtr& t) {
                if (t->kind == Term::Kind::Operand && scheme.partitioned(t->base)) touched = true;
                for (auto& q : t->kids) scan(q);
            };
            scan(p.subject);
            if (!touched) out.add(p);
            continue;
        }
        bool flattenable = true;
        std::function<void(const TermPtr&)> scan2 = [&](const TermPtr& t) {
            if (t->kind == Term::Kind::Inverse || t->kind == Term::Kind::Norm ||
                t->kind == Term::Kind::Quotient ||
                (t->kind == Term::Kind::Operand && t->inverted))
                flattenable = false;
            if (t->kind == Term::Kind::Sum) {
                // sums over unknowns produce block sums no solve step uses;
                // only structural-constant sums partition usefully
                std::function<void(const TermPtr&)> has_op = [&](const TermPtr& u) {
                    if (u->kind == Term::Kind::Operand) flattenable = false;
                    for (auto& q : u->kids) has_op(q);
                };
                for (auto& q : t->kids) has_op(q);
            }
            for (auto& q : t->kids) scan2(q);
        };
        scan2(p.subject);
        if (!flattenable) continue;

        SplitVal v = fl.as_grid(p.subject);
        if (!v.is_grid()) {
            out.add(p);
            continue;
        }
        auto roff = detail::offsets_of(v.rsplit), coff = detail::offsets_of(v.csplit);
        Band parent = is_zd ? Band::full() : *band_of_property(p.name);
        for (int i = 0; i < v.rows(); ++i)
            for (int j = 0; j < v.cols(); ++j) {
                TermPtr blk = v.block(i, j);
                if (is_zero_term(blk)) continue;
                SymDim r = v.rsplit[i], c = v.csplit[j];
                if (is_zd) {
                    if (!(roff[i] == coff[j] && r == c)) continue;
                    if (r.is_one()) out.add({PropertyName::Zero, blk});
                    else out.add({PropertyName::ZeroDiagonal, blk});
                    continue;
                }
                if (!block_intersects_band(parent, roff[i], coff[j], lin_of(r), lin_of(c))) {
                    out.add({PropertyName::Zero, blk});
                    continue;
                }
                Lin shift = roff[i] - coff[j];
                if (shift.a != 0) continue;
                if (r.is_one() && c.is_one()) continue;
                Band local = parent.local(shift.b);
                auto nm = property_for_band(local, {r, c});
                if (nm && *nm != PropertyName::Zero) out.add({*nm, blk});
            }
    }
    return out;
}

// ---- region maps ----------------------------------------------------------------

struct RegionMaps {
    Subst repart;  // L -> 0, R -> 1, ...
    Subst cont;    // L -> [0 | 1], R -> 2, ...
    Subst shift;   // region-level analogue of cont (for invariant equivalence)
};

inline RegionMaps build_region_maps(const MethodDescription& desc, PartitionScheme& scheme) {
    RegionMaps M;
    SymDim k = SymDim::sym('k'), one(1);
    for (auto& o : desc.operands) {
        if (!o.underlined_of.empty()) continue;
        const OperandScheme& os = scheme.of(o.name);
        if (os.pattern == OperandScheme::Pattern::None) continue;
        Band band = detail::declared_band(o);
        SymDim n = o.dims().first;

        auto ref = [&](const std::string& region, SymDim r, SymDim c) {
            return opnd(o.name, region, block_display(o.name, region, r, c));
        };
        // numeral block or zero, dims registered
        auto nref = [&](int i, int j, const std::vector<SymDim>& rs, const std::vector<SymDim>& cs) -> TermPtr {
            auto roff = detail::offsets_of(rs), coff = detail::offsets_of(cs);
            SymDim r = rs[i], c = cs[j];
            std::string region;
            if (rs.size() > 1) region += std::to_string(i);
            if (cs.size() > 1) region += std::to_string(j);
            if (!block_intersects_band(band, roff[i], coff[j], lin_of(r), lin_of(c))) return zero(r, c);
            scheme.numeral_alg.declare(o.name, region, r, c);
            return ref(region, r, c);
        };

        switch (os.pattern) {
            case OperandScheme::Pattern::Cols2: {
                std::vector<SymDim> rs{n}, cs{k, one, one};
                M.repart.map(ref("L", n, k), nref(0, 0, rs, cs));
                M.repart.map(ref("R", n, one), nref(0, 1, rs, cs));
                M.cont.map(ref("L", n, k), grid(1, 2, {nref(0, 0, rs, cs), nref(0, 1, rs, cs)}));
                M.cont.map(ref("R", n, one), nref(0, 2, rs, cs));
                M.shift.map(ref("L", n, k), grid(1, 2, {ref("L", n, k), ref("R", n, one)}));
                break;
            }
            case OperandScheme::Pattern::Cols3: {
                std::vector<SymDim> rs{n}, cs{k, one, one, one};
                M.repart.map(ref("L", n, k), nref(0, 0, rs, cs));
                M.repart.map(ref("R", n, one), nref(0, 1, rs, cs));
                M.repart.map(ref("+", n, one), nref(0, 2, rs, cs));
                M.cont.map(ref("L", n, k), grid(1, 2, {nref(0, 0, rs, cs), nref(0, 1, rs, cs)}));
                M.cont.map(ref("R", n, one), nref(0, 2, rs, cs));
                M.cont.map(ref("+", n, one), nref(0, 3, rs, cs));
                M.shift.map(ref("L", n, k), grid(1, 2, {ref("L", n, k), ref("R", n, one)}));
                M.shift.map(ref("R", n, one), ref("+", n, one));
                break;
            }
            case OperandScheme::Pattern::Square2: {
                std::vector<SymDim> rs{k, one, one}, cs{k, one, one};
                M.repart.map(ref("TL", k, k), nref(0, 0, rs, cs));
                M.repart.map(ref("TR", k, one), nref(0, 1, rs, cs));
                M.repart.map(ref("BL", one, k), nref(1, 0, rs, cs));
                M.repart.map(ref("BR", one, one), nref(1, 1, rs, cs));
                M.cont.map(ref("TL", k, k), grid(2, 2, {nref(0, 0, rs, cs), nref(0, 1, rs, cs),
                                                        nref(1, 0, rs, cs), nref(1, 1, rs, cs)}));
                M.cont.map(ref("TR", k, one), grid(2, 1, {nref(0, 2, rs, cs), nref(1, 2, rs, cs)}));
                M.cont.map(ref("BL", one, k), grid(1, 2, {nref(2, 0, rs, cs), nref(2, 1, rs, cs)}));
                M.cont.map(ref("BR", one, one), nref(2, 2, rs, cs));
                // region-level shift, band-zeroed like the grids themselves
                std::vector<SymDim> r2{k, one}, c2{k, one};
                auto roff = detail::offsets_of(r2), coff = detail::offsets_of(c2);
                auto rblk = [&](int i, int j, SymDim r, SymDim c, const char* region) -> TermPtr {
                    if (!block_intersects_band(band, roff[i], coff[j], lin_of(r), lin_of(c)))
                        return zero(r, c);
                    return ref(region, r, c);
                };
                M.shift.map(ref("TL", k, k),
                            grid(2, 2, {rblk(0, 0, k, k, "TL"), rblk(0, 1, k, one, "TR"),
                                        rblk(1, 0, one, k, "BL"), rblk(1, 1, one, one, "BR")}));
                break;
            }
            case OperandScheme::Pattern::Hess: {
                std::vector<SymDim> rs{k, one, one, one}, cs{k, one, one};
                M.repart.map(ref("TL", k, k), nref(0, 0, rs, cs));
                M.repart.map(ref("TR", k, one), nref(0, 1, rs, cs));
                M.repart.map(ref("ML", one, k), nref(1, 0, rs, cs));
                M.repart.map(ref("MR", one, one), nref(1, 1, rs, cs));
                M.repart.map(ref("BL", one, k), nref(2, 0, rs, cs));
                M.repart.map(ref("BR", one, one), nref(2, 1, rs, cs));
                break;
            }
            case OperandScheme::Pattern::None:
                break;
        }
    }
    return M;
}

// Block dims with the traversed region empty (k = 0).
inline Algebra initial_algebra(const PartitionScheme& scheme) {
    Algebra a0 = scheme.region_alg;
    for (auto& [key, d] : a0.dims) {
        auto z = [](SymDim s) {
            if (!s.is_const() && s.var == 'k') return SymDim(s.constant);
            return s;
        };
        d = {z(d.first), z(d.second)};
    }
    a0.symmetric_atoms = scheme.region_alg.symmetric_atoms;
    return a0;
}

// ---- grid evaluation (post-substitution) -------------------------------------

// After a repartition substitution, terms contain inline Grid nodes; this
// multiplies and adds them out. Inverse-of-grid factors are left in place for
// the triangular-solve expansion.
inline SplitVal grid_eval(const Algebra& alg, const TermPtr& t);

namespace detail {

inline SplitVal val_of_plain(const Algebra& alg, const TermPtr& t) {
    auto d = alg.dims_of(t);
    if (!d) return {t, {SymDim(1)}, {SymDim(1)}};
    return {t, {d->first}, {d->second}};
}

inline SplitVal grid_splits(const Algebra& alg, const TermPtr& g) {
    std::vector<SymDim> rs, cs;
    for (int i = 0; i < g->grows; ++i) {
        auto d = alg.dims_of(g->kids[i * g->gcols]);
        if (!d) throw FlameError("Internal", "grid block with unknown dims");
        rs.push_back(d->first);
    }
    for (int j = 0; j < g->gcols; ++j) {
        auto d = alg.dims_of(g->kids[j]);
        if (!d) throw FlameError("Internal", "grid block with unknown dims");
        cs.push_back(d->second);
    }
    return {g, rs, cs};
}

} // namespace detail

inline SplitVal grid_eval(const Algebra& alg, const TermPtr& t) {
    using K = Term::Kind;
    switch (t->kind) {
        case K::Grid: {
            Term g = *t;
            for (auto& k : g.kids) k = grid_eval(alg, k).g;
            TermPtr spliced = alg.splice_grid(mk(std::move(g)));
            if (spliced->kind != K::Grid) return detail::val_of_plain(alg, spliced);
            return detail::grid_splits(alg, spliced);
        }
        case K::Product: {
            // multiply SplitVals left to right; scalar factors distribute
            std::vector<SplitVal> vals;
            for (auto& f : t->kids) vals.push_back(grid_eval(alg, f));
            bool any_grid = false;
            for (auto& v : vals)
                if (v.is_grid()) any_grid = true;
            if (!any_grid) {
                Term c = *t;
                for (size_t i = 0; i < c.kids.size(); ++i) c.kids[i] = vals[i].g;
                return detail::val_of_plain(alg, alg.reduce(mk(std::move(c))));
            }
            // fold using Flattener-style block arithmetic
            SplitVal acc = vals[0];
            auto scalarish = [&](const SplitVal& v) {
                return v.rows() == 1 && v.cols() == 1 && v.rsplit[0].is_one() && v.csplit[0].is_one();
            };
            for (size_t i = 1; i < vals.size(); ++i) {
                const SplitVal& b = vals[i];
                if (scalarish(acc) || scalarish(b)) {
                    const SplitVal& s = scalarish(acc) ? acc : b;
                    const SplitVal& m = scalarish(acc) ? b : acc;
                    bool s_first = scalarish(acc);
                    if (!m.is_grid()) {
                        acc = detail::val_of_plain(
                            alg, alg.reduce(s_first ? mul({s.g, m.g}) : mul({m.g, s.g})));
                    } else {
                        std::vector<TermPtr> blocks;
                        for (auto& x : m.g->kids)
                            blocks.push_back(alg.reduce(s_first ? mul({s.g, x}) : mul({x, s.g})));
                        acc = {grid(m.rows(), m.cols(), std::move(blocks)), m.rsplit, m.csplit};
                    }
                    continue;
                }
                if (!Flattener::splits_eq(acc.csplit, b.rsplit))
                    throw DimensionMismatch("grid product conformance");
                int R = acc.rows(), C = b.cols(), S = int(acc.csplit.size());
                std::vector<TermPtr> blocks;
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c) {
                        std::vector<TermPtr> terms;
                        for (int s = 0; s < S; ++s) terms.push_back(mul({acc.block(r, s), b.block(s, c)}));
                        blocks.push_back(alg.reduce(add(std::move(terms))));
                    }
                if (R == 1 && C == 1) acc = detail::val_of_plain(alg, blocks[0]);
                else acc = {grid(R, C, std::move(blocks)), acc.rsplit, b.csplit};
            }
            if (!t->coeff.is_one()) {
                if (!acc.is_grid()) return detail::val_of_plain(alg, alg.reduce(mul({acc.g}, t->coeff)));
                std::vector<TermPtr> blocks;
                for (auto& x : acc.g->kids) blocks.push_back(alg.reduce(mul({x}, t->coeff)));
                acc = {grid(acc.rows(), acc.cols(), std::move(blocks)), acc.rsplit, acc.csplit};
            }
            return acc;
        }
        case K::Sum: {
            std::vector<SplitVal> vals;
            for (auto& f : t->kids) vals.push_back(grid_eval(alg, f));
            bool any_grid = false;
            for (auto& v : vals)
                if (v.is_grid()) any_grid = true;
            if (!any_grid) {
                std::vector<TermPtr> ts;
                for (auto& v : vals) ts.push_back(v.g);
                return detail::val_of_plain(alg, alg.reduce(add(std::move(ts))));
            }
            SplitVal acc = vals[0];
            for (size_t i = 1; i < vals.size(); ++i) {
                const SplitVal& b = vals[i];
                if (!Flattener::splits_eq(acc.rsplit, b.rsplit) || !Flattener::splits_eq(acc.csplit, b.csplit))
                    throw DimensionMismatch("grid sum conformance");
                std::vector<TermPtr> blocks;
                for (int r = 0; r < acc.rows(); ++r)
                    for (int c = 0; c < acc.cols(); ++c)
                        blocks.push_back(alg.reduce(add({acc.block(r, c), b.block(r, c)})));
                if (acc.rows() == 1 && acc.cols() == 1) acc = detail::val_of_plain(alg, blocks[0]);
                else acc = {grid(acc.rows(), acc.cols(), std::move(blocks)), acc.rsplit, acc.csplit};
            }
            return acc;
        }
        case K::Transpose: {
            SplitVal v = grid_eval(alg, t->kids[0]);
            return {alg.transpose_of(v.g), v.csplit, v.rsplit};
        }
        case K::Inverse: {
            SplitVal v = grid_eval(alg, t->kids[0]);
            if (!v.is_grid()) return detail::val_of_plain(alg, alg.inverse_of(v.g));
            Term w(K::Inverse);
            w.kids = {v.g};
            return {mk(std::move(w)), v.csplit, v.rsplit};
        }
        case K::Quotient: {
            TermPtr n = grid_eval(alg, t->kids[0]).g;
            TermPtr d = grid_eval(alg, t->kids[1]).g;
            return {alg.reduce(quo(n, d)), {SymDim(1)}, {SymDim(1)}};
        }
        default:
            return detail::val_of_plain(alg, alg.reduce(t));
    }
}

} // namespace flame
