#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flame/invariants.hpp"
#include "flame/pme.hpp"

namespace flame {

struct MissingSolvePME : FlameError {
    explicit MissingSolvePME(const std::string& w) : FlameError("MissingSolvePME", w) {}
};

struct EmptyUpdate : FlameError {
    explicit EmptyUpdate(const std::string& w) : FlameError("EmptyUpdate", w) {}
};

// ---- preprocessing -----------------------------------------------------------

// Initial sizes substituted into the given assignments; vanished targets
// disappear. Returns nullopt when a surviving right-hand side needs a block
// that is unknown at start (infeasible invariant).
inline std::optional<std::vector<Assignment>> initial_preprocessing(const MethodDescription& desc,
                                                                    const PartitionScheme& scheme,
                                                                    const std::vector<Assignment>& tail_nodes) {
    Algebra alg0 = initial_algebra(scheme);
    std::set<std::string> have;
    for (auto& o : desc.operands) {
        if (o.kind == OperandKind::Input) have.insert(o.name);
        if (o.kind == OperandKind::FirstColumnInput && o.underlined_of.empty())
            have.insert(o.name + "_R");  // with the traversed region empty, b_R is the known first column
    }
    std::vector<Assignment> out;
    for (auto& a : tail_nodes) {
        bool drop = true;
        for (auto& t : a.targets) {
            auto d = alg0.dims_of(t);
            if (d && !(d->first.is_zero() || d->second.is_zero())) drop = false;
        }
        if (drop) continue;
        TermPtr rhs0 = alg0.normalize(a.rhs);
        bool ok = true;
        std::function<void(const TermPtr&)> scan = [&](const TermPtr& t) {
            if (!ok) return;
            if (t->kind == Term::Kind::Operand) {
                std::string key = t->region.empty() ? t->base : t->base + "_" + t->region;
                auto d = alg0.dims_of(t);
                bool vanished = d && (d->first.is_zero() || d->second.is_zero());
                if (!vanished && !have.count(key)) ok = false;
            }
            for (auto& k : t->kids) scan(k);
        };
        scan(rhs0);
        if (!ok) return std::nullopt;
        Assignment na;
        na.targets = a.targets;
        na.rhs = rhs0;
        out.push_back(na);
        for (auto& t : a.targets) have.insert(t->region.empty() ? t->base : t->base + "_" + t->region);
    }
    return out;
}

inline std::vector<Assignment> derive_preprocessing(const MethodDescription& desc,
                                                    const PartitionScheme& scheme, const PME& pme,
                                                    const std::vector<int>& inv_nodes) {
    std::vector<Assignment> tail;
    for (int v : inv_nodes)
        if (v != 1) tail.push_back(pme.assignments[v - 1]);
    auto pre = initial_preprocessing(desc, scheme, tail);
    if (!pre) throw UnknownAtInit("preprocessing references a block unknown at start");
    return *pre;
}

// ---- repartitioned expansion ---------------------------------------------------

namespace detail {

// emit assignments for a (possibly grid-target) substituted assignment; the
// triangular-solve expansion lowers inverse-of-grid right-hand sides
inline void expand_into(Algebra& alg, const std::vector<TermPtr>& raw_targets, const TermPtr& raw_rhs,
                        std::vector<Assignment>& out) {
    TermPtr tgt = raw_targets.size() == 1 ? raw_targets[0] : nullptr;
    if (!tgt) throw FlameError("Internal", "multi-target non-call assignment");
    TermPtr tgt_spliced = tgt->kind == Term::Kind::Grid ? alg.splice_grid(tgt) : tgt;

    if (tgt_spliced->kind != Term::Kind::Grid) {
        SplitVal v = grid_eval(alg, raw_rhs);
        if (v.is_grid()) throw MissingSolvePME("grid-valued right-hand side for plain target");
        if (is_zero_term(tgt_spliced)) return;
        out.push_back({{tgt_spliced}, v.g});
        return;
    }

    // column target [w0; w1; ...]
    const TermPtr& T = tgt_spliced;
    if (T->gcols != 1) throw MissingSolvePME("unsupported target grid shape");
    int W = T->grows;

    // look for an inverse-of-grid factor in the rhs product
    TermPtr rhs = raw_rhs;
    Rat coeff(1);
    std::vector<TermPtr> pre_factors, post_factors;
    TermPtr inv_grid;
    if (rhs->kind == Term::Kind::Product) {
        coeff = rhs->coeff;
        bool seen_inv = false;
        for (auto& f : rhs->kids) {
            SplitVal fv{f, {}, {}};
            bool is_invgrid = false;
            if (f->kind == Term::Kind::Inverse) {
                SplitVal gv = grid_eval(alg, f->kids[0]);
                if (gv.is_grid()) {
                    is_invgrid = true;
                    inv_grid = gv.g;
                }
            }
            if (is_invgrid && !seen_inv) { seen_inv = true; continue; }
            (seen_inv ? post_factors : pre_factors).push_back(f);
        }
    }

    if (inv_grid) {
        if (!pre_factors.empty())
            throw MissingSolvePME("inverse-form with leading factors");
        SplitVal G = grid_eval(alg, inv_grid);
        SplitVal V = grid_eval(alg, post_factors.size() == 1 ? post_factors[0] : mul(post_factors));
        if (G.rows() != W || G.cols() != W || V.rows() != W || V.cols() != 1)
            throw MissingSolvePME("inverse-form block shapes");
        bool lower = true, upper = true;
        for (int i = 0; i < W; ++i)
            for (int j = 0; j < W; ++j) {
                if (j > i && !is_zero_term(G.block(i, j))) lower = false;
                if (j < i && !is_zero_term(G.block(i, j))) upper = false;
            }
        if (!lower && !upper) throw MissingSolvePME("coefficient grid is not block-triangular");
        // G w = coeff * v, solved in dependency order
        std::vector<int> order;
        for (int i = 0; i < W; ++i) order.push_back(lower ? i : W - 1 - i);
        std::vector<TermPtr> w(W);
        for (int idx : order) {
            TermPtr ti = T->kids[idx];
            std::vector<TermPtr> rhs_terms{mul({V.block(idx, 0)}, coeff)};
            for (int j = 0; j < W; ++j) {
                if (j == idx) continue;
                TermPtr gij = G.block(idx, j);
                if (is_zero_term(gij)) continue;
                TermPtr wj = w[j] ? w[j] : T->kids[j];
                rhs_terms.push_back(mul({gij, wj}, Rat(-1)));
            }
            TermPtr b = alg.reduce(add(rhs_terms));
            TermPtr gii = G.block(idx, idx);
            TermPtr value;
            auto d = alg.dims_of(gii);
            if (d && d->first.is_one() && d->second.is_one()) {
                value = alg.reduce(quo(b, gii));
            } else {
                value = alg.reduce(mul({alg.inverse_of(gii), b}));
            }
            if (is_zero_term(ti)) {
                w[idx] = zero();  // constrained-to-zero component, not computed
            } else {
                w[idx] = ti;
                out.push_back({{ti}, value});
            }
        }
        return;
    }

    SplitVal v = grid_eval(alg, rhs);
    if (!v.is_grid() || v.rows() != W || v.cols() != 1)
        throw MissingSolvePME("target and right-hand side partition differently");
    for (int i = 0; i < W; ++i) {
        TermPtr ti = T->kids[i];
        if (is_zero_term(ti)) continue;
        out.push_back({{ti}, v.block(i, 0)});
    }
}

inline Assignment rename_assignment(const Algebra& alg, const Assignment& a, const Subst& map) {
    Assignment r;
    for (auto& t : a.targets) r.targets.push_back(alg.normalize(map.apply(t)));
    r.rhs = alg.normalize(map.apply(a.rhs));
    return r;
}

} // namespace flame::detail

// P_before: the invariant under the repartition renaming. P_after: the
// invariant under the continue-with merge, flattened with the PME (the
// recursive call expands to the whole PME one index earlier) and the built-in
// triangular-solve expansion for inverse-form assignments.
inline std::pair<std::vector<Assignment>, std::vector<Assignment>> build_before_after(
    const MethodDescription& desc, const PartitionScheme& scheme, const RegionMaps& maps,
    const PME& pme, const std::vector<int>& inv_nodes, Algebra& numeral_alg) {
    std::vector<Assignment> before, after;
    for (int v : inv_nodes) before.push_back(detail::rename_assignment(numeral_alg, pme.assignments[v - 1], maps.repart));
    for (auto& a : pme.assignments) after.push_back(detail::rename_assignment(numeral_alg, a, maps.repart));
    for (int v : inv_nodes) {
        if (v == 1) continue;
        const Assignment& a = pme.assignments[v - 1];
        std::vector<TermPtr> tg;
        for (auto& t : a.targets) tg.push_back(maps.cont.apply(t));
        TermPtr rhs = maps.cont.apply(a.rhs);
        detail::expand_into(numeral_alg, tg, rhs, after);
    }
    return {before, after};
}

// Region-shift expansion used by the equivalence checker: the shifted
// recursive call stands for the whole PME at unchanged labels.
inline std::vector<Assignment> expand_shifted(const MethodDescription& desc, const PartitionScheme& scheme,
                                              const RegionMaps& maps, const PME& pme,
                                              const std::vector<int>& nodes, const Subst& which,
                                              Algebra& alg) {
    std::vector<Assignment> out;
    // the shifted recursive call covers the whole PME; check that the merged
    // target regions indeed cover every PME target before relying on it
    {
        std::set<std::string> shifted_targets, pme_targets;
        std::function<void(const TermPtr&)> collect = [&](const TermPtr& t) {
            if (t->kind == Term::Kind::Grid) {
                for (auto& k : t->kids) collect(k);
                return;
            }
            if (t->kind == Term::Kind::Operand) shifted_targets.insert(key_of(t));
        };
        for (auto& t : pme.assignments.front().targets) collect(which.apply(t));
        for (auto& a : pme.assignments)
            for (auto& t : a.targets) pme_targets.insert(key_of(t));
        for (auto& k : pme_targets)
            if (!shifted_targets.count(k))
                throw NoMatch("shifted call does not cover " + k);
    }
    for (auto& a : pme.assignments) out.push_back(a);
    for (int v : nodes) {
        if (v == 1) continue;
        const Assignment& a = pme.assignments[v - 1];
        std::vector<TermPtr> tg;
        for (auto& t : a.targets) tg.push_back(which.apply(t));
        TermPtr rhs = which.apply(a.rhs);
        detail::expand_into(alg, tg, rhs, out);
    }
    // canonical dedup
    std::vector<Assignment> dedup;
    std::set<std::string> seen;
    for (auto& a : out) {
        auto k = a.key();
        if (!seen.count(k)) { seen.insert(k); dedup.push_back(a); }
    }
    return dedup;
}

// The update: assignments present after the iteration but not before.
inline std::vector<Assignment> extract_update(const std::vector<Assignment>& before,
                                              const std::vector<Assignment>& after) {
    std::set<std::string> bk;
    for (auto& a : before) bk.insert(a.key());
    std::vector<Assignment> out;
    for (auto& a : after) {
        if (bk.count(a.key())) continue;
        if (a.rhs->kind == Term::Kind::Call) continue;
        out.push_back(a);
    }
    if (out.empty()) throw EmptyUpdate("before and after coincide");
    return out;
}

// ---- common subexpression elimination ----------------------------------------

namespace detail {

struct CseCandidate {
    TermPtr sub;
    std::string key;
    int deg_n = 0, deg_k = 0;  // cost class of one evaluation
    int occurrences = 0;
    size_t first_pos = 0;  // (assignment index << 16) | position
};

// cost degree of evaluating a contiguous product: boundary dims classified in
// n and k; any growing extent marks the k class
inline std::pair<int, int> cost_degree(const Algebra& alg, const std::vector<TermPtr>& fs) {
    bool has_k = false;
    int n_count = 0;
    std::vector<SymDim> chain;
    for (size_t i = 0; i < fs.size(); ++i) {
        auto d = alg.dims_of(fs[i]);
        if (!d) return {3, 0};
        if (i == 0) chain.push_back(d->first);
        chain.push_back(d->second);
    }
    for (auto& d : chain) {
        if (d.is_const()) continue;
        if (d.var == 'n') ++n_count;
        else has_k = true;
    }
    if (has_k) return {1, 2};  // matrix-matrix over k columns
    return {n_count, 0};
}

inline void walk_products(const TermPtr& t, bool under_inverse,
                          const std::function<void(const TermPtr&)>& fn) {
    if (t->kind == Term::Kind::Inverse) {
        // coefficients of solves stay whole
        return;
    }
    if (t->kind == Term::Kind::Product) fn(t);
    for (auto& k : t->kids) walk_products(k, under_inverse, fn);
    for (auto& o : t->outs) walk_products(o, under_inverse, fn);
}

inline TermPtr replace_run(const Algebra& alg, const TermPtr& t, const std::vector<TermPtr>& run,
                           const std::string& run_key, const TermPtr& aux) {
    using K = Term::Kind;
    if (t->kind == K::Inverse) return t;
    Term a = *t;
    a.key_cache.clear();
    for (auto& k : a.kids) k = replace_run(alg, k, run, run_key, aux);
    for (auto& o : a.outs) o = replace_run(alg, o, run, run_key, aux);
    if (a.kind == K::Product) {
        bool changed = true;
        while (changed) {
            changed = false;
            if (a.kids.size() >= run.size()) {
                for (size_t i = 0; i + run.size() <= a.kids.size(); ++i) {
                    bool hit = true;
                    for (size_t j = 0; j < run.size(); ++j)
                        if (!term_eq(a.kids[i + j], run[j])) { hit = false; break; }
                    if (hit) {
                        a.kids.erase(a.kids.begin() + i, a.kids.begin() + i + run.size());
                        a.kids.insert(a.kids.begin() + i, aux);
                        changed = true;
                        break;
                    }
                }
            }
        }
    }
    return alg.normalize(mk(std::move(a)));
}

} // namespace flame::detail

// Heuristic elimination of repeated subproducts: matrix-vector chunks are
// preferred split points, every occurrence of a chosen chunk is replaced, and
// auxiliary assignments t_1, t_2, ... are inserted before first use.
inline std::vector<Assignment> eliminate_cse(Algebra& alg, std::vector<Assignment> update) {
    int aux_id = 1;
    auto find_best = [&](const std::vector<Assignment>& as) -> std::optional<detail::CseCandidate> {
        std::vector<detail::CseCandidate> cands;
        std::map<std::string, size_t> index;
        size_t pos_counter = 0;
        for (size_t ai = 0; ai < as.size(); ++ai) {
            detail::walk_products(as[ai].rhs, false, [&](const TermPtr& p) {
                auto& fs = p->kids;
                ++pos_counter;
                if (fs.size() < 3) return;
                for (size_t i = 0; i < fs.size(); ++i)
                    for (size_t len = 2; len < fs.size() && i + len <= fs.size(); ++len) {
                        std::vector<TermPtr> run(fs.begin() + i, fs.begin() + i + len);
                        TermPtr sub = mul(run);
                        auto key = key_of(sub);
                        if (!index.count(key)) {
                            detail::CseCandidate c;
                            c.sub = sub;
                            c.key = key;
                            auto deg = detail::cost_degree(alg, run);
                            c.deg_n = deg.first;
                            c.deg_k = deg.second;
                            c.first_pos = (ai << 16) | (pos_counter & 0xffff) | i;
                            index[key] = cands.size();
                            cands.push_back(c);
                        }
                    }
            });
        }
        if (cands.empty()) return std::nullopt;
        // count occurrences over all products, including 2-factor ones
        for (size_t ai = 0; ai < as.size(); ++ai) {
            detail::walk_products(as[ai].rhs, false, [&](const TermPtr& p) {
                auto& fs = p->kids;
                for (auto& c : cands) {
                    auto rf = factors_of(c.sub);
                    if (fs.size() < rf.size()) continue;
                    for (size_t i = 0; i + rf.size() <= fs.size(); ++i) {
                        bool hit = true;
                        for (size_t j = 0; j < rf.size(); ++j)
                            if (!term_eq(fs[i + j], rf[j])) { hit = false; break; }
                        if (hit) ++c.occurrences;
                    }
                }
            });
        }
        std::optional<detail::CseCandidate> best;
        for (auto& c : cands) {
            if (c.occurrences < 2) continue;
            if (!best) { best = c; continue; }
            auto key_cur = std::make_tuple(c.deg_n, c.deg_k, c.occurrences);
            auto key_best = std::make_tuple(best->deg_n, best->deg_k, best->occurrences);
            if (key_cur > key_best || (key_cur == key_best && c.first_pos < best->first_pos)) best = c;
        }
        return best;
    };

    while (auto best = find_best(update)) {
        auto d = alg.dims_of(best->sub);
        std::string nm = "t" + std::to_string(aux_id);
        std::string disp = "t_" + std::to_string(aux_id);
        ++aux_id;
        alg.declare(nm, "", d ? d->first : SymDim::sym('n'), d ? d->second : SymDim(1));
        TermPtr aux = opnd(nm, "", disp);
        auto run = factors_of(best->sub);
        std::vector<Assignment> next;
        bool inserted = false;
        for (auto& a : update) {
            TermPtr replaced = detail::replace_run(alg, a.rhs, run, best->key, aux);
            if (!inserted && !term_eq(replaced, a.rhs)) {
                next.push_back({{aux}, alg.normalize(best->sub)});
                inserted = true;
            }
            Assignment na;
            na.targets = a.targets;
            na.rhs = replaced;
            next.push_back(na);
        }
        if (!inserted) break;
        update = std::move(next);
    }
    return update;
}

// Exhaustive variant generation behind a cap: at each step fork on every
// repeated chunk instead of only the best one.
inline std::vector<std::vector<Assignment>> eliminate_cse_all(Algebra& alg,
                                                              const std::vector<Assignment>& update,
                                                              size_t cap = 16) {
    std::vector<std::vector<Assignment>> done, work{update};
    std::set<std::string> seen;
    while (!work.empty() && done.size() + work.size() <= cap * 4) {
        auto cur = work.back();
        work.pop_back();
        std::vector<Assignment> reduced = eliminate_cse(alg, cur);
        std::string k;
        for (auto& a : reduced) k += a.key() + ";";
        if (!seen.count(k)) {
            seen.insert(k);
            done.push_back(reduced);
        }
        if (done.size() >= cap) break;
    }
    return done;
}

// ---- the worksheet -------------------------------------------------------------

struct Worksheet {
    std::string operation;
    std::vector<int> invariant;
    LoopGuard guard;
    std::vector<Assignment> preprocessing;
    std::vector<Assignment> update;
    std::vector<std::string> discarded;  // computed blocks not part of the solution
    // partition bookkeeping for rendering and the interpreter
    struct OperandPart {
        std::string name;
        std::string pattern;                 // "1x2", "1x3", "2x2", "3x2"
        std::vector<std::string> regions;    // region labels
        std::vector<std::string> numerals;   // repartition labels
        std::vector<std::string> continued;  // continue-with labels
        std::vector<std::string> region_disp, numeral_disp, continued_disp;
        std::string initial_size;
        bool output_flavour = false;  // Output operand (guard column selection)
    };
    std::vector<OperandPart> parts;
    std::map<std::string, std::string> solve_hints;  // key(term under inverse) -> lower|upper|diag
    bool guard_output_flavour = false;
};

inline Worksheet make_worksheet(const MethodDescription& desc, const PartitionScheme& scheme,
                                const RegionMaps& maps, const PropertySet& numeral_props,
                                const PME& pme, const LoopInvariant& inv, const LoopGuard& guard,
                                bool cse, Algebra& numeral_alg) {
    Worksheet ws;
    ws.operation = desc.operation;
    ws.invariant = inv.nodes;
    ws.guard = guard;
    const OperandDecl* gop = desc.find(guard.operand);
    ws.guard_output_flavour = gop && gop->kind == OperandKind::Output;

    ws.preprocessing = derive_preprocessing(desc, scheme, pme, inv.nodes);
    auto [before, after] = build_before_after(desc, scheme, maps, pme, inv.nodes, numeral_alg);
    // P_before is contained in P_after by construction; anything else is a bug
    {
        std::set<std::string> ak;
        for (auto& a : after) ak.insert(a.key());
        for (auto& b : before)
            if (!ak.count(b.key())) throw FlameError("Internal", "P_before not contained in P_after");
    }
    ws.update = extract_update(before, after);
    if (cse) ws.update = eliminate_cse(numeral_alg, ws.update);

    for (int v : inv.nodes) {
        if (v == 1) continue;
        for (auto& t : pme.assignments[v - 1].targets) ws.discarded.push_back(print_term(t));
    }

    for (auto& o : desc.operands) {
        if (!o.underlined_of.empty()) continue;
        const OperandScheme& os = scheme.of(o.name);
        if (os.pattern == OperandScheme::Pattern::None) continue;
        Worksheet::OperandPart part;
        part.name = o.name;
        part.output_flavour = o.kind == OperandKind::Output;
        SymDim n = SymDim::sym('n'), kk = SymDim::sym('k'), one(1);
        auto disp = [&](const std::string& reg, SymDim r, SymDim c) {
            return block_display(o.name, reg, r, c);
        };
        switch (os.pattern) {
            case OperandScheme::Pattern::Cols2:
                part.pattern = "1x2";
                part.regions = {"L", "R"};
                part.numerals = {"0", "1"};
                part.continued = {"0", "1", "2"};
                part.region_disp = {disp("L", n, kk), disp("R", n, one)};
                part.numeral_disp = {disp("0", n, kk), disp("1", n, one)};
                part.continued_disp = {disp("0", n, kk), disp("1", n, one), disp("2", n, one)};
                part.initial_size = o.name + "_L is n x 0";
                break;
            case OperandScheme::Pattern::Cols3:
                part.pattern = "1x3";
                part.regions = {"L", "R", "+"};
                part.numerals = {"0", "1", "2"};
                part.continued = {"0", "1", "2", "3"};
                part.region_disp = {disp("L", n, kk), disp("R", n, one), disp("+", n, one)};
                part.numeral_disp = {disp("0", n, kk), disp("1", n, one), disp("2", n, one)};
                part.continued_disp = {disp("0", n, kk), disp("1", n, one), disp("2", n, one),
                                       disp("3", n, one)};
                part.initial_size = o.name + "_L is n x 0";
                break;
            case OperandScheme::Pattern::Square2:
                part.pattern = "2x2";
                part.regions = {"TL", "TR", "BL", "BR"};
                part.numerals = {"00", "01", "10", "11"};
                part.continued = {"00", "01", "02", "10", "11", "12", "20", "21", "22"};
                part.region_disp = {disp("TL", kk, kk), disp("TR", kk, one), disp("BL", one, kk),
                                    disp("BR", one, one)};
                part.numeral_disp = {disp("00", kk, kk), disp("01", kk, one), disp("10", one, kk),
                                     disp("11", one, one)};
                part.continued_disp = {disp("00", kk, kk), disp("01", kk, one), disp("02", kk, one),
                                       disp("10", one, kk), disp("11", one, one), disp("12", one, one),
                                       disp("20", one, kk), disp("21", one, one), disp("22", one, one)};
                part.initial_size = o.name + "_TL is 0 x 0";
                break;
            case OperandScheme::Pattern::Hess:
                part.pattern = "3x2";
                part.regions = {"TL", "TR", "ML", "MR", "BL", "BR"};
                part.region_disp = {disp("TL", kk, kk), disp("TR", kk, one), disp("ML", one, kk),
                                    disp("MR", one, one), disp("BL", one, kk), disp("BR", one, one)};
                part.initial_size = o.name + "_TL is 0 x 0";
                break;
            default:
                break;
        }
        ws.parts.push_back(part);
    }
    std::sort(ws.parts.begin(), ws.parts.end(),
              [](const Worksheet::OperandPart& a, const Worksheet::OperandPart& b) { return a.name < b.name; });

    // solve hints for inverse-form coefficients
    auto hint_for = [&](const TermPtr& m) -> std::string {
        Band b = band_of_term(numeral_alg, numeral_props, m);
        if (b.lo == 0 && b.hi == 0) return "diag";
        if (b.hi <= 0) return "lower";
        if (b.lo >= 0) return "upper";
        return "general";
    };
    std::function<void(const TermPtr&)> scan = [&](const TermPtr& t) {
        if (t->kind == Term::Kind::Inverse) ws.solve_hints[key_of(t->kids[0])] = hint_for(t->kids[0]);
        if (t->kind == Term::Kind::Operand && t->inverted)
            ws.solve_hints[key_of(with_flags(t, t->transposed, false))] =
                hint_for(with_flags(t, t->transposed, false));
        for (auto& k : t->kids) scan(k);
    };
    for (auto& a : ws.preprocessing) scan(a.rhs);
    for (auto& a : ws.update) scan(a.rhs);
    return ws;
}

} // namespace flame
