#pragma once

#include <set>
#include <string>
#include <vector>

#include "flame/derivation.hpp"
#include "flame/partition.hpp"

namespace flame {

struct NoMatch : FlameError {
    explicit NoMatch(const std::string& w) : FlameError("NoMatch", w) {}
};

struct Unsolvable : FlameError {
    std::vector<std::string> unknowns;
    Unsolvable(const std::string& eq, std::vector<std::string> unk)
        : FlameError("Unsolvable", "cannot solve " + eq + " for " + join(unk)), unknowns(std::move(unk)) {}
    static std::string join(const std::vector<std::string>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
        return s;
    }
};

struct OperationSignature {
    std::string name;
    std::vector<std::string> inputs;             // Input operands
    std::vector<std::string> first_col_inputs;   // operands whose e0 column is known
    std::vector<std::string> outputs;            // non-Input operands, declaration order
};

inline OperationSignature signature_of(const MethodDescription& desc) {
    OperationSignature sig;
    sig.name = desc.operation;
    for (auto* o : desc.function_inputs()) sig.inputs.push_back(o->name);
    for (auto* o : desc.first_column_inputs()) sig.first_col_inputs.push_back(o->name);
    for (auto* o : desc.function_outputs()) sig.outputs.push_back(o->name);
    return sig;
}

struct PME {
    std::vector<Assignment> assignments;  // first is the recursive call

    std::string key() const {
        std::string s;
        for (auto& a : assignments) s += a.key() + ";";
        return s;
    }
};

// ---- the recursive call (node 1) ------------------------------------------------

namespace detail {

// collect flattened operand-ref targets of a renamed-output grid
inline void collect_targets(const TermPtr& t, std::vector<TermPtr>& out) {
    if (t->kind == Term::Kind::Grid) {
        for (auto& k : t->kids) collect_targets(k, out);
        return;
    }
    if (t->kind == Term::Kind::Operand) out.push_back(t);
}

} // namespace detail

// Builds the FunctionCall assignment for the traversed (renamed) regions and
// returns it together with the renamed-postcondition block equations it
// stands for.
inline std::pair<Assignment, std::vector<Equation>> renamed_call(const MethodDescription& desc,
                                                                 const PartitionScheme& scheme,
                                                                 Algebra& alg) {
    OperationSignature sig = signature_of(desc);
    LevelSpec spec{SplitLevel::Renamed, &scheme};
    Flattener fl{desc, spec, alg};

    std::vector<TermPtr> args, outs, targets;
    for (auto& nm : sig.inputs) args.push_back(opnd(nm));
    SymDim k = SymDim::sym('k');
    for (auto& nm : sig.first_col_inputs) {
        // first column of the traversed region: X_L e0
        args.push_back(mul({opnd(nm, "L", block_display(nm, "L", SymDim::sym('n'), k)),
                            cst(ConstKind::UnitFirst, k, SymDim(1))}));
    }
    for (auto& nm : sig.outputs) {
        SplitVal v = spec.operand_val(*desc.find(nm), alg);
        outs.push_back(v.g);
        detail::collect_targets(v.g, targets);
    }
    Assignment call_asgn;
    call_asgn.targets = targets;
    call_asgn.rhs = call(sig.name, args, outs);

    std::vector<Equation> renamed;
    for (auto& e : desc.post) {
        auto blocks = fl.flatten_eq(e);
        renamed.insert(renamed.end(), blocks.begin(), blocks.end());
    }
    return {call_asgn, renamed};
}

// Splits the flattened block equations into the subset the recursive function
// instance covers and the residual equations that remain to be solved.
inline std::pair<Assignment, std::vector<Equation>> match_operation(const MethodDescription& desc,
                                                                    const PartitionScheme& scheme,
                                                                    std::vector<Equation> blocks,
                                                                    Algebra& alg) {
    auto [call_asgn, renamed] = renamed_call(desc, scheme, alg);
    std::set<std::string> block_keys;
    for (auto& b : blocks) block_keys.insert(b.key());
    for (auto& r : renamed) {
        if (!block_keys.count(r.key()))
            throw NoMatch("renamed postcondition block not present: " + print_term(r.lhs) + " = " +
                          print_term(r.rhs));
    }
    std::set<std::string> covered;
    for (auto& r : renamed) covered.insert(r.key());
    std::vector<Equation> residual;
    for (auto& b : blocks)
        if (!covered.count(b.key())) residual.push_back(b);
    return {call_asgn, residual};
}

// ---- solving ----------------------------------------------------------------------

namespace detail {

struct Summand {
    Rat coeff{1};
    std::vector<TermPtr> factors;
};

inline std::vector<Summand> summands_of(const TermPtr& side) {
    std::vector<Summand> out;
    auto one = [](const TermPtr& t) {
        Summand s;
        if (t->kind == Term::Kind::Product) {
            s.coeff = t->coeff;
            s.factors = t->kids;
        } else if (t->kind == Term::Kind::Scalar) {
            s.coeff = t->coeff;
        } else {
            s.factors = {t};
        }
        return s;
    };
    if (side->kind == Term::Kind::Sum)
        for (auto& k : side->kids) out.push_back(one(k));
    else if (!is_zero_term(side))
        out.push_back(one(side));
    return out;
}

inline TermPtr summand_term(const Summand& s) {
    if (s.factors.empty()) return lit(s.coeff);
    return mul(s.factors, s.coeff);
}

} // namespace detail

// Candidate solver for one block equation. `known` holds block keys already
// assigned; `props` is the block-level property set (bands and zeros).
struct EquationSolver {
    const Algebra& alg;           // block algebra with zero oracle installed
    const PropertySet& props;     // partitioned properties
    const std::set<std::string>& known;

    bool is_known(const TermPtr& t) const {
        if (t->kind != Term::Kind::Operand) return true;
        return known.count(key_of(with_flags(t, false, false))) != 0;
    }

    // multiply a known factor onto one side, distributing over sums
    TermPtr mul_onto(const TermPtr& factor, const TermPtr& side, bool from_left) const {
        TermPtr s = alg.normalize(side);
        if (s->kind == Term::Kind::Sum) {
            std::vector<TermPtr> parts;
            for (auto& k : s->kids)
                parts.push_back(from_left ? mul({factor, k}) : mul({k, factor}));
            return alg.reduce(add(std::move(parts)));
        }
        return alg.reduce(from_left ? mul({factor, s}) : mul({s, factor}));
    }

    void unknowns_in(const TermPtr& t, std::vector<TermPtr>& out, std::set<std::string>& seen) const {
        if (t->kind == Term::Kind::Operand) {
            TermPtr plain = with_flags(t, false, false);
            if (!is_known(plain)) {
                auto k = key_of(plain);
                if (!seen.count(k)) { seen.insert(k); out.push_back(plain); }
            }
            return;
        }
        for (auto& k : t->kids) unknowns_in(k, out, seen);
    }

    std::vector<TermPtr> unknowns_of(const Equation& e) const {
        std::vector<TermPtr> out;
        std::set<std::string> seen;
        unknowns_in(e.lhs, out, seen);
        unknowns_in(e.rhs, out, seen);
        return out;
    }

    bool coefficient_invertible(const TermPtr& m) const {
        if (alg.known_scalar(m)) return true;
        if (props.contains(PropertyName::NonSingular, m)) return true;
        Band b = band_of_term(alg, props, m);
        if (!alg.known_square(m)) return false;
        if (b.lo == 0 && b.hi == 0) return true;                     // diagonal
        if (b.lo >= 0 || b.hi <= 0) {
            // triangular coefficients are solvable systems; their diagonal
            // entries are products like p_i^T A p_i
            return !(b.lo > 0 || b.hi < 0);
        }
        return false;
    }

    // Try to isolate the single unknown `u` of equation e. Returns the
    // assignment or nullopt.
    std::optional<Assignment> isolate(const Equation& e, const TermPtr& u) const {
        // count occurrences across both sides; require exactly one summand
        // containing u, with u as a standalone factor (possibly transposed? no)
        struct Hit {
            int side;  // 0 lhs, 1 rhs
            size_t summand, factor;
        };
        std::vector<detail::Summand> sides[2] = {detail::summands_of(e.lhs), detail::summands_of(e.rhs)};
        std::vector<Hit> hits;
        for (int s = 0; s < 2; ++s)
            for (size_t i = 0; i < sides[s].size(); ++i)
                for (size_t f = 0; f < sides[s][i].factors.size(); ++f) {
                    const TermPtr& t = sides[s][i].factors[f];
                    if (t->kind == Term::Kind::Operand && t->base == u->base && t->region == u->region) {
                        if (t->transposed || t->inverted) return std::nullopt;
                        hits.push_back({s, i, f});
                    } else if (occurs_in(t, u)) {
                        return std::nullopt;  // buried inside a compound factor
                    }
                }
        if (hits.size() != 1) return std::nullopt;
        Hit h = hits[0];
        const detail::Summand& sm = sides[h.side][h.summand];
        // move all other summands of u's side across
        std::vector<TermPtr> other;
        for (size_t i = 0; i < sides[h.side].size(); ++i) {
            if (i == h.summand) continue;
            other.push_back(alg.normalize(mul({detail::summand_term(sides[h.side][i])}, Rat(-1))));
        }
        TermPtr rhs_total = h.side == 0 ? e.rhs : e.lhs;
        std::vector<TermPtr> rhs_terms{rhs_total};
        rhs_terms.insert(rhs_terms.end(), other.begin(), other.end());
        TermPtr rhs = alg.reduce(add(rhs_terms));
        // strip the coefficient: sm = coeff * L * u * R
        std::vector<TermPtr> L(sm.factors.begin(), sm.factors.begin() + h.factor);
        std::vector<TermPtr> R(sm.factors.begin() + h.factor + 1, sm.factors.end());
        Rat c = sm.coeff;
        if (!R.empty()) return std::nullopt;  // right coefficients do not arise here
        if (L.empty()) {
            TermPtr res = alg.reduce(mul({rhs}, c.inverse()));
            return Assignment{{u}, res};
        }
        TermPtr M = L.size() == 1 ? L[0] : alg.normalize(mul(L));
        if (!coefficient_invertible(M)) return std::nullopt;
        if (alg.known_scalar(M)) {
            auto du = alg.dims_of(u);
            if (du && du->first.is_one() && du->second.is_one()) {
                // scalar equation: emit a quotient
                TermPtr num = alg.reduce(mul({rhs}, c.inverse()));
                return Assignment{{u}, alg.normalize(quo(num, M))};
            }
            return std::nullopt;
        }
        TermPtr Minv = alg.inverse_of(M);
        TermPtr res = alg.reduce(mul({Minv, rhs}, c.inverse()));
        return Assignment{{u}, res};
    }

    // All candidate assignments for this equation: direct isolation when a
    // single unknown remains, otherwise one property application followed by
    // isolation.
    std::vector<Assignment> candidates(const Equation& e) const {
        auto unknowns = unknowns_of(e);
        std::vector<Assignment> out;
        std::set<std::string> seen;
        auto push = [&](const Assignment& a) {
            auto k = a.key();
            if (!seen.count(k)) { seen.insert(k); out.push_back(a); }
        };
        if (unknowns.size() == 1) {
            auto a = isolate(e, unknowns[0]);
            if (a) {
                push(*a);
                return out;  // direct isolation wins; no property variants
            }
        }
        // property application: for each product-subject property split, if
        // one part leads (or trails) a summand with known complement, multiply
        // the complement onto both sides, drop known-zero terms and retry
        for (auto& p : props.items) {
            TermPtr subj = Algebra::strip_sign(p.subject);
            if (subj->kind != Term::Kind::Product) continue;
            auto fs = subj->kids;
            if (fs.size() < 2) continue;
            for (size_t cut = 1; cut < fs.size(); ++cut) {
                TermPtr left = cut == 1 ? fs[0] : mul(std::vector<TermPtr>(fs.begin(), fs.begin() + cut));
                TermPtr right = cut + 1 == fs.size() ? fs[cut]
                                                     : mul(std::vector<TermPtr>(fs.begin() + cut, fs.end()));
                auto all_known = [&](const TermPtr& t) {
                    // multipliers are products of known blocks
                    for (auto& f : factors_of(t))
                        if (f->kind != Term::Kind::Operand) return false;
                    std::vector<TermPtr> u;
                    std::set<std::string> s2;
                    unknowns_in(t, u, s2);
                    return u.empty();
                };
                // right part leads a summand -> multiply left part from the left
                bool fire_left = false, fire_right = false;
                auto rf = factors_of(right);
                auto lf = factors_of(left);
                for (int side = 0; side < 2 && !fire_left; ++side)
                    for (auto& sm : detail::summands_of(side ? e.rhs : e.lhs)) {
                        if (sm.factors.size() < rf.size()) continue;
                        bool pre = true;
                        for (size_t i = 0; i < rf.size(); ++i)
                            if (!term_eq(sm.factors[i], rf[i])) { pre = false; break; }
                        if (pre) { fire_left = true; break; }
                    }
                for (int side = 0; side < 2 && !fire_right; ++side)
                    for (auto& sm : detail::summands_of(side ? e.rhs : e.lhs)) {
                        if (sm.factors.size() < lf.size()) continue;
                        bool suf = true;
                        for (size_t i = 0; i < lf.size(); ++i)
                            if (!term_eq(sm.factors[sm.factors.size() - lf.size() + i], lf[i])) { suf = false; break; }
                        if (suf) { fire_right = true; break; }
                    }
                if (fire_left && all_known(left)) {
                    Equation ep{mul_onto(left, e.lhs, true), mul_onto(left, e.rhs, true)};
                    auto u2 = unknowns_of(ep);
                    if (u2.size() == 1) {
                        auto a = isolate(ep, u2[0]);
                        if (a) push(*a);
                    }
                }
                if (fire_right && all_known(right)) {
                    Equation ep{mul_onto(right, e.lhs, false), mul_onto(right, e.rhs, false)};
                    auto u2 = unknowns_of(ep);
                    if (u2.size() == 1) {
                        auto a = isolate(ep, u2[0]);
                        if (a) push(*a);
                    }
                }
            }
        }
        return out;
    }
};

// ---- PME generation -----------------------------------------------------------------

// Depth-first expansion over per-equation candidate sets. Candidates for the
// same unknown branch into separate PMEs; candidates for different unknowns
// are committed in order.
inline void solve_residual(const Algebra& alg, const PropertySet& props,
                           const std::vector<Equation>& residual, std::set<std::string> known,
                           std::vector<Assignment> acc, const Assignment& call_asgn,
                           std::vector<PME>& out, int depth = 0) {
    if (depth > 64) throw FlameError("SearchBudgetExceeded", "PME candidate expansion too deep");
    EquationSolver solver{alg, props, known};

    // drop equations with no unknowns left
    std::vector<Equation> open;
    for (auto& e : residual)
        if (!solver.unknowns_of(e).empty()) open.push_back(e);
    if (open.empty()) {
        PME p;
        p.assignments.push_back(call_asgn);
        for (auto& a : acc) p.assignments.push_back(a);
        out.push_back(std::move(p));
        return;
    }
    // direct isolations first: they are forced and produce no variants
    for (auto& e : open) {
        auto unknowns = solver.unknowns_of(e);
        if (unknowns.size() != 1) continue;
        auto a = solver.isolate(e, unknowns[0]);
        if (!a) continue;
        auto known2 = known;
        known2.insert(key_of(a->targets[0]));
        auto acc2 = acc;
        acc2.push_back(*a);
        solve_residual(alg, props, open, known2, acc2, call_asgn, out, depth + 1);
        return;
    }
    for (auto& e : open) {
        auto cands = solver.candidates(e);
        if (cands.empty()) continue;
        // group candidates by target
        std::string first_target = key_of(cands[0].targets[0]);
        std::vector<Assignment> same;
        for (auto& c : cands)
            if (key_of(c.targets[0]) == first_target) same.push_back(c);
        size_t before = out.size();
        std::optional<Unsolvable> pending;
        for (auto& c : same) {
            auto known2 = known;
            known2.insert(key_of(c.targets[0]));
            auto acc2 = acc;
            acc2.push_back(c);
            try {
                solve_residual(alg, props, open, known2, acc2, call_asgn, out, depth + 1);
            } catch (const Unsolvable& u) {
                pending = u;
            }
        }
        if (out.size() == before && pending) throw *pending;
        return;
    }
    // no equation yields a candidate: report the first open equation
    std::vector<std::string> unk;
    for (auto& u : solver.unknowns_of(open.front())) unk.push_back(print_term(u));
    throw Unsolvable(print_term(open.front().lhs) + " = " + print_term(open.front().rhs), unk);
}

inline std::vector<PME> generate_pmes(const MethodDescription& desc, const PartitionScheme& scheme,
                                      const PropertySet& block_props, Algebra& alg) {
    // flatten the postcondition at region level
    LevelSpec spec{SplitLevel::Region, &scheme};
    Flattener fl{desc, spec, alg};
    std::vector<Equation> blocks;
    for (auto& e : desc.post) {
        auto bs = fl.flatten_eq(e);
        blocks.insert(blocks.end(), bs.begin(), bs.end());
    }
    auto [call_asgn, residual] = match_operation(desc, scheme, blocks, alg);

    std::set<std::string> known;
    for (auto& t : call_asgn.targets) known.insert(key_of(t));
    for (auto& o : desc.operands)
        if (o.kind == OperandKind::Input) known.insert(key_of(opnd(o.name)));

    std::vector<PME> raw;
    solve_residual(alg, block_props, residual, known, {}, call_asgn, raw);

    std::vector<PME> out;
    std::set<std::string> seen;
    for (auto& p : raw) {
        auto k = p.key();
        if (!seen.count(k)) { seen.insert(k); out.push_back(p); }
    }
    return out;
}

// Forward-scan topological validity: every rhs block is an input, a constant
// or the target of an earlier assignment.
inline bool pme_topologically_valid(const MethodDescription& desc, const PME& pme) {
    std::set<std::string> have;
    for (auto& o : desc.operands)
        if (o.kind == OperandKind::Input) have.insert(o.name);
    for (auto& a : pme.assignments) {
        bool ok = true;
        std::function<void(const TermPtr&)> scan = [&](const TermPtr& t) {
            if (t->kind == Term::Kind::Operand) {
                if (t->region.empty()) {
                    if (!have.count(t->base)) ok = false;
                } else if (!have.count(t->base + "_" + t->region)) {
                    ok = false;
                }
            }
            for (auto& k : t->kids) scan(k);
        };
        if (a.rhs->kind != Term::Kind::Call)
            scan(a.rhs);
        if (!ok) return false;
        for (auto& t : a.targets) have.insert(t->region.empty() ? t->base : t->base + "_" + t->region);
    }
    return true;
}

} // namespace flame
