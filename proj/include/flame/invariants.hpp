#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flame/pme.hpp"

namespace flame {

struct CyclicPME : FlameError {
    explicit CyclicPME(const std::string& w) : FlameError("CyclicPME", w) {}
};

struct UnknownPredicateForm : FlameError {
    explicit UnknownPredicateForm(const std::string& w) : FlameError("UnknownPredicateForm", w) {}
};

struct DependencyGraph {
    int nodes = 0;                          // 1-based indices into pme.assignments
    std::vector<std::pair<int, int>> edges; // producer -> consumer

    std::vector<int> predecessors(int node) const {
        std::vector<int> out;
        for (auto& [a, b] : edges)
            if (b == node) out.push_back(a);
        return out;
    }
    bool has_edge(int a, int b) const {
        return std::find(edges.begin(), edges.end(), std::make_pair(a, b)) != edges.end();
    }
};

// Edges follow target mentions: producer's target appears in consumer's rhs.
inline DependencyGraph build_graph(const PME& pme) {
    DependencyGraph g;
    g.nodes = int(pme.assignments.size());
    auto mentions = [](const TermPtr& t, const TermPtr& target) {
        std::function<bool(const TermPtr&)> walk = [&](const TermPtr& x) -> bool {
            if (x->kind == Term::Kind::Operand && x->base == target->base && x->region == target->region)
                return true;
            for (auto& k : x->kids)
                if (walk(k)) return true;
            return false;
        };
        return walk(t);
    };
    for (int p = 0; p < g.nodes; ++p)
        for (int c = p + 1; c < g.nodes; ++c) {
            bool dep = false;
            for (auto& tgt : pme.assignments[p].targets) {
                const TermPtr& rhs = pme.assignments[c].rhs;
                if (rhs->kind == Term::Kind::Call) {
                    for (auto& a : rhs->kids)
                        if (mentions(a, tgt)) dep = true;
                } else if (mentions(rhs, tgt)) {
                    dep = true;
                }
                if (dep) break;
            }
            if (dep) g.edges.push_back({p + 1, c + 1});
        }
    // sanity: forward-only edges make cycles impossible for valid PMEs
    for (auto& [a, b] : g.edges)
        if (a >= b) throw CyclicPME("backward dependency");
    return g;
}

struct LoopGuard {
    enum class Form { NormLastKnownCol, SizeBound, SuccessiveDiff } form = Form::NormLastKnownCol;
    std::string operand;
    SymDim bound_rows, bound_cols;  // SizeBound

    std::string str() const {
        switch (form) {
            case Form::NormLastKnownCol: return "|| " + lower_stem(operand) + "_R || >= eps";
            case Form::SizeBound:
                return "size([" + operand + "_L | " + lower_stem(operand) + "_R]) < " +
                       bound_rows.str() + " x " + bound_cols.str();
            case Form::SuccessiveDiff:
                return "|| " + lower_stem(operand) + "_R - " + operand + "_L er^T || >= eps";
        }
        return "?";
    }
};

// Look-up table for loop guards: row chosen by the extra postcondition
// predicate, column by the operand's input property.
inline LoopGuard select_guard(const GuardSpec& extra, const MethodDescription& desc) {
    const OperandDecl* o = desc.find(extra.operand);
    if (!o) throw UndeclaredOperand(extra.operand);
    bool first_col = o->kind == OperandKind::FirstColumnInput;
    bool output = o->kind == OperandKind::Output;
    if (!first_col && !output)
        throw UnknownPredicateForm("guard operand " + extra.operand + " is neither FirstColumnInput nor Output");
    LoopGuard g;
    g.operand = extra.operand;
    switch (extra.form) {
        case GuardSpec::Form::NormLastCol:
            g.form = LoopGuard::Form::NormLastKnownCol;
            break;
        case GuardSpec::Form::SizeBound:
            g.form = LoopGuard::Form::SizeBound;
            g.bound_rows = extra.bound_rows;
            g.bound_cols = extra.bound_cols;
            break;
        case GuardSpec::Form::DiffLastCols:
            g.form = LoopGuard::Form::SuccessiveDiff;
            break;
    }
    // Output-operand guards reference B_L's last column instead of b_R; the
    // interpreter resolves the distinction through `output_flavour`.
    return g;
}

struct LoopInvariant {
    std::vector<int> nodes;  // ascending, always contains 1
    const PME* pme = nullptr;

    std::string str() const {
        std::string s = "{";
        for (size_t i = 0; i < nodes.size(); ++i) s += (i ? "," : "") + std::to_string(nodes[i]);
        return s + "}";
    }
};

// All nonempty predecessor-closed subsets containing node 1, ordered by
// (size, lexicographic). Feasibility: constraint 1 holds constructively when
// the initial sizes reduce every non-root node to a computable preprocessing
// assignment; constraint 2 holds by node-1 membership plus guard
// compatibility. Under a size-bound guard the postcondition pins the
// operand's extent exactly, so invariants computing extra columns of the
// bounded operand are rejected.
inline std::vector<LoopInvariant> enumerate_invariants(const DependencyGraph& g, const PME& pme,
                                                       const MethodDescription& desc,
                                                       const PartitionScheme& scheme,
                                                       const std::optional<GuardSpec>& guard_spec) {
    int n = g.nodes;
    std::vector<LoopInvariant> out;
    std::vector<std::vector<int>> preds(n + 1);
    for (auto& [a, b] : g.edges) preds[b].push_back(a);

    std::optional<std::string> size_bound_operand;
    if (guard_spec && guard_spec->form == GuardSpec::Form::SizeBound)
        size_bound_operand = guard_spec->operand;

    Algebra alg0 = initial_algebra(scheme);

    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        if (!(mask & 1u)) continue;  // node 1 always present
        bool closed = true;
        for (int v = 1; v <= n && closed; ++v) {
            if (!(mask >> (v - 1) & 1u)) continue;
            for (int p : preds[v])
                if (!(mask >> (p - 1) & 1u)) { closed = false; break; }
        }
        if (!closed) continue;

        LoopInvariant inv;
        inv.pme = &pme;
        for (int v = 1; v <= n; ++v)
            if (mask >> (v - 1) & 1u) inv.nodes.push_back(v);

        // constraint 2, size-bound compatibility
        if (size_bound_operand) {
            bool extra_col = false;
            for (int v : inv.nodes) {
                if (v == 1) continue;
                for (auto& t : pme.assignments[v - 1].targets)
                    if (t->base == *size_bound_operand) extra_col = true;
            }
            if (extra_col) continue;
        }

        // constraint 1: initial sizes must reduce the non-root nodes to
        // assignments whose inputs are known at start
        bool feasible = true;
        std::set<std::string> have;
        for (auto& o : desc.operands) {
            if (o.kind == OperandKind::Input) have.insert(o.name);
            if (o.kind == OperandKind::FirstColumnInput && o.underlined_of.empty())
                have.insert(o.name + "_R");  // with L empty, the R column is the known first column
        }
        for (int v : inv.nodes) {
            if (v == 1) continue;
            const Assignment& a = pme.assignments[v - 1];
            bool drop = true;
            for (auto& t : a.targets) {
                auto d = alg0.dims_of(t);
                if (d && !(d->first.is_zero() || d->second.is_zero())) drop = false;
            }
            if (drop) continue;
            TermPtr rhs0 = alg0.normalize(a.rhs);
            std::function<void(const TermPtr&)> scan = [&](const TermPtr& t) {
                if (!feasible) return;
                if (t->kind == Term::Kind::Operand) {
                    std::string key = t->region.empty() ? t->base : t->base + "_" + t->region;
                    auto d = alg0.dims_of(t);
                    bool vanished = d && (d->first.is_zero() || d->second.is_zero());
                    if (!vanished && !have.count(key)) feasible = false;
                }
                for (auto& k : t->kids) scan(k);
            };
            scan(rhs0);
            if (!feasible) break;
            for (auto& t : a.targets) have.insert(t->region.empty() ? t->base : t->base + "_" + t->region);
        }
        if (!feasible) continue;
        out.push_back(std::move(inv));
    }

    std::sort(out.begin(), out.end(), [](const LoopInvariant& a, const LoopInvariant& b) {
        if (a.nodes.size() != b.nodes.size()) return a.nodes.size() < b.nodes.size();
        return a.nodes < b.nodes;
    });
    return out;
}

// ---- equivalence of loop invariants ---------------------------------------------

struct ReplacementMap {
    std::vector<std::pair<TermPtr, TermPtr>> entries;

    std::string str() const {
        std::string s;
        for (auto& [a, b] : entries) s += print_term(a) + " -> " + print_term(b) + "\n";
        return s;
    }
};

struct SearchBudgetExceeded : FlameError {
    explicit SearchBudgetExceeded(const std::string& w) : FlameError("SearchBudgetExceeded", w) {}
};

namespace detail {

inline std::set<std::string> assignment_keyset(const std::vector<Assignment>& as) {
    std::set<std::string> s;
    for (auto& a : as) s.insert(a.key());
    return s;
}

} // namespace detail

// Applies the region-shift map to every invariant assignment. The shifted
// recursive call stands for the whole PME (the inductive reading); shifted
// explicit assignments are flattened with grid arithmetic and, for
// inverse-form right-hand sides, the built-in triangular-solve expansion from
// worksheet construction (declared there).
std::vector<Assignment> expand_shifted(const MethodDescription& desc, const PartitionScheme& scheme,
                                       const RegionMaps& maps, const PME& pme,
                                       const std::vector<int>& nodes, const Subst& which,
                                       Algebra& alg);

// Two invariants over the same PME are equivalent when the region-shift
// replacement (the symbolic-size-respecting merge of the freshly computed
// column into the traversed region) rewrites one assignment set into the
// other after flattening.
inline std::optional<ReplacementMap> are_equivalent(const MethodDescription& desc,
                                                    const PartitionScheme& scheme_in,
                                                    const RegionMaps& maps, const LoopInvariant& a,
                                                    const LoopInvariant& b) {
    PartitionScheme scheme = scheme_in;
    const PME& pme = *a.pme;
    auto set_of = [&](const LoopInvariant& v) {
        std::vector<Assignment> as;
        for (int i : v.nodes) as.push_back(pme.assignments[i - 1]);
        return as;
    };
    auto sa = set_of(a), sb = set_of(b);
    if (detail::assignment_keyset(sa) == detail::assignment_keyset(sb)) return ReplacementMap{};

    auto attempt = [&](const std::vector<Assignment>& from, const std::vector<Assignment>& to,
                       const std::vector<int>& from_nodes) -> std::optional<ReplacementMap> {
        Algebra alg = scheme.region_alg;
        std::vector<Assignment> shifted;
        try {
            shifted = expand_shifted(desc, scheme, maps, pme, from_nodes, maps.shift, alg);
        } catch (const FlameError&) {
            return std::nullopt;
        }
        if (detail::assignment_keyset(shifted) == detail::assignment_keyset(to)) {
            ReplacementMap m;
            std::set<std::string> mentioned;
            std::function<void(const TermPtr&)> collect = [&](const TermPtr& t) {
                if (t->kind == Term::Kind::Operand) mentioned.insert(key_of(with_flags(t, false, false)));
                for (auto& k : t->kids) collect(k);
                for (auto& o : t->outs) collect(o);
            };
            for (auto& asg : from) {
                for (auto& t : asg.targets) collect(t);
                collect(asg.rhs);
            }
            for (auto& [k, v] : maps.shift.rules)
                if (mentioned.count(key_of(k))) m.entries.push_back({k, v});
            return m;
        }
        return std::nullopt;
    };

    if (auto m = attempt(sa, sb, a.nodes)) return m;
    if (auto m = attempt(sb, sa, b.nodes)) return m;
    return std::nullopt;
}

} // namespace flame
