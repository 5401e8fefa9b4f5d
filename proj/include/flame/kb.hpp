#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "flame/property.hpp"

namespace flame {

enum class RuleKind { SameTermCombine, SubtermCompose, EqualityPropagate, FunctionLift, TermRewrite };

// Small pattern language for user-supplied rules. Var indices refer to ?a,
// ?b, ... in order of first appearance.
struct TermPat {
    enum class K { Var, Prod, Sum, Transpose, Inverse, Const } k = K::Var;
    int var = 0;
    ConstKind ckind = ConstKind::Identity;
    std::vector<TermPat> kids;
};

struct InferenceRule {
    RuleKind kind = RuleKind::SubtermCompose;

    enum class Form {
        Combine,          // P1[t] (and P2[t], P3[t]) -> C[t]
        ProductPair,      // P1[a], P2[b], exists a*b -> C[a*b]
        SumIdentityPlus,  // P1[a], exists I+a -> C[I+a]
        SumDiagPlus,      // P1[a], P2[b], P3[b], exists a+b -> C[a+b]
        LiftTranspose,    // P1[a] -> C[a^T]
        LiftInverse,      // P1[a] -> C[a^-1]
        LiftGram,         // P1[a] -> C[a^T a]
        EqProp,           // P[t1], t1 = t2 -> P[t2]
        Rewrite,          // canonicalization; carried out by normalize
        UserPattern,      // premises/conclusion via TermPat
    } form = Form::ProductPair;

    std::vector<PropertyName> premises;
    PropertyName conclusion = PropertyName::Matrix;
    bool band_resolved = false;  // conclusion name refined from band + dims
    std::string label;

    // UserPattern payload
    std::vector<TermPat> premise_pats;
    TermPat existence_pat;
    bool has_existence = false;
    TermPat conclusion_pat;
};

struct Knowledgebase {
    std::vector<InferenceRule> rules;

    bool has_rule(RuleKind k, std::vector<PropertyName> prem, PropertyName concl) const {
        for (auto& r : rules) {
            if (r.kind != k) continue;
            if (r.premises != prem) continue;
            if (r.band_resolved) {
                // band rules nominally conclude the matching-shape name; the
                // square case stands in for the family here
                Band b = Band::diag();
                bool ok = true;
                for (auto p : prem) {
                    if (p == PropertyName::Scalar) continue;
                    auto pb = band_of_property(p);
                    if (!pb) { ok = false; break; }
                    b = b + *pb;
                }
                if (!ok) continue;
                if (r.form == InferenceRule::Form::LiftTranspose) b = b.transposed();
                std::vector<Dims> shapes = {{SymDim::sym('n'), SymDim::sym('n')},
                                            {SymDim::sym('m', 1), SymDim::sym('m')},
                                            {SymDim::sym('m'), SymDim::sym('m', 1)}};
                for (auto& d : shapes) {
                    auto nm = property_for_band(b, d);
                    if (nm && *nm == concl) return true;
                }
                continue;
            }
            if (r.conclusion == concl) return true;
        }
        return false;
    }
};

namespace detail {

inline const std::vector<PropertyName>& bandable_names() {
    static const std::vector<PropertyName> v = {
        PropertyName::Diagonal, PropertyName::DiagonalR,
        PropertyName::UpperDiagonal, PropertyName::UpperDiagonalR,
        PropertyName::LowerDiagonal, PropertyName::LowerDiagonalR,
        PropertyName::UpperTriangular, PropertyName::UpperTriangularR,
        PropertyName::UpperTrapezoidal, PropertyName::LowerTriangular,
        PropertyName::LowerTriangularR, PropertyName::LowerTrapezoidal,
        PropertyName::StrictlyUpperTriangular, PropertyName::UpperHessenberg,
        PropertyName::Zero,
    };
    return v;
}

} // namespace detail

// The curated default knowledgebase, sufficient for every shipped method
// description and extensible through description-file rule lines.
inline Knowledgebase default_kb() {
    Knowledgebase kb;
    auto& R = kb.rules;
    using P = PropertyName;
    using F = InferenceRule::Form;

    auto combine = [&](std::vector<P> prem, P concl, const char* label) {
        InferenceRule r;
        r.kind = RuleKind::SameTermCombine;
        r.form = F::Combine;
        r.premises = std::move(prem);
        r.conclusion = concl;
        r.label = label;
        R.push_back(r);
    };

    combine({P::LowerTriangular, P::Symmetric}, P::Diagonal, "lower+symmetric");
    combine({P::UpperTriangular, P::Symmetric}, P::Diagonal, "upper+symmetric");
    combine({P::LowerTriangular, P::UpperTriangular}, P::Diagonal, "lower+upper");
    combine({P::SPD}, P::NonSingular, "spd nonsingular");
    combine({P::SPD}, P::Symmetric, "spd symmetric");
    combine({P::Diagonal}, P::NonSingular, "diagonal nonsingular (nonzero-diagonal convention)");
    combine({P::UpperDiagonal}, P::StrictlyUpperTriangular, "upper-diagonal is strictly upper");
    combine({P::Orthonormal}, P::Orthogonal, "orthonormal orthogonal");

    // shape closure under products, conclusion resolved by band and dims
    for (P a : detail::bandable_names())
        for (P b : detail::bandable_names()) {
            InferenceRule r;
            r.kind = RuleKind::SubtermCompose;
            r.form = F::ProductPair;
            r.premises = {a, b};
            r.band_resolved = true;
            r.label = std::string(property_name(a)) + " * " + property_name(b);
            R.push_back(r);
        }
    for (P b : detail::bandable_names()) {
        InferenceRule r;
        r.kind = RuleKind::SubtermCompose;
        r.form = F::ProductPair;
        r.premises = {P::Scalar, b};
        r.band_resolved = true;
        r.label = std::string("scalar * ") + property_name(b);
        R.push_back(r);
    }
    {
        InferenceRule r;
        r.kind = RuleKind::SubtermCompose;
        r.form = F::ProductPair;
        r.premises = {P::Scalar, P::ZeroDiagonal};
        r.conclusion = P::ZeroDiagonal;
        r.label = "scalar * zero-diagonal";
        R.push_back(r);
    }

    {
        InferenceRule r;
        r.kind = RuleKind::SubtermCompose;
        r.form = F::SumIdentityPlus;
        r.premises = {P::StrictlyUpperTriangular};
        r.conclusion = P::UpperTriangular;
        r.label = "I + strictly upper is upper";
        R.push_back(r);
        r.conclusion = P::NonSingular;
        r.label = "I + strictly upper is nonsingular";
        R.push_back(r);
    }
    {
        InferenceRule r;
        r.kind = RuleKind::SubtermCompose;
        r.form = F::SumDiagPlus;
        r.premises = {P::Diagonal, P::LowerTriangular, P::ZeroDiagonal};
        r.conclusion = P::LowerTriangular;
        r.label = "diagonal + hollow lower";
        R.push_back(r);
        r.conclusion = P::NonSingular;
        R.push_back(r);
        r.premises = {P::Diagonal, P::UpperTriangular, P::ZeroDiagonal};
        r.conclusion = P::UpperTriangular;
        r.label = "diagonal + hollow upper";
        R.push_back(r);
        r.conclusion = P::NonSingular;
        R.push_back(r);
    }

    {
        InferenceRule r;
        r.kind = RuleKind::EqualityPropagate;
        r.form = F::EqProp;
        r.label = "propagate across equalities";
        R.push_back(r);
    }

    // transpose duals for every shape name
    for (P a : detail::bandable_names()) {
        auto ab = band_of_property(a);
        if (!ab) continue;
        InferenceRule r;
        r.kind = RuleKind::FunctionLift;
        r.form = F::LiftTranspose;
        r.premises = {a};
        r.band_resolved = true;
        r.label = std::string(property_name(a)) + " transposed";
        R.push_back(r);
    }
    for (P a : {P::Symmetric, P::NonSingular, P::ZeroDiagonal}) {
        InferenceRule r;
        r.kind = RuleKind::FunctionLift;
        r.form = F::LiftTranspose;
        r.premises = {a};
        r.conclusion = a;
        r.label = std::string(property_name(a)) + " transposed";
        R.push_back(r);
    }
    // inversion preserves triangularity / diagonality / nonsingularity
    for (P a : {P::Diagonal, P::LowerTriangular, P::UpperTriangular, P::NonSingular}) {
        InferenceRule r;
        r.kind = RuleKind::FunctionLift;
        r.form = F::LiftInverse;
        r.premises = {a};
        r.conclusion = a;
        r.label = std::string(property_name(a)) + " inverted";
        R.push_back(r);
    }
    for (P a : {P::Orthogonal, P::Orthonormal}) {
        InferenceRule r;
        r.kind = RuleKind::FunctionLift;
        r.form = F::LiftGram;
        r.premises = {a};
        r.conclusion = P::Diagonal;
        r.label = std::string(property_name(a)) + " gram diagonal";
        R.push_back(r);
    }

    // canonicalization rewrites, carried out inside normalize
    for (const char* lbl : {"(t1 t2)^T -> t2^T t1^T", "(t1 t2)^-1 -> t2^-1 t1^-1"}) {
        InferenceRule r;
        r.kind = RuleKind::TermRewrite;
        r.form = F::Rewrite;
        r.label = lbl;
        R.push_back(r);
    }

    return kb;
}

// ---- rule application --------------------------------------------------------

struct RuleEngine {
    const Knowledgebase& kb;
    const Algebra& alg;
    int max_len = 3;
    long budget = 10000;
    long fired = 0;

    RuleEngine(const Knowledgebase& kb_, const Algebra& alg_, int max_len_, long budget_)
        : kb(kb_), alg(alg_), max_len(max_len_), budget(budget_) {}

    // occurrence index over the current equation context: canonical keys of
    // every subterm and every contiguous factor run
    std::unordered_set<std::string> eq_index;
    std::string eq_ctx;
    std::set<std::string> tried;  // memo of attempted inferences, per context
    std::map<std::string, TermPtr> lift_cache;

    // factor runs of the context equations, pre-split for the shape closure
    struct Run {
        TermPtr term;
        std::optional<Dims> dims;
        std::vector<std::pair<std::string, std::string>> cuts;  // (prefix key, suffix key)
    };
    std::vector<Run> ctx_runs;

    void begin_closure() {}

    void index_term(const TermPtr& t) {
        if (t->kind == Term::Kind::Product && t->kids.size() >= 2) {
            for (size_t i = 0; i < t->kids.size(); ++i)
                for (size_t len = 2; i + len <= t->kids.size(); ++len) {
                    std::vector<TermPtr> run(t->kids.begin() + i, t->kids.begin() + i + len);
                    TermPtr rt = mul(std::move(run));
                    if (eq_index.insert(key_of(rt)).second) add_run(rt);
                }
        } else {
            eq_index.insert(key_of(t));
        }
        for (auto& k : t->kids) index_term(k);
        for (auto& o : t->outs) index_term(o);
    }

    void add_run(const TermPtr& rt) {
        Run r;
        r.term = rt;
        try {
            r.dims = alg.dims_of(rt);
        } catch (const DimensionMismatch&) {
            return;
        }
        if (!r.dims) return;
        auto& fs = rt->kids;
        for (size_t cut = 1; cut < fs.size(); ++cut) {
            TermPtr pre = cut == 1 ? fs[0] : mul(std::vector<TermPtr>(fs.begin(), fs.begin() + cut));
            TermPtr suf = cut + 1 == fs.size() ? fs[cut]
                                               : mul(std::vector<TermPtr>(fs.begin() + cut, fs.end()));
            r.cuts.push_back({key_of(pre), key_of(suf)});
        }
        ctx_runs.push_back(std::move(r));
    }

    void set_context(const std::vector<Equation>& eqs) {
        std::string tag = std::to_string(eqs.size());
        for (auto& e : eqs) tag += "|" + key_of(e.lhs).substr(0, 24);
        if (!eqs.empty()) tag += eqs.back().key();
        if (tag == eq_ctx) return;
        eq_ctx = tag;
        eq_index.clear();
        tried.clear();
        ctx_runs.clear();
        for (auto& e : eqs) {
            index_term(e.lhs);
            index_term(e.rhs);
        }
    }

    bool occurs(const TermPtr& t) const { return eq_index.count(key_of(t)) != 0; }

    static int subject_len(const TermPtr& t) {
        TermPtr s = Algebra::strip_sign(t);
        if (s->kind == Term::Kind::Product) return int(s->kids.size());
        return 1;
    }

    bool add_property(PropertySet& P, PropertySet& temp, PropertyName name, const TermPtr& subject) {
        Property p{name, alg.normalize(subject)};
        if (subject_len(p.subject) > max_len) return temp.add(std::move(p));
        bool added = P.add(std::move(p));
        if (added && ++fired > budget && budget >= 0)
            throw FlameError("NonTermination", "rule firing budget exceeded");
        return added;
    }

    bool holds(const PropertySet& P, const PropertySet& temp, PropertyName n, const TermPtr& t) const {
        return P.contains(n, t) || temp.contains(n, t);
    }

    std::vector<Property> premises_named(const PropertySet& P, const PropertySet& temp,
                                          PropertyName n) const {
        std::vector<Property> out;
        for (auto& p : P.items)
            if (p.name == n) out.push_back(p);
        for (auto& p : temp.items)
            if (p.name == n) out.push_back(p);
        return out;
    }

    bool kb_has_band_pairs() const {
        for (auto& r : kb.rules)
            if (r.form == InferenceRule::Form::ProductPair && r.band_resolved) return true;
        return false;
    }

    // Grouped application of the generated shape-closure rules, driven from
    // the equations: every factor run that splits into two parts with known
    // bands yields the banded property of the run.
    bool band_pair_sweep(PropertySet& P, PropertySet& temp) {
        bool changed = false;
        std::unordered_map<std::string, Band> subj_band;
        auto feed = [&](const PropertySet& src) {
            for (auto& p : src.items) {
                Band b = Band::full();
                if (auto pb = band_of_property(p.name)) b = *pb;
                else if (p.name == PropertyName::Scalar) b = Band::diag();
                else continue;
                auto k = key_of(p.subject);
                auto it = subj_band.find(k);
                if (it == subj_band.end()) subj_band.emplace(std::move(k), b);
                else {
                    it->second.lo = std::max(it->second.lo, b.lo);
                    it->second.hi = std::min(it->second.hi, b.hi);
                }
            }
        };
        feed(P);
        feed(temp);
        for (auto& run : ctx_runs) {
            for (auto& [kpre, ksuf] : run.cuts) {
                auto a = subj_band.find(kpre);
                if (a == subj_band.end()) continue;
                auto b = subj_band.find(ksuf);
                if (b == subj_band.end()) continue;
                Band sum = a->second + b->second;
                auto nm = property_for_band(sum, *run.dims);
                if (!nm) continue;
                changed |= add_property(P, temp, *nm, run.term);
            }
        }
        return changed;
    }

    // one saturation pass; returns true when anything was added
    bool pass(PropertySet& P, PropertySet& temp, const std::vector<Equation>& eqs) {
        set_context(eqs);
        bool changed = false;
        if (kb_has_band_pairs()) changed |= band_pair_sweep(P, temp);
        for (auto& rule : kb.rules) {
            switch (rule.form) {
                case InferenceRule::Form::Combine: {
                    for (auto p0 : premises_named(P, temp, rule.premises[0])) {
                        bool ok = true;
                        for (size_t i = 1; i < rule.premises.size(); ++i)
                            if (!holds(P, temp, rule.premises[i], p0.subject)) { ok = false; break; }
                        if (ok) changed |= add_property(P, temp, rule.conclusion, p0.subject);
                    }
                    break;
                }
                case InferenceRule::Form::ProductPair: {
                    if (rule.band_resolved) break;  // handled by the grouped sweep below
                    auto as = premises_named(P, temp, rule.premises[0]);
                    auto bs = premises_named(P, temp, rule.premises[1]);
                    if (as.empty() || bs.empty()) break;
                    for (auto& pa : as)
                        for (auto& pb : bs) {
                            std::string memo = "pp" + rule.label + "#" + pa.key() + "#" + pb.key();
                            if (tried.count(memo)) continue;
                            tried.insert(memo);
                            try {
                                std::vector<TermPtr> fs;
                                if (rule.premises[0] == PropertyName::Scalar) fs.push_back(pa.subject);
                                else {
                                    auto fa = factors_of(pa.subject);
                                    fs.insert(fs.end(), fa.begin(), fa.end());
                                }
                                auto fb = factors_of(pb.subject);
                                fs.insert(fs.end(), fb.begin(), fb.end());
                                if (fs.size() < 2) continue;
                                TermPtr subject = alg.normalize(mul(fs));
                                if (subject->kind != Term::Kind::Product) continue;
                                if (!occurs(subject)) continue;
                                changed |= add_property(P, temp, rule.conclusion, subject);
                            } catch (const DimensionMismatch&) {
                            }
                        }
                    break;
                }
                case InferenceRule::Form::SumIdentityPlus:
                case InferenceRule::Form::SumDiagPlus: {
                    // match sum subterms present in the equations
                    std::vector<TermPtr> sums;
                    std::set<std::string> seen;
                    std::function<void(const TermPtr&)> collect = [&](const TermPtr& t) {
                        if (t->kind == Term::Kind::Sum && t->kids.size() == 2) {
                            auto k = key_of(t);
                            if (!seen.count(k)) { seen.insert(k); sums.push_back(t); }
                        }
                        for (auto& k : t->kids) collect(k);
                        for (auto& o : t->outs) collect(o);
                    };
                    for (auto& e : eqs) { collect(e.lhs); collect(e.rhs); }
                    for (auto& s : sums) {
                        for (int orient = 0; orient < 2; ++orient) {
                            TermPtr first = s->kids[orient];
                            TermPtr second = s->kids[1 - orient];
                            if (rule.form == InferenceRule::Form::SumIdentityPlus) {
                                if (!(first->kind == Term::Kind::Const && first->ckind == ConstKind::Identity))
                                    continue;
                                TermPtr a = Algebra::strip_sign(second);
                                if (!holds(P, temp, rule.premises[0], a)) continue;
                            } else {
                                TermPtr a = Algebra::strip_sign(first);
                                TermPtr b = Algebra::strip_sign(second);
                                if (!holds(P, temp, rule.premises[0], a)) continue;
                                if (!holds(P, temp, rule.premises[1], b)) continue;
                                if (!holds(P, temp, rule.premises[2], b)) continue;
                            }
                            changed |= add_property(P, temp, rule.conclusion, s);
                            break;
                        }
                    }
                    break;
                }
                case InferenceRule::Form::EqProp: {
                    for (auto& e : eqs) {
                        for (int side = 0; side < 2; ++side) {
                            const TermPtr& from = side ? e.rhs : e.lhs;
                            const TermPtr& to = side ? e.lhs : e.rhs;
                            TermPtr fs = Algebra::strip_sign(from);
                            // propagate every stored property of the full side
                            auto try_all = [&](const PropertySet& src) {
                                for (auto& p : src.items) {
                                    if (!PropertySet::sign_insensitive(p.name) &&
                                        p.name != PropertyName::Square)
                                        continue;
                                    if (term_eq(p.subject, fs))
                                        changed |= add_property(P, temp, p.name, to);
                                }
                            };
                            try_all(P);
                            try_all(temp);
                        }
                    }
                    break;
                }
                case InferenceRule::Form::LiftTranspose: {
                    for (auto p0 : premises_named(P, temp, rule.premises[0])) {
                        std::string memo = "lt" + rule.label + "#" + p0.key();
                        auto it = lift_cache.find(memo);
                        TermPtr subject;
                        if (it != lift_cache.end()) subject = it->second;
                        else {
                            subject = alg.transpose_of(p0.subject);
                            lift_cache[memo] = subject;
                        }
                        PropertyName concl = rule.conclusion;
                        if (rule.band_resolved) {
                            auto b = band_of_property(p0.name);
                            if (!b) continue;
                            auto d = alg.dims_of(subject);
                            if (!d) continue;
                            auto nm = property_for_band(b->transposed(), *d);
                            if (!nm) continue;
                            concl = *nm;
                        }
                        changed |= add_property(P, temp, concl, subject);
                    }
                    break;
                }
                case InferenceRule::Form::LiftInverse: {
                    for (auto p0 : premises_named(P, temp, rule.premises[0])) {
                        std::string memo = "li" + rule.label + "#" + p0.key();
                        auto it = lift_cache.find(memo);
                        TermPtr subject;
                        if (it != lift_cache.end()) subject = it->second;
                        else {
                            if (!alg.known_square(p0.subject)) continue;
                            subject = alg.inverse_of(p0.subject);
                            lift_cache[memo] = subject;
                        }
                        changed |= add_property(P, temp, rule.conclusion, subject);
                    }
                    break;
                }
                case InferenceRule::Form::LiftGram: {
                    for (auto p0 : premises_named(P, temp, rule.premises[0])) {
                        std::string memo = "lg#" + p0.key();
                        auto it = lift_cache.find(memo);
                        TermPtr subject;
                        if (it != lift_cache.end()) subject = it->second;
                        else {
                            subject = alg.normalize(mul({tr(p0.subject), p0.subject}));
                            lift_cache[memo] = subject;
                        }
                        changed |= add_property(P, temp, rule.conclusion, subject);
                    }
                    break;
                }
                case InferenceRule::Form::UserPattern: {
                    changed |= apply_user_rule(rule, P, temp, eqs);
                    break;
                }
                case InferenceRule::Form::Rewrite:
                    break;
            }
        }
        return changed;
    }

    // ---- user-defined pattern rules ----------------------------------------

    bool match_pat(const TermPat& pat, const TermPtr& t, std::vector<TermPtr>& bind) const {
        switch (pat.k) {
            case TermPat::K::Var: {
                if (int(bind.size()) <= pat.var) bind.resize(pat.var + 1);
                if (bind[pat.var]) return term_eq(bind[pat.var], t);
                bind[pat.var] = t;
                return true;
            }
            case TermPat::K::Const:
                return t->kind == Term::Kind::Const && t->ckind == pat.ckind && !t->transposed && !t->inverted;
            case TermPat::K::Transpose: {
                // match by un-transposing the term
                TermPtr u = alg.transpose_of(t);
                return match_pat(pat.kids[0], u, bind);
            }
            case TermPat::K::Inverse: {
                if (t->kind == Term::Kind::Inverse) return match_pat(pat.kids[0], t->kids[0], bind);
                if ((t->kind == Term::Kind::Operand || t->kind == Term::Kind::Const) && t->inverted)
                    return match_pat(pat.kids[0], with_flags(t, t->transposed, false), bind);
                return false;
            }
            case TermPat::K::Prod: {
                auto fs = factors_of(t);
                if (fs.size() != pat.kids.size()) return false;
                for (size_t i = 0; i < fs.size(); ++i)
                    if (!match_pat(pat.kids[i], fs[i], bind)) return false;
                return true;
            }
            case TermPat::K::Sum: {
                if (t->kind != Term::Kind::Sum || t->kids.size() != pat.kids.size()) return false;
                // sums are small here; try the two orders for binary sums
                std::vector<TermPtr> save = bind;
                auto attempt = [&](const std::vector<int>& perm) {
                    bind = save;
                    for (size_t i = 0; i < perm.size(); ++i)
                        if (!match_pat(pat.kids[i], Algebra::strip_sign(t->kids[perm[i]]), bind)) return false;
                    return true;
                };
                if (pat.kids.size() == 2) return attempt({0, 1}) || attempt({1, 0});
                std::vector<int> id(pat.kids.size());
                for (size_t i = 0; i < id.size(); ++i) id[i] = int(i);
                return attempt(id);
            }
        }
        return false;
    }

    TermPtr instantiate(const TermPat& pat, const std::vector<TermPtr>& bind) const {
        switch (pat.k) {
            case TermPat::K::Var: return bind.at(pat.var);
            case TermPat::K::Const: return cst(pat.ckind, SymDim(), SymDim());
            case TermPat::K::Transpose: return tr(instantiate(pat.kids[0], bind));
            case TermPat::K::Inverse: return inv(instantiate(pat.kids[0], bind));
            case TermPat::K::Prod: {
                std::vector<TermPtr> fs;
                for (auto& k : pat.kids) fs.push_back(instantiate(k, bind));
                return mul(std::move(fs));
            }
            case TermPat::K::Sum: {
                std::vector<TermPtr> ts;
                for (auto& k : pat.kids) ts.push_back(instantiate(k, bind));
                return add(std::move(ts));
            }
        }
        return nullptr;
    }

    bool apply_user_rule(const InferenceRule& rule, PropertySet& P, PropertySet& temp,
                         const std::vector<Equation>& eqs) {
        bool changed = false;
        std::vector<std::vector<TermPtr>> binds{{}};
        for (size_t i = 0; i < rule.premises.size(); ++i) {
            std::vector<std::vector<TermPtr>> next;
            for (auto& b : binds)
                for (auto& cand : premises_named(P, temp, rule.premises[i])) {
                    std::vector<TermPtr> nb = b;
                    if (match_pat(rule.premise_pats[i], cand.subject, nb)) next.push_back(std::move(nb));
                }
            binds = std::move(next);
            if (binds.empty()) return false;
        }
        for (auto& b : binds) {
            if (rule.has_existence) {
                TermPtr needle = alg.normalize(instantiate(rule.existence_pat, b));
                bool found = false;
                for (auto& e : eqs)
                    if (occurs_in_eq(e, needle)) { found = true; break; }
                if (!found) continue;
            }
            try {
                TermPtr subject = alg.normalize(instantiate(rule.conclusion_pat, b));
                changed |= add_property(P, temp, rule.conclusion, subject);
            } catch (const DimensionMismatch&) {
            }
        }
        return changed;
    }
};

// One saturation pass over the rules.
inline PropertySet apply_rules_once(const Knowledgebase& kb, const Algebra& alg,
                                    const PropertySet& props, const std::vector<Equation>& eqs,
                                    int max_len = 3) {
    PropertySet P = props;
    PropertySet temp;
    RuleEngine eng(kb, alg, max_len, -1);
    eng.pass(P, temp, eqs);
    return P;
}

} // namespace flame
