#pragma once

#include <set>
#include <string>
#include <vector>

#include "flame/decls.hpp"
#include "flame/kb.hpp"

namespace flame {

struct UndeclaredOperand : FlameError {
    explicit UndeclaredOperand(const std::string& w) : FlameError("UndeclaredOperand", w) {}
};

struct DerivationState {
    PropertySet props;      // P
    std::vector<Equation> eqs;  // E
    std::set<std::string> eq_keys;
    PropertySet temp;       // overlength properties, usable once as premises
    int max_prop_len = 3;
    long budget = 10000;

    bool add_eq(Equation e) {
        auto k = e.key();
        if (eq_keys.count(k)) return false;
        eq_keys.insert(k);
        eqs.push_back(std::move(e));
        return true;
    }
};

// P starts from the type-describing precondition properties (Input/Output
// flags never enter), E from the postcondition equations.
inline DerivationState initialize(const MethodDescription& desc, const Algebra& alg,
                                  int max_prop_len = 3, long budget = 10000) {
    DerivationState st;
    st.max_prop_len = max_prop_len;
    st.budget = budget;

    for (auto& e : desc.post) {
        std::function<void(const TermPtr&)> check = [&](const TermPtr& t) {
            if (t->kind == Term::Kind::Operand && !desc.find(t->base))
                throw UndeclaredOperand(t->base);
            for (auto& k : t->kids) check(k);
        };
        check(e.lhs);
        check(e.rhs);
    }

    for (auto& o : desc.operands) {
        TermPtr ref = opnd(o.name);
        auto d = o.dims();
        bool is_vec = d.second.is_one() && !d.first.is_one();
        bool is_scalar = d.first.is_one() && d.second.is_one();
        st.props.add({is_scalar ? PropertyName::Scalar : is_vec ? PropertyName::Vector : PropertyName::Matrix, ref});
        if (d.first == d.second && !is_scalar) st.props.add({PropertyName::Square, ref});
        for (auto p : o.props) {
            if (p == PropertyName::Input || p == PropertyName::Output || p == PropertyName::FirstColumnInput)
                continue;  // superfluous for the derivation
            st.props.add({p, ref});
        }
    }
    for (auto& p : desc.term_properties) st.props.add({p.name, alg.normalize(p.subject)});
    for (auto& e : desc.post) st.add_eq({alg.normalize(e.lhs), alg.normalize(e.rhs)});
    return st;
}

// Saturate the rule set over the current P/E (plus an optional extra
// equation, whose conclusions may be kept while the equation is not).
inline void derivation_closure(const Knowledgebase& kb, const Algebra& alg, DerivationState& st,
                               const Equation* extra, RuleEngine& eng) {
    std::vector<Equation> eqs = st.eqs;
    if (extra) eqs.push_back(*extra);
    eng.begin_closure();
    while (eng.pass(st.props, st.temp, eqs)) {
    }
}

// Matrix Inversion step: multiply inverses of provably nonsingular boundary
// factors onto both sides, growing E until no new equations appear.
inline void invert_step(const Knowledgebase& kb, const Algebra& alg, DerivationState& st, RuleEngine& eng) {
    auto nonsingular = [&](const TermPtr& t) {
        return st.props.contains(PropertyName::NonSingular, t) ||
               st.temp.contains(PropertyName::NonSingular, t);
    };
    bool changed = true;
    while (changed) {
        changed = false;
        // snapshot; new equations are processed on later sweeps
        std::vector<Equation> snapshot = st.eqs;
        for (auto& e : snapshot) {
            for (int side = 0; side < 2; ++side) {
                const TermPtr& s = side ? e.rhs : e.lhs;
                const TermPtr& o = side ? e.lhs : e.rhs;
                auto fs = factors_of(s);
                if (fs.empty()) continue;
                Rat coeff = s->kind == Term::Kind::Product ? s->coeff : Rat(1);
                // leftmost factor
                if (nonsingular(fs.front())) {
                    TermPtr invf = alg.inverse_of(fs.front());
                    std::vector<TermPtr> rest(fs.begin() + 1, fs.end());
                    TermPtr ns = rest.empty() ? lit(coeff) : alg.normalize(mul(rest, coeff));
                    TermPtr no = alg.normalize(mul({invf, o}));
                    Equation ne = side ? Equation{no, ns} : Equation{ns, no};
                    if (st.add_eq(ne)) changed = true;
                }
                // rightmost factor
                if (fs.size() >= 1 && nonsingular(fs.back())) {
                    TermPtr invf = alg.inverse_of(fs.back());
                    std::vector<TermPtr> rest(fs.begin(), fs.end() - 1);
                    TermPtr ns = rest.empty() ? lit(coeff) : alg.normalize(mul(rest, coeff));
                    TermPtr no = alg.normalize(mul({o, invf}));
                    Equation ne = side ? Equation{no, ns} : Equation{ns, no};
                    if (st.add_eq(ne)) changed = true;
                }
            }
        }
        if (changed) derivation_closure(kb, alg, st, nullptr, eng);
    }
}

// Application of Properties: split each product-subject property in all ways,
// multiply the complementary part onto matching equations, and harvest the
// properties the resulting equation yields. The equation itself is discarded,
// and with it the overlength temporaries.
inline void apply_properties_step(const Knowledgebase& kb, const Algebra& alg, DerivationState& st,
                                  RuleEngine& eng) {
    bool changed = true;
    while (changed) {
        changed = false;
        // identical multiplied equations recur across splits; one closure per
        // round suffices (the round repeats while anything changes)
        std::set<std::string> seen_eprime;
        std::vector<Property> snapshot = st.props.items;
        for (auto& p : snapshot) {
            TermPtr subj = Algebra::strip_sign(p.subject);
            if (subj->kind != Term::Kind::Product) continue;
            auto fs = subj->kids;
            if (int(fs.size()) < 2 || int(fs.size()) > st.max_prop_len) continue;
            for (size_t cut = 1; cut < fs.size(); ++cut) {
                TermPtr left = cut == 1 ? fs[0] : mul(std::vector<TermPtr>(fs.begin(), fs.begin() + cut));
                TermPtr right = cut + 1 == fs.size() ? fs[cut]
                                                     : mul(std::vector<TermPtr>(fs.begin() + cut, fs.end()));
                for (auto& e : st.eqs) {
                    for (int side = 0; side < 2; ++side) {
                        const TermPtr& s = side ? e.rhs : e.lhs;
                        auto sf = factors_of(s);
                        if (sf.empty()) continue;
                        // `right` is a prefix of this side: multiply `left` from the left
                        auto rf = factors_of(right);
                        bool prefix = sf.size() >= rf.size();
                        for (size_t i = 0; prefix && i < rf.size(); ++i)
                            if (!term_eq(sf[i], rf[i])) prefix = false;
                        if (prefix) {
                            Equation ep{alg.normalize(mul({left, e.lhs})), alg.normalize(mul({left, e.rhs}))};
                            if (seen_eprime.insert(ep.key()).second) {
                                size_t before = st.props.size();
                                derivation_closure(kb, alg, st, &ep, eng);
                                st.temp = PropertySet{};
                                if (st.props.size() != before) changed = true;
                            }
                        }
                        // `left` is a suffix: multiply `right` from the right
                        auto lf = factors_of(left);
                        bool suffix = sf.size() >= lf.size();
                        for (size_t i = 0; suffix && i < lf.size(); ++i)
                            if (!term_eq(sf[sf.size() - lf.size() + i], lf[i])) suffix = false;
                        if (suffix) {
                            Equation ep{alg.normalize(mul({e.lhs, right})), alg.normalize(mul({e.rhs, right}))};
                            if (seen_eprime.insert(ep.key()).second) {
                                size_t before = st.props.size();
                                derivation_closure(kb, alg, st, &ep, eng);
                                st.temp = PropertySet{};
                                if (st.props.size() != before) changed = true;
                            }
                        }
                    }
                }
            }
        }
    }
}

// The full pipeline: Initialization, Derivation of Properties, Matrix
// Inversion, Application of Properties.
inline DerivationState derive_state(const MethodDescription& desc, const Knowledgebase& kb,
                                    const Algebra& alg, int max_prop_len = 3, long budget = 10000) {
    DerivationState st = initialize(desc, alg, max_prop_len, budget);
    RuleEngine eng(kb, alg, max_prop_len, budget);
    derivation_closure(kb, alg, st, nullptr, eng);
    st.temp = PropertySet{};
    invert_step(kb, alg, st, eng);
    st.temp = PropertySet{};
    apply_properties_step(kb, alg, st, eng);
    return st;
}

inline PropertySet derive_all(const MethodDescription& desc, const Knowledgebase& kb, const Algebra& alg,
                              int max_prop_len = 3, long budget = 10000) {
    return derive_state(desc, kb, alg, max_prop_len, budget).props;
}

} // namespace flame
