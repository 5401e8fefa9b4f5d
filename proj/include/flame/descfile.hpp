#pragma once

#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flame/decls.hpp"
#include "flame/derivation.hpp"

namespace flame {

struct ParseError : FlameError {
    int line, col;
    ParseError(int line_, int col_, const std::string& w)
        : FlameError("ParseError", "line " + std::to_string(line_) + ", col " + std::to_string(col_) + ": " + w),
          line(line_), col(col_) {}
};

namespace descparse {

struct Tok {
    enum class K { Ident, Number, Sym, End } k = K::End;
    std::string text;
    int col = 0;
};

inline std::vector<Tok> lex(const std::string& s, int line) {
    std::vector<Tok> out;
    size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        int col = int(i) + 1;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '?') {
            size_t j = i + 1;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
            out.push_back({Tok::K::Ident, s.substr(i, j - i), col});
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t j = i + 1;
            while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '/')) ++j;
            out.push_back({Tok::K::Number, s.substr(i, j - i), col});
            i = j;
            continue;
        }
        if (c == '=' && i + 1 < s.size() && s[i + 1] == '>') {
            out.push_back({Tok::K::Sym, "=>", col});
            i += 2;
            continue;
        }
        static const std::string single = "()*+-=:,;<>[]x";
        if (single.find(c) != std::string::npos) {
            out.push_back({Tok::K::Sym, std::string(1, c), col});
            ++i;
            continue;
        }
        throw ParseError(line, col, std::string("unexpected character '") + c + "'");
    }
    out.push_back({Tok::K::End, "", int(s.size()) + 1});
    return out;
}

struct Cursor {
    const std::vector<Tok>* toks;
    size_t pos = 0;
    int line = 0;

    const Tok& peek() const { return (*toks)[pos]; }
    Tok next() { return (*toks)[pos++]; }
    bool accept(const std::string& t) {
        if (peek().text == t && peek().k != Tok::K::End) { ++pos; return true; }
        return false;
    }
    void expect(const std::string& t) {
        if (!accept(t)) throw ParseError(line, peek().col, "expected '" + t + "'");
    }
    bool at_end() const { return peek().k == Tok::K::End; }
};

// unknown constant dims use the placeholder variable '?'
inline SymDim unknown_dim() { return SymDim('?', 1, 0); }
inline bool is_unknown(const SymDim& d) { return d.var == '?'; }

inline std::optional<ConstKind> const_of(const std::string& id) {
    if (id == "I") return ConstKind::Identity;
    if (id == "J") return ConstKind::LowerShift;
    if (id == "Iu") return ConstKind::IdentityDropLast;
    if (id == "Ju") return ConstKind::LowerShiftDropLast;
    if (id == "e0") return ConstKind::UnitFirst;
    if (id == "er") return ConstKind::UnitLast;
    if (id == "e") return ConstKind::Ones;
    return std::nullopt;
}

struct ExprParser {
    Cursor& c;
    const MethodDescription& desc;

    TermPtr parse_expr() {
        TermPtr t = parse_term();
        while (true) {
            if (c.accept("+")) t = add({t, parse_term()});
            else if (c.accept("-")) t = add({t, neg(parse_term())});
            else break;
        }
        return t;
    }
    TermPtr parse_term() {
        TermPtr t = parse_factor();
        while (c.accept("*")) t = mul({t, parse_factor()});
        return t;
    }
    TermPtr parse_factor() {
        if (c.accept("-")) return neg(parse_factor());
        if (c.accept("(")) {
            TermPtr t = parse_expr();
            c.expect(")");
            return t;
        }
        const Tok& tok = c.peek();
        if (tok.k == Tok::K::Number) {
            std::string txt = c.next().text;
            auto slash = txt.find('/');
            if (slash == std::string::npos) return lit(std::stoll(txt));
            return lit(Rat(std::stoll(txt.substr(0, slash)), std::stoll(txt.substr(slash + 1))));
        }
        if (tok.k != Tok::K::Ident) throw ParseError(c.line, tok.col, "expected a term");
        std::string id = c.next().text;
        if (id == "T") {
            c.expect("(");
            TermPtr t = parse_expr();
            c.expect(")");
            return tr(t);
        }
        if (id == "inv") {
            c.expect("(");
            TermPtr t = parse_expr();
            c.expect(")");
            return inv(t);
        }
        if (auto ck = const_of(id)) return cst(*ck, unknown_dim(), unknown_dim());
        if (!desc.find(id)) throw ParseError(c.line, tok.col, "unknown operand or token '" + id + "'");
        return opnd(id);
    }
};

// ---- constant dimension inference -----------------------------------------------

// Rebuild a term assigning dimensions to structural constants from their
// context; a few passes over each equation reach the fixed point.
struct DimInfer {
    const MethodDescription& desc;
    bool changed = false;

    Dims dims_or_unknown(const TermPtr& t) {
        switch (t->kind) {
            case Term::Kind::Operand: {
                const OperandDecl* o = desc.find(t->base);
                if (!o) return {unknown_dim(), unknown_dim()};
                Dims d = o->dims();
                if (t->transposed) std::swap(d.first, d.second);
                return d;
            }
            case Term::Kind::Scalar:
                return {SymDim(1), SymDim(1)};
            case Term::Kind::Const: {
                Dims d{t->crows, t->ccols};
                if (t->transposed) std::swap(d.first, d.second);
                return d;
            }
            case Term::Kind::Product: {
                Dims acc{unknown_dim(), unknown_dim()};
                bool first = true;
                for (auto& k : t->kids) {
                    Dims dk = dims_or_unknown(k);
                    if (dk.first.is_one() && dk.second.is_one() && k->kind != Term::Kind::Const) continue;
                    if (first) { acc = dk; first = false; }
                    else acc.second = dk.second;
                }
                return acc;
            }
            case Term::Kind::Sum: {
                for (auto& k : t->kids) {
                    Dims dk = dims_or_unknown(k);
                    if (!is_unknown(dk.first) && !is_unknown(dk.second)) return dk;
                }
                return {unknown_dim(), unknown_dim()};
            }
            case Term::Kind::Transpose: {
                Dims d = dims_or_unknown(t->kids[0]);
                std::swap(d.first, d.second);
                return d;
            }
            case Term::Kind::Inverse: {
                Dims d = dims_or_unknown(t->kids[0]);
                std::swap(d.first, d.second);
                return d;
            }
            default:
                return {unknown_dim(), unknown_dim()};
        }
    }

    // impose kind-specific relations: Iu/Ju have one more row than columns,
    // unit/ones vectors are columns
    static void settle_const(Term& t) {
        switch (t.ckind) {
            case ConstKind::Identity:
            case ConstKind::LowerShift:
                if (is_unknown(t.crows) && !is_unknown(t.ccols)) t.crows = t.ccols;
                if (is_unknown(t.ccols) && !is_unknown(t.crows)) t.ccols = t.crows;
                break;
            case ConstKind::IdentityDropLast:
            case ConstKind::LowerShiftDropLast:
                if (is_unknown(t.crows) && !is_unknown(t.ccols)) t.crows = t.ccols.plus(1);
                if (is_unknown(t.ccols) && !is_unknown(t.crows)) t.ccols = t.crows.plus(-1);
                break;
            case ConstKind::UnitFirst:
            case ConstKind::UnitLast:
            case ConstKind::Ones:
                t.ccols = SymDim(1);
                break;
            case ConstKind::Zero:
                break;
        }
    }

    TermPtr apply(const TermPtr& t, Dims want) {
        using K = Term::Kind;
        switch (t->kind) {
            case K::Const: {
                Term a = *t;
                Dims eff = want;
                if (a.transposed) std::swap(eff.first, eff.second);
                if (is_unknown(a.crows) && !is_unknown(eff.first)) { a.crows = eff.first; changed = true; }
                if (is_unknown(a.ccols) && !is_unknown(eff.second)) { a.ccols = eff.second; changed = true; }
                settle_const(a);
                return mk(std::move(a));
            }
            case K::Product: {
                Term a = *t;
                // chain neighbours; scalars are transparent
                std::vector<Dims> ds;
                for (auto& k : a.kids) ds.push_back(dims_or_unknown(k));
                auto transparent = [&](size_t i) {
                    return ds[i].first.is_one() && ds[i].second.is_one() &&
                           a.kids[i]->kind != Term::Kind::Const;
                };
                for (size_t i = 0; i < a.kids.size(); ++i) {
                    if (transparent(i)) {
                        a.kids[i] = apply(a.kids[i], {SymDim(1), SymDim(1)});
                        continue;
                    }
                    Dims w{unknown_dim(), unknown_dim()};
                    // nearest non-transparent neighbours
                    for (int j = int(i) - 1; j >= 0; --j)
                        if (!transparent(j)) { w.first = ds[j].second; break; }
                    for (size_t j = i + 1; j < a.kids.size(); ++j)
                        if (!transparent(j)) { w.second = ds[j].first; break; }
                    bool leftmost = true, rightmost = true;
                    for (size_t j = 0; j < i; ++j)
                        if (!transparent(j)) leftmost = false;
                    for (size_t j = i + 1; j < a.kids.size(); ++j)
                        if (!transparent(j)) rightmost = false;
                    if (leftmost && is_unknown(w.first)) w.first = want.first;
                    if (rightmost && is_unknown(w.second)) w.second = want.second;
                    a.kids[i] = apply(a.kids[i], w);
                }
                return mk(std::move(a));
            }
            case K::Sum: {
                Term a = *t;
                Dims local = want;
                for (auto& k : a.kids) {
                    Dims dk = dims_or_unknown(k);
                    if (!is_unknown(dk.first)) local.first = dk.first;
                    if (!is_unknown(dk.second)) local.second = dk.second;
                }
                for (auto& k : a.kids) k = apply(k, local);
                return mk(std::move(a));
            }
            case K::Transpose: {
                Term a = *t;
                a.kids[0] = apply(a.kids[0], {want.second, want.first});
                return mk(std::move(a));
            }
            case K::Inverse: {
                Term a = *t;
                a.kids[0] = apply(a.kids[0], {want.second, want.first});
                return mk(std::move(a));
            }
            default:
                return t;
        }
    }

    Equation infer(Equation e) {
        for (int pass = 0; pass < 6; ++pass) {
            changed = false;
            Dims dl = dims_or_unknown(e.lhs), dr = dims_or_unknown(e.rhs);
            Dims want{!is_unknown(dl.first) ? dl.first : dr.first,
                      !is_unknown(dl.second) ? dl.second : dr.second};
            e.lhs = apply(e.lhs, want);
            e.rhs = apply(e.rhs, want);
            if (!changed) break;
        }
        return e;
    }

    TermPtr infer_term(TermPtr t) {
        for (int pass = 0; pass < 6; ++pass) {
            changed = false;
            t = apply(t, {unknown_dim(), unknown_dim()});
            if (!changed) break;
        }
        return t;
    }
};

// ---- rule patterns ---------------------------------------------------------------

struct PatParser {
    Cursor& c;
    std::vector<std::string>* vars;

    int var_id(const std::string& name) {
        for (size_t i = 0; i < vars->size(); ++i)
            if ((*vars)[i] == name) return int(i);
        vars->push_back(name);
        return int(vars->size()) - 1;
    }

    TermPat parse_expr() {
        TermPat t = parse_term();
        while (true) {
            if (c.accept("+")) {
                TermPat s;
                s.k = TermPat::K::Sum;
                s.kids = {t, parse_term()};
                t = s;
            } else if (c.accept("-")) {
                TermPat s;
                s.k = TermPat::K::Sum;
                s.kids = {t, parse_term()};
                t = s;
            } else {
                break;
            }
        }
        return t;
    }
    TermPat parse_term() {
        TermPat t = parse_factor();
        while (c.accept("*")) {
            TermPat p;
            p.k = TermPat::K::Prod;
            if (t.k == TermPat::K::Prod) p.kids = t.kids;
            else p.kids = {t};
            p.kids.push_back(parse_factor());
            t = p;
        }
        return t;
    }
    TermPat parse_factor() {
        const Tok& tok = c.peek();
        if (tok.k != Tok::K::Ident) throw ParseError(c.line, tok.col, "expected a pattern");
        std::string id = c.next().text;
        if (id[0] == '?') {
            TermPat p;
            p.k = TermPat::K::Var;
            p.var = var_id(id);
            return p;
        }
        if (id == "T" || id == "inv") {
            c.expect("(");
            TermPat inner = parse_expr();
            c.expect(")");
            TermPat p;
            p.k = id == "T" ? TermPat::K::Transpose : TermPat::K::Inverse;
            p.kids = {inner};
            return p;
        }
        if (auto ck = const_of(id)) {
            TermPat p;
            p.k = TermPat::K::Const;
            p.ckind = *ck;
            return p;
        }
        throw ParseError(c.line, tok.col, "unknown pattern token '" + id + "'");
    }
};

} // namespace descparse

inline MethodDescription parse_description(const std::string& text) {
    MethodDescription desc;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    struct PendingProp { PropertyName name; std::vector<descparse::Tok> toks; int line; };
    struct PendingEq { std::vector<descparse::Tok> toks; int line; };
    std::vector<PendingProp> props;
    std::vector<PendingEq> eqs;

    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        if (blank) continue;

        auto toks = descparse::lex(line, lineno);
        descparse::Cursor c{&toks, 0, lineno};
        std::string head = c.next().text;

        if (head == "operation") {
            desc.operation = c.next().text;
        } else if (head == "operand") {
            OperandDecl o;
            o.name = c.next().text;
            c.expect(":");
            bool first = true;
            while (!c.at_end()) {
                if (!first) c.expect(",");
                first = false;
                std::string w = c.next().text;
                if (w == "Input") o.kind = OperandKind::Input;
                else if (w == "Output") o.kind = OperandKind::Output;
                else if (w == "FirstColumnInput") o.kind = OperandKind::FirstColumnInput;
                else if (w == "square") o.shape = ShapeRole::SquareFixed;
                else if (w == "tall") o.shape = ShapeRole::TallGrowing;
                else if (w == "tall1") o.shape = ShapeRole::TallGrowingFull;
                else if (w == "small") o.shape = ShapeRole::SmallSquareGrowing;
                else if (w == "hess") o.shape = ShapeRole::TrailingGrowing;
                else if (w == "vector") o.shape = ShapeRole::VectorFixed;
                else if (w == "scalar") o.shape = ShapeRole::ScalarFixed;
                else if (w == "underlined_of") o.underlined_of = c.next().text;
                else if (auto p = property_from_name(w)) o.props.push_back(*p);
                else throw ParseError(lineno, c.peek().col, "unknown operand attribute '" + w + "'");
            }
            desc.operands.push_back(o);
        } else if (head == "property") {
            std::string nm = c.next().text;
            auto p = property_from_name(nm);
            if (!p) throw ParseError(lineno, 10, "unknown property '" + nm + "'");
            c.expect(":");
            props.push_back({*p, std::vector<descparse::Tok>(toks.begin() + c.pos, toks.end()), lineno});
        } else if (head == "equation") {
            eqs.push_back({std::vector<descparse::Tok>(toks.begin() + 1, toks.end()), lineno});
        } else if (head == "guard") {
            GuardSpec g;
            std::string form = c.next().text;
            if (form == "norm_last_col") {
                g.form = GuardSpec::Form::NormLastCol;
                g.operand = c.next().text;
                c.expect("<");
                if (c.next().text != "eps") throw ParseError(lineno, 0, "expected eps");
            } else if (form == "size") {
                g.form = GuardSpec::Form::SizeBound;
                g.operand = c.next().text;
                c.expect("=");
                auto dimtok = [&]() -> SymDim {
                    auto t = c.next();
                    if (t.k == descparse::Tok::K::Number) return SymDim(std::stoi(t.text));
                    if (t.text == "n" || t.text == "m" || t.text == "k") return SymDim::sym(t.text[0]);
                    throw ParseError(lineno, t.col, "expected a size");
                };
                g.bound_rows = dimtok();
                c.expect("x");
                g.bound_cols = dimtok();
            } else if (form == "diff_last_cols") {
                g.form = GuardSpec::Form::DiffLastCols;
                g.operand = c.next().text;
                c.expect("<");
                if (c.next().text != "eps") throw ParseError(lineno, 0, "expected eps");
            } else {
                throw ParseError(lineno, 7, "unknown guard form '" + form + "'");
            }
            desc.guard = g;
        } else if (head == "rule") {
            // premise ; premise ; exists <pattern> => Name [ pattern ]
            InferenceRule r;
            r.kind = RuleKind::SubtermCompose;
            r.form = InferenceRule::Form::UserPattern;
            std::vector<std::string> vars;
            descparse::PatParser pp{c, &vars};
            bool done_premises = false;
            while (!done_premises) {
                std::string nm = c.next().text;
                if (nm == "exists") {
                    r.existence_pat = pp.parse_expr();
                    r.has_existence = true;
                    c.expect("=>");
                    done_premises = true;
                    break;
                }
                auto p = property_from_name(nm);
                if (!p) throw ParseError(lineno, c.peek().col, "unknown property '" + nm + "'");
                c.expect("[");
                r.premises.push_back(*p);
                r.premise_pats.push_back(pp.parse_expr());
                c.expect("]");
                if (c.accept(";")) continue;
                c.expect("=>");
                done_premises = true;
            }
            std::string cname = c.next().text;
            auto cp = property_from_name(cname);
            if (!cp) throw ParseError(lineno, c.peek().col, "unknown property '" + cname + "'");
            r.conclusion = *cp;
            c.expect("[");
            r.conclusion_pat = pp.parse_expr();
            c.expect("]");
            desc.extra_rules.push_back(r);
        } else {
            throw ParseError(lineno, 1, "unknown directive '" + head + "'");
        }
    }

    // twins inherit a one-column-narrower shape
    for (auto& o : desc.operands) {
        if (o.underlined_of.empty()) continue;
        OperandDecl* full = desc.find(o.underlined_of);
        if (!full) throw ParseError(0, 0, "underlined_of references unknown operand " + o.underlined_of);
        full->has_underlined_twin = true;
        o.shape = ShapeRole::TallGrowing;
    }

    // parse the delayed expressions now that all operands are known
    descparse::DimInfer di{desc};
    for (auto& pe : eqs) {
        descparse::Cursor c{&pe.toks, 0, pe.line};
        descparse::ExprParser ep{c, desc};
        TermPtr lhs = ep.parse_expr();
        c.expect("=");
        TermPtr rhs = ep.parse_expr();
        if (!c.at_end()) throw ParseError(pe.line, c.peek().col, "trailing tokens");
        desc.post.push_back(di.infer({lhs, rhs}));
    }
    // constants in property lines inherit the dimensions their kind acquired
    // in the equations (a bare `Ju` has no context of its own)
    std::map<int, Dims> const_defaults;
    {
        std::function<void(const TermPtr&)> collect = [&](const TermPtr& t) {
            if (t->kind == Term::Kind::Const && !descparse::is_unknown(t->crows) &&
                !descparse::is_unknown(t->ccols))
                const_defaults.emplace(int(t->ckind), Dims{t->crows, t->ccols});
            for (auto& k : t->kids) collect(k);
        };
        for (auto& e : desc.post) { collect(e.lhs); collect(e.rhs); }
    }
    std::function<TermPtr(const TermPtr&)> fill_defaults = [&](const TermPtr& t) -> TermPtr {
        Term a = *t;
        for (auto& k : a.kids) k = fill_defaults(k);
        if (a.kind == Term::Kind::Const && descparse::is_unknown(a.crows)) {
            auto it = const_defaults.find(int(a.ckind));
            if (it != const_defaults.end()) {
                a.crows = it->second.first;
                a.ccols = it->second.second;
                descparse::DimInfer::settle_const(a);
            }
        }
        return mk(std::move(a));
    };
    for (auto& pp : props) {
        descparse::Cursor c{&pp.toks, 0, pp.line};
        descparse::ExprParser ep{c, desc};
        TermPtr t = ep.parse_expr();
        if (!c.at_end()) throw ParseError(pp.line, c.peek().col, "trailing tokens");
        desc.term_properties.push_back({pp.name, fill_defaults(di.infer_term(t))});
    }
    if (desc.operation.empty()) throw ParseError(0, 0, "missing operation line");
    return desc;
}

} // namespace flame
