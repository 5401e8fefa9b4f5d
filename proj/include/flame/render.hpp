#pragma once

#include <string>

#include <json.hpp>

#include "flame/worksheet.hpp"

namespace flame {

using nlohmann::json;

// ---- term <-> json ------------------------------------------------------------

inline json dim_json(const SymDim& d) {
    return json{{"var", d.var ? std::string(1, d.var) : std::string()}, {"coeff", d.coeff}, {"const", d.constant}};
}

inline SymDim dim_from_json(const json& j) {
    std::string v = j.at("var").get<std::string>();
    return SymDim(v.empty() ? 0 : v[0], j.at("coeff").get<int>(), j.at("const").get<int>());
}

inline json term_to_json(const TermPtr& t) {
    using K = Term::Kind;
    switch (t->kind) {
        case K::Operand: {
            json j{{"op", "ref"}, {"name", t->base}};
            if (!t->region.empty()) j["region"] = t->region;
            if (!t->disp.empty() && t->disp != t->base) j["disp"] = t->disp;
            if (t->transposed) j["t"] = true;
            if (t->inverted) j["inv"] = true;
            return j;
        }
        case K::Scalar:
            return json{{"op", "lit"}, {"num", t->coeff.num}, {"den", t->coeff.den}};
        case K::Product: {
            json args = json::array();
            for (auto& k : t->kids) args.push_back(term_to_json(k));
            json j{{"op", "mul"}, {"args", args}};
            if (!t->coeff.is_one()) { j["num"] = t->coeff.num; j["den"] = t->coeff.den; }
            return j;
        }
        case K::Sum: {
            json args = json::array();
            for (auto& k : t->kids) args.push_back(term_to_json(k));
            return json{{"op", "add"}, {"args", args}};
        }
        case K::Grid: {
            json blocks = json::array();
            for (auto& k : t->kids) blocks.push_back(term_to_json(k));
            return json{{"op", "grid"}, {"rows", t->grows}, {"cols", t->gcols}, {"blocks", blocks}};
        }
        case K::Const: {
            json j{{"op", "const"}, {"kind", detail::const_token(t->ckind)},
                   {"rows", dim_json(t->crows)}, {"cols", dim_json(t->ccols)}};
            if (t->transposed) j["t"] = true;
            if (t->inverted) j["inv"] = true;
            return j;
        }
        case K::Norm:
            return json{{"op", "norm"}, {"arg", term_to_json(t->kids[0])}};
        case K::Quotient:
            return json{{"op", "div"}, {"num", term_to_json(t->kids[0])}, {"den", term_to_json(t->kids[1])}};
        case K::Inverse:
            return json{{"op", "invnode"}, {"arg", term_to_json(t->kids[0])}};
        case K::Transpose:
            return json{{"op", "transpose"}, {"arg", term_to_json(t->kids[0])}};
        case K::Call: {
            json args = json::array(), outs = json::array();
            for (auto& k : t->kids) args.push_back(term_to_json(k));
            for (auto& o : t->outs) outs.push_back(term_to_json(o));
            return json{{"op", "call"}, {"name", t->opname}, {"args", args}, {"outs", outs}};
        }
    }
    return {};
}

inline TermPtr term_from_json(const json& j) {
    std::string op = j.at("op").get<std::string>();
    if (op == "ref") {
        Term t(Term::Kind::Operand);
        t.base = j.at("name").get<std::string>();
        if (j.contains("region")) t.region = j["region"].get<std::string>();
        t.disp = j.contains("disp") ? j["disp"].get<std::string>()
                                    : (t.region.empty() ? t.base : t.base + "_" + t.region);
        t.transposed = j.value("t", false);
        t.inverted = j.value("inv", false);
        return mk(std::move(t));
    }
    if (op == "lit") return lit(Rat(j.at("num").get<std::int64_t>(), j.at("den").get<std::int64_t>()));
    if (op == "mul") {
        std::vector<TermPtr> fs;
        for (auto& a : j.at("args")) fs.push_back(term_from_json(a));
        Rat c(1);
        if (j.contains("num")) c = Rat(j["num"].get<std::int64_t>(), j["den"].get<std::int64_t>());
        return mul(std::move(fs), c);
    }
    if (op == "add") {
        std::vector<TermPtr> fs;
        for (auto& a : j.at("args")) fs.push_back(term_from_json(a));
        return add(std::move(fs));
    }
    if (op == "grid") {
        std::vector<TermPtr> bs;
        for (auto& a : j.at("blocks")) bs.push_back(term_from_json(a));
        return grid(j.at("rows").get<int>(), j.at("cols").get<int>(), std::move(bs));
    }
    if (op == "const") {
        std::string k = j.at("kind").get<std::string>();
        ConstKind ck = ConstKind::Zero;
        if (k == "I") ck = ConstKind::Identity;
        else if (k == "J") ck = ConstKind::LowerShift;
        else if (k == "Iu") ck = ConstKind::IdentityDropLast;
        else if (k == "Ju") ck = ConstKind::LowerShiftDropLast;
        else if (k == "e0") ck = ConstKind::UnitFirst;
        else if (k == "er") ck = ConstKind::UnitLast;
        else if (k == "e") ck = ConstKind::Ones;
        TermPtr c = cst(ck, dim_from_json(j.at("rows")), dim_from_json(j.at("cols")), j.value("t", false));
        if (j.value("inv", false)) return inv(c);
        return c;
    }
    if (op == "norm") return norm(term_from_json(j.at("arg")));
    if (op == "div") return quo(term_from_json(j.at("num")), term_from_json(j.at("den")));
    if (op == "invnode") return inv(term_from_json(j.at("arg")));
    if (op == "transpose") return tr(term_from_json(j.at("arg")));
    if (op == "call") {
        std::vector<TermPtr> args, outs;
        for (auto& a : j.at("args")) args.push_back(term_from_json(a));
        for (auto& a : j.at("outs")) outs.push_back(term_from_json(a));
        return call(j.at("name").get<std::string>(), std::move(args), std::move(outs));
    }
    throw FlameError("ParseError", "unknown term op " + op);
}

inline json assignment_to_json(const Assignment& a) {
    json targets = json::array();
    for (auto& t : a.targets) targets.push_back(term_to_json(t));
    return json{{"targets", targets}, {"rhs", term_to_json(a.rhs)}};
}

inline Assignment assignment_from_json(const json& j) {
    Assignment a;
    for (auto& t : j.at("targets")) a.targets.push_back(term_from_json(t));
    a.rhs = term_from_json(j.at("rhs"));
    return a;
}

// ---- worksheet rendering --------------------------------------------------------

inline const char* guard_form_name(LoopGuard::Form f) {
    switch (f) {
        case LoopGuard::Form::NormLastKnownCol: return "norm_last_known_col";
        case LoopGuard::Form::SizeBound: return "size_bound";
        case LoopGuard::Form::SuccessiveDiff: return "successive_diff";
    }
    return "?";
}

inline json worksheet_to_json(const Worksheet& ws) {
    json j;
    j["operation"] = ws.operation;
    j["invariant"] = ws.invariant;
    j["guard"] = json{{"form", guard_form_name(ws.guard.form)},
                      {"operand", ws.guard.operand},
                      {"epsilonSymbol", "eps"},
                      {"outputFlavour", ws.guard_output_flavour}};
    if (ws.guard.form == LoopGuard::Form::SizeBound) {
        j["guard"]["rows"] = dim_json(ws.guard.bound_rows);
        j["guard"]["cols"] = dim_json(ws.guard.bound_cols);
    }
    j["preprocessing"] = json::array();
    for (auto& a : ws.preprocessing) j["preprocessing"].push_back(assignment_to_json(a));
    j["update"] = json::array();
    for (auto& a : ws.update) j["update"].push_back(assignment_to_json(a));
    json rep = json::object(), cont = json::object();
    for (auto& p : ws.parts) {
        rep[p.name] = json{{"pattern", p.pattern}, {"regions", p.regions},
                           {"numerals", p.numerals}, {"initial", p.initial_size},
                           {"regionDisp", p.region_disp}, {"numeralDisp", p.numeral_disp}};
        cont[p.name] = json{{"labels", p.continued}, {"labelsDisp", p.continued_disp}};
    }
    j["repartition"] = rep;
    j["continue_with"] = cont;
    j["discarded"] = ws.discarded;
    json hints = json::object();
    for (auto& [k, v] : ws.solve_hints) hints[k] = v;
    j["solve_hints"] = hints;
    return j;
}

inline Worksheet worksheet_from_json(const json& j) {
    Worksheet ws;
    ws.operation = j.at("operation").get<std::string>();
    ws.invariant = j.at("invariant").get<std::vector<int>>();
    std::string gf = j.at("guard").at("form").get<std::string>();
    ws.guard.form = gf == "size_bound" ? LoopGuard::Form::SizeBound
                    : gf == "successive_diff" ? LoopGuard::Form::SuccessiveDiff
                                              : LoopGuard::Form::NormLastKnownCol;
    ws.guard.operand = j.at("guard").at("operand").get<std::string>();
    ws.guard_output_flavour = j.at("guard").value("outputFlavour", false);
    if (ws.guard.form == LoopGuard::Form::SizeBound) {
        ws.guard.bound_rows = dim_from_json(j.at("guard").at("rows"));
        ws.guard.bound_cols = dim_from_json(j.at("guard").at("cols"));
    }
    for (auto& a : j.at("preprocessing")) ws.preprocessing.push_back(assignment_from_json(a));
    for (auto& a : j.at("update")) ws.update.push_back(assignment_from_json(a));
    for (auto& [name, pj] : j.at("repartition").items()) {
        Worksheet::OperandPart p;
        p.name = name;
        p.pattern = pj.at("pattern").get<std::string>();
        p.regions = pj.at("regions").get<std::vector<std::string>>();
        p.numerals = pj.at("numerals").get<std::vector<std::string>>();
        p.initial_size = pj.at("initial").get<std::string>();
        p.region_disp = pj.value("regionDisp", std::vector<std::string>{});
        p.numeral_disp = pj.value("numeralDisp", std::vector<std::string>{});
        if (j.at("continue_with").contains(name)) {
            p.continued = j.at("continue_with").at(name).at("labels").get<std::vector<std::string>>();
            p.continued_disp = j.at("continue_with").at(name).value("labelsDisp", std::vector<std::string>{});
        }
        ws.parts.push_back(p);
    }
    ws.discarded = j.at("discarded").get<std::vector<std::string>>();
    for (auto& [k, v] : j.at("solve_hints").items()) ws.solve_hints[k] = v.get<std::string>();
    return ws;
}

inline std::string guard_line(const Worksheet& ws) {
    const LoopGuard& g = ws.guard;
    std::string op = g.operand;
    switch (g.form) {
        case LoopGuard::Form::NormLastKnownCol:
            if (ws.guard_output_flavour) return "while || " + op + "_L er^T || >= eps";
            return "while || " + lower_stem(op) + "_R || >= eps";
        case LoopGuard::Form::SizeBound:
            return "while size([" + op + "_L | " + lower_stem(op) + "_R]) < " + g.bound_rows.str() +
                   " x " + g.bound_cols.str();
        case LoopGuard::Form::SuccessiveDiff:
            if (ws.guard_output_flavour)
                return "while || " + op + "_L er^T - " + op + "_L er-1^T || >= eps";
            return "while || " + lower_stem(op) + "_R - " + op + "_L er^T || >= eps";
    }
    return "while ?";
}

inline std::string render_text(const Worksheet& ws) {
    std::string s;
    s += "Operation: " + ws.operation + "\n";
    s += "Invariant: {";
    for (size_t i = 0; i < ws.invariant.size(); ++i) s += (i ? "," : "") + std::to_string(ws.invariant[i]);
    s += "}\n";
    s += "Partition:\n";
    for (auto& p : ws.parts) {
        s += "  " + p.name + " -> [";
        for (size_t i = 0; i < p.regions.size(); ++i) {
            if (i) s += " | ";
            s += i < p.region_disp.size() ? p.region_disp[i] : p.name + "_" + p.regions[i];
        }
        s += "]   (" + p.initial_size + ")\n";
    }
    s += "Preprocessing:\n";
    if (ws.preprocessing.empty()) s += "  (none)\n";
    for (auto& a : ws.preprocessing) s += "  " + a.str() + "\n";
    s += guard_line(ws) + ":\n";
    s += "  Repartition:\n";
    for (auto& p : ws.parts) {
        if (p.numerals.empty()) continue;
        s += "    [";
        for (size_t i = 0; i < p.regions.size(); ++i)
            s += (i ? " | " : "") + (i < p.region_disp.size() ? p.region_disp[i] : p.name + "_" + p.regions[i]);
        s += "] -> [";
        for (size_t i = 0; i < p.numerals.size(); ++i)
            s += (i ? " | " : "") + (i < p.numeral_disp.size() ? p.numeral_disp[i] : p.name + "_" + p.numerals[i]);
        s += "]\n";
    }
    s += "  Update:\n";
    for (auto& a : ws.update) s += "    " + a.str() + "\n";
    s += "  Continue with:\n";
    for (auto& p : ws.parts) {
        if (p.continued.empty()) continue;
        s += "    [";
        for (size_t i = 0; i < p.regions.size(); ++i)
            s += (i ? " | " : "") + (i < p.region_disp.size() ? p.region_disp[i] : p.name + "_" + p.regions[i]);
        s += "] <- [";
        for (size_t i = 0; i < p.continued.size(); ++i)
            s += (i ? " | " : "") + (i < p.continued_disp.size() ? p.continued_disp[i] : p.name + "_" + p.continued[i]);
        s += "]\n";
    }
    if (!ws.discarded.empty()) {
        s += "Discarded outputs:";
        for (auto& d : ws.discarded) s += " " + d;
        s += "\n";
    }
    return s;
}

inline std::string latex_escape(const std::string& in) {
    std::string s;
    for (char c : in) {
        if (c == '_' || c == '+') s += std::string("\\") + c;
        else s += c;
    }
    return s;
}

inline std::string render_latex(const Worksheet& ws) {
    std::string s;
    s += "\\begin{tabular}{l}\n";
    s += "\\textbf{" + latex_escape(ws.operation) + "} \\\\\n";
    s += "Preprocessing: \\\\\n";
    for (auto& a : ws.preprocessing) s += "$" + latex_escape(a.str()) + "$ \\\\\n";
    s += "While $" + latex_escape(guard_line(ws).substr(6)) + "$: \\\\\n";
    for (auto& a : ws.update) s += "\\quad $" + latex_escape(a.str()) + "$ \\\\\n";
    s += "\\end{tabular}\n";
    return s;
}

inline std::string render(const Worksheet& ws, const std::string& fmt) {
    if (fmt == "json") return worksheet_to_json(ws).dump(2) + "\n";
    if (fmt == "latex") return render_latex(ws);
    return render_text(ws);
}

} // namespace flame
