// flamegen: derives loop-based algorithms for iterative methods from their
// matrix-form descriptions, and validates them numerically.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flame/pipeline.hpp"

using namespace flame;

namespace {

std::ofstream* open_out(const std::string& dir, const std::string& name, std::ofstream& f) {
    if (dir.empty()) return nullptr;
    std::filesystem::create_directories(dir);
    f.open(dir + "/" + name);
    return &f;
}

void write_or_print(const std::string& text, const std::string& dir, const std::string& name) {
    if (dir.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f;
    open_out(dir, name, f);
    f << text;
}

std::vector<int> parse_invariant_arg(const std::string& s) {
    std::vector<int> nodes;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) nodes.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) nodes.push_back(std::stoi(cur));
    return nodes;
}

Artifacts build_from_file(const std::string& path, int max_prop_len, long budget) {
    auto desc = parse_description(read_file(path));
    std::vector<InferenceRule> extra;
    if (const char* kbfile = std::getenv("FLAMEGEN_KB")) extra = load_kb_file(kbfile);
    return build_artifacts(std::move(desc), max_prop_len, budget, extra);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"systematic derivation of algorithms for iterative methods"};
    app.require_subcommand(1);

    std::string desc_path, emit = "worksheet", format = "text", invariant_arg = "all", out_dir;
    int pme_idx = 0, max_prop_len = 3, jobs = 1;
    long budget = 10000;
    bool cse = false, cse_all = false;

    auto* derive = app.add_subcommand("derive", "run the derivation pipeline");
    derive->add_option("description", desc_path, "method description file")->required();
    derive->add_option("--emit", emit, "properties|pme|invariants|worksheet");
    derive->add_option("--format", format, "text|json|latex");
    derive->add_option("--invariant", invariant_arg, "node set like 1,2,3 or 'all'");
    derive->add_option("--pme", pme_idx, "PME index (0-based)");
    derive->add_option("--max-property-length", max_prop_len, "property length bound");
    derive->add_option("--budget", budget, "rule firing budget");
    derive->add_option("--out", out_dir, "write outputs into a directory");
    derive->add_option("--jobs", jobs, "parallel worksheet generation");
    derive->add_flag("--cse", cse, "eliminate common subexpressions");
    derive->add_flag("--cse-all", cse_all, "emit every CSE variant (capped at 16)");

    std::string val_desc;
    int val_n = 50, val_maxiter = 200, val_m = 0;
    std::uint64_t val_seed = 1;
    double val_eps = 1e-8;
    bool val_shadow_random = false;
    auto* validate = app.add_subcommand("validate", "interpret a derived worksheet numerically");
    validate->add_option("description", val_desc)->required();
    validate->add_option("--n", val_n, "problem size");
    validate->add_option("--seed", val_seed, "random seed");
    validate->add_option("--eps", val_eps, "guard threshold");
    validate->add_option("--max-iter", val_maxiter);
    validate->add_option("--m", val_m, "column bound for size guards");
    validate->add_option("--invariant", invariant_arg, "node set like 1,2,3 or 'all'");
    validate->add_option("--pme", pme_idx, "PME index (0-based)");
    validate->add_flag("--shadow-random", val_shadow_random,
                       "start shadow residuals from a random vector instead of r0");

    std::string eq_desc, eq_a, eq_b;
    auto* check = app.add_subcommand("check-equiv", "decide loop-invariant equivalence");
    check->add_option("description", eq_desc)->required();
    check->add_option("--a", eq_a, "first invariant, e.g. 1")->required();
    check->add_option("--b", eq_b, "second invariant, e.g. 1,2,3")->required();
    check->add_option("--pme", pme_idx, "PME index (0-based)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (derive->parsed()) {
            Artifacts art = build_from_file(desc_path, max_prop_len, budget);
            if (emit == "properties") {
                write_or_print(emit_properties(art), out_dir, "properties.txt");
            } else if (emit == "pme") {
                write_or_print(emit_pmes(art), out_dir, "pme.txt");
            } else if (emit == "invariants") {
                write_or_print(emit_invariants(art, pme_idx), out_dir, "invariants.txt");
            } else if (emit == "worksheet") {
                auto invs = invariants_for(art, pme_idx);
                std::vector<LoopInvariant> selected;
                if (invariant_arg == "all") selected = invs;
                else {
                    auto want = parse_invariant_arg(invariant_arg);
                    for (auto& inv : invs)
                        if (inv.nodes == want) selected.push_back(inv);
                    if (selected.empty())
                        throw FlameError("BadArgument", "no feasible invariant " + invariant_arg);
                }
                auto render_one = [&](const LoopInvariant& inv) {
                    std::string text;
                    if (cse_all) {
                        Algebra alg = art.scheme.numeral_alg;
                        Worksheet base = worksheet_for(art, pme_idx, inv, false);
                        auto variants = eliminate_cse_all(alg, base.update);
                        text += "cse variants: " + std::to_string(variants.size()) +
                                " (cap 16; the bound is arbitrary)\n";
                        for (auto& v : variants) {
                            Worksheet w = base;
                            w.update = v;
                            text += render(w, format);
                            text += "\n";
                        }
                        return text;
                    }
                    return render(worksheet_for(art, pme_idx, inv, cse), format);
                };
                if (jobs > 1 && selected.size() > 1) {
                    std::vector<std::future<std::string>> futs;
                    for (auto& inv : selected)
                        futs.push_back(std::async(std::launch::async, render_one, inv));
                    for (size_t i = 0; i < selected.size(); ++i) {
                        std::string nm = "worksheet_" + selected[i].str() + "." + format;
                        write_or_print(futs[i].get() + "\n", out_dir, nm);
                    }
                } else {
                    for (auto& inv : selected) {
                        std::string nm = "worksheet_" + inv.str() + "." + format;
                        write_or_print(render_one(inv) + "\n", out_dir, nm);
                    }
                }
            } else {
                throw FlameError("BadArgument", "unknown --emit " + emit);
            }
        } else if (validate->parsed()) {
            Artifacts art = build_from_file(val_desc, max_prop_len, budget);
            ProblemClass cls = problem_class_for(art.desc);
            ConcreteProblem prob = instantiate(cls, val_n, val_seed);
            prob.random_shadow = val_shadow_random;
            auto invs = invariants_for(art, pme_idx);
            std::vector<LoopInvariant> selected;
            if (invariant_arg == "all") selected = invs;
            else {
                auto want = parse_invariant_arg(invariant_arg);
                for (auto& inv : invs)
                    if (inv.nodes == want) selected.push_back(inv);
            }
            json report = json::array();
            for (auto& inv : selected) {
                Worksheet ws = worksheet_for(art, pme_idx, inv, false);
                RunTrace tr = run_worksheet(art.desc, ws, prob, val_eps, val_maxiter, val_m);
                json jr{{"method", art.desc.operation},
                        {"invariant", inv.nodes},
                        {"converged", tr.converged},
                        {"iterations", tr.iterations},
                        {"finalResidual", tr.final_residual}};
                // structural validation of the derived properties on this trace
                int n = prob.A.rows, m = tr.iterations;
                std::map<std::string, Mat> bind;
                bind["A"] = prob.A;
                for (auto& o : art.desc.operands) {
                    if (!o.underlined_of.empty() || o.kind == OperandKind::Input) continue;
                    auto it = tr.storage.find(o.name);
                    if (it == tr.storage.end()) continue;
                    auto d = o.dims();
                    if (o.shape == ShapeRole::SmallSquareGrowing)
                        bind[o.name] = it->second.slice(0, m, 0, m);
                    else if (d.second.var && d.second.constant == 1)
                        bind[o.name] = it->second.slice(0, n, 0, m + 1);
                    else
                        bind[o.name] = it->second.slice(0, n, 0, m);
                }
                json checks = json::array();
                for (auto& c : validate_properties(art.op_props, bind, n, m, 1e-8)) {
                    if (!c.applicable) continue;
                    checks.push_back(json{{"property", c.property}, {"pass", c.pass}, {"violation", c.violation}});
                }
                jr["propertyReport"] = checks;
                report.push_back(jr);
            }
            std::cout << report.dump(2) << "\n";
        } else if (check->parsed()) {
            Artifacts art = build_from_file(eq_desc, max_prop_len, budget);
            auto invs = invariants_for(art, pme_idx);
            auto find = [&](const std::string& arg) -> LoopInvariant {
                auto want = parse_invariant_arg(arg);
                for (auto& inv : invs)
                    if (inv.nodes == want) return inv;
                throw FlameError("BadArgument", "no feasible invariant " + arg);
            };
            LoopInvariant a = find(eq_a), b = find(eq_b);
            auto m = are_equivalent(art.desc, art.scheme, art.maps, a, b);
            if (m) {
                std::cout << "equivalent\n" << m->str();
            } else {
                std::cout << "not equivalent\n";
            }
        }
    } catch (const FlameError& e) {
        std::cerr << "error" << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
