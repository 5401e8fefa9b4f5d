#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flame/descfile.hpp"
#include "flame/invariants.hpp"
#include "flame/numeric.hpp"
#include "flame/render.hpp"
#include "flame/worksheet.hpp"

namespace flame {

inline void install_zero_oracle(Algebra& alg, const PropertySet& props) {
    for (auto& p : props)
        if (p.name == PropertyName::Zero) alg.zero_keys.insert(key_of(p.subject));
}

struct Artifacts {
    MethodDescription desc;
    Knowledgebase kb;
    Algebra op_alg;
    PropertySet op_props;
    PartitionScheme scheme;
    RegionMaps maps;
    PropertySet region_props, numeral_props;
    Algebra solve_alg;  // region algebra with the zero oracle installed
    std::vector<PME> pmes;
    std::optional<LoopGuard> guard;
};

inline Artifacts build_artifacts(MethodDescription desc, int max_prop_len = 3, long budget = 10000,
                                 const std::vector<InferenceRule>& extra_rules = {}) {
    Artifacts art;
    art.desc = std::move(desc);
    art.kb = default_kb();
    for (auto& r : art.desc.extra_rules) art.kb.rules.push_back(r);
    for (auto& r : extra_rules) art.kb.rules.push_back(r);

    art.op_alg = art.desc.algebra();
    art.op_props = derive_all(art.desc, art.kb, art.op_alg, max_prop_len, budget);

    art.scheme = initial_partition(art.desc);
    art.maps = build_region_maps(art.desc, art.scheme);
    {
        // every operand's block dims, independent of which properties mention it
        LevelSpec rspec{SplitLevel::Region, &art.scheme};
        LevelSpec nspec{SplitLevel::Numeral, &art.scheme};
        for (auto& o : art.desc.operands) {
            rspec.operand_val(o, art.scheme.region_alg);
            nspec.operand_val(o, art.scheme.numeral_alg);
        }
    }

    art.region_props = partition_properties(art.desc, art.scheme, art.op_props, SplitLevel::Region,
                                            art.scheme.region_alg);
    art.numeral_props = partition_properties(art.desc, art.scheme, art.op_props, SplitLevel::Numeral,
                                             art.scheme.numeral_alg);
    install_zero_oracle(art.scheme.region_alg, art.region_props);
    install_zero_oracle(art.scheme.numeral_alg, art.numeral_props);

    art.solve_alg = art.scheme.region_alg;
    art.pmes = generate_pmes(art.desc, art.scheme, art.region_props, art.solve_alg);

    if (art.desc.guard) art.guard = select_guard(*art.desc.guard, art.desc);
    return art;
}

inline DependencyGraph graph_for(const Artifacts& art, int pme_idx) {
    return build_graph(art.pmes.at(pme_idx));
}

inline std::vector<LoopInvariant> invariants_for(const Artifacts& art, int pme_idx) {
    DependencyGraph g = build_graph(art.pmes.at(pme_idx));
    return enumerate_invariants(g, art.pmes.at(pme_idx), art.desc, art.scheme, art.desc.guard);
}

inline Worksheet worksheet_for(const Artifacts& art, int pme_idx, const LoopInvariant& inv, bool cse) {
    if (!art.guard) throw UnknownPredicateForm("description carries no guard predicate");
    Algebra alg = art.scheme.numeral_alg;
    return make_worksheet(art.desc, art.scheme, art.maps, art.numeral_props, art.pmes.at(pme_idx), inv,
                          *art.guard, cse, alg);
}

// ---- file/system helpers -----------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FlameError("IO", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<InferenceRule> load_kb_file(const std::string& path) {
    // one rule line per row, same syntax as description-file `rule` lines
    std::string text = read_file(path);
    std::string wrapped = "operation kbext\n";
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        wrapped += "rule " + line + "\n";
    }
    return parse_description(wrapped).extra_rules;
}

// ---- emissions ------------------------------------------------------------------

inline std::string emit_properties(const Artifacts& art) {
    std::string out;
    for (auto& p : art.op_props) out += p.str() + "\n";
    return out;
}

inline std::string emit_pmes(const Artifacts& art) {
    std::string out;
    out += "PMEs: " + std::to_string(art.pmes.size()) + "\n";
    for (size_t i = 0; i < art.pmes.size(); ++i) {
        out += "PME " + std::to_string(i + 1) + ":\n";
        int n = 1;
        for (auto& a : art.pmes[i].assignments)
            out += "  " + std::to_string(n++) + ". " + a.str() + "\n";
    }
    return out;
}

inline std::string emit_invariants(const Artifacts& art, int pme_idx) {
    std::string out;
    auto invs = invariants_for(art, pme_idx);
    out += "feasible invariants: " + std::to_string(invs.size()) + "\n";
    for (auto& inv : invs) {
        out += "  " + inv.str() + "  feasible";
        if (art.guard) out += "  guard: " + art.guard->str();
        out += "\n";
    }
    return out;
}

} // namespace flame
