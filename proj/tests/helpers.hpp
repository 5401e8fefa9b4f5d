#pragma once

#include <map>
#include <string>

#include "flame/pipeline.hpp"

namespace th {

inline std::string desc_path(const std::string& name) {
    return std::string(FLAME_DESC_DIR) + "/" + name + ".desc";
}

inline flame::MethodDescription load(const std::string& name) {
    return flame::parse_description(flame::read_file(desc_path(name)));
}

// artifacts are expensive for the larger methods; cache per description
inline const flame::Artifacts& artifacts(const std::string& name) {
    static std::map<std::string, flame::Artifacts> cache;
    auto it = cache.find(name);
    if (it == cache.end()) it = cache.emplace(name, flame::build_artifacts(load(name))).first;
    return it->second;
}

inline bool has_property(const flame::PropertySet& ps, const std::string& printed) {
    for (auto& p : ps)
        if (p.str() == printed) return true;
    return false;
}

inline std::string bind_key(const flame::TermPtr& t) {
    if (!t->disp.empty()) return t->disp;
    return t->region.empty() ? t->base : t->base + "_" + t->region;
}

inline int pme_index_matching(const flame::Artifacts& art, const std::string& needle) {
    for (size_t i = 0; i < art.pmes.size(); ++i)
        for (auto& a : art.pmes[i].assignments)
            if (a.str().find(needle) != std::string::npos) return int(i);
    return -1;
}

// the PME using the P^T A P solve and the residual-orthogonality quotient
inline int textbook_pme_cg(const flame::Artifacts& art) {
    for (size_t i = 0; i < art.pmes.size(); ++i) {
        bool u = false, d = false;
        for (auto& a : art.pmes[i].assignments) {
            auto s = a.str();
            if (s == "u_TR := - inv(P_L^T A P_L) P_L^T A r_R") u = true;
            if (s == "delta_BR := r_R^T r_R / r_R^T A p_R") d = true;
        }
        if (u && d) return int(i);
    }
    return -1;
}

inline int textbook_pme_bicg(const flame::Artifacts& art) {
    for (size_t i = 0; i < art.pmes.size(); ++i) {
        bool u = false, d = false;
        for (auto& a : art.pmes[i].assignments) {
            auto s = a.str();
            if (s == "u_TR := - inv(Pt_L^T A P_L) Pt_L^T A r_R") u = true;
            if (s == "delta_BR := pt_R^T r_R / pt_R^T A p_R") d = true;
        }
        if (u && d) return int(i);
    }
    return -1;
}

} // namespace th
