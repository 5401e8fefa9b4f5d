#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flame/numeric.hpp"
#include "flame/render.hpp"
#include "helpers.hpp"

using namespace flame;

namespace {

const LoopInvariant& find_inv(const std::vector<LoopInvariant>& invs, std::vector<int> nodes) {
    for (auto& v : invs)
        if (v.nodes == nodes) return v;
    throw std::runtime_error("no such invariant");
}

std::vector<std::string> strs(const std::vector<Assignment>& as) {
    std::vector<std::string> out;
    for (auto& a : as) out.push_back(a.str());
    return out;
}

} // namespace

TEST_CASE("preprocessing under the initial sizes") {
    SUBCASE("CG {1,2,3}: only p_R := r_R survives") {
        const auto& art = th::artifacts("cg_nonsym");
        int idx = th::textbook_pme_cg(art);
        auto pre = derive_preprocessing(art.desc, art.scheme, art.pmes[idx], {1, 2, 3});
        REQUIRE(pre.size() == 1);
        CHECK(pre[0].str() == "p_R := r_R");
    }
    SUBCASE("BiCG full set: six preprocessing assignments") {
        const auto& art = th::artifacts("bicg");
        int idx = th::textbook_pme_bicg(art);
        auto pre = derive_preprocessing(art.desc, art.scheme, art.pmes[idx],
                                        {1, 2, 3, 4, 5, 6, 7, 8});
        auto got = strs(pre);
        std::vector<std::string> want = {
            "p_R := r_R",
            "pt_R := rt_R",
            "delta_BR := pt_R^T r_R / pt_R^T A p_R",
            "r_+ := r_R - A p_R delta_BR",
            "rt_+ := rt_R - A^T pt_R delta_BR",
            "x_+ := x_R - p_R delta_BR"};
        CHECK(got == want);
    }
    SUBCASE("the single-node invariant needs no preprocessing") {
        const auto& art = th::artifacts("bicg");
        auto pre = derive_preprocessing(art.desc, art.scheme, art.pmes[0], {1});
        CHECK(pre.empty());
    }
}

TEST_CASE("before and after predicates, and their difference") {
    SUBCASE("Krylov") {
        const auto& art = th::artifacts("krylov");
        Algebra alg = art.scheme.numeral_alg;
        auto [before, after] = build_before_after(art.desc, art.scheme, art.maps, art.pmes[0], {1}, alg);
        REQUIRE(before.size() == 1);
        CHECK(before[0].str() == "{[K_0, k_1]} := KS(A, K_0 e0)");
        REQUIRE(after.size() == 2);
        CHECK(after[1].str() == "k_2 := A k_1");
        auto upd = extract_update(before, after);
        REQUIRE(upd.size() == 1);
        CHECK(upd[0].str() == "k_2 := A k_1");
    }
    SUBCASE("CG {1,2,3}: the six-assignment update, in after-order") {
        const auto& art = th::artifacts("cg_nonsym");
        int idx = th::textbook_pme_cg(art);
        Algebra alg = art.scheme.numeral_alg;
        auto [before, after] =
            build_before_after(art.desc, art.scheme, art.maps, art.pmes[idx], {1, 2, 3}, alg);
        auto upd = strs(extract_update(before, after));
        std::vector<std::string> want = {
            "delta_11 := r_1^T r_1 / r_1^T A p_1",
            "r_2 := r_1 - A p_1 delta_11",
            "x_2 := x_1 - p_1 delta_11",
            "u_02 := - inv(P_0^T A P_0) P_0^T A r_2",
            "nu_12 := (- p_1^T A r_2 - p_1^T A P_0 u_02) / p_1^T A p_1",
            "p_2 := r_2 + P_0 u_02 + p_1 nu_12"};
        CHECK(upd == want);
    }
    SUBCASE("P_before is always contained in P_after") {
        for (const char* nm : {"cg_nonsym", "bicg", "jacobi", "steepest_descent"}) {
            const auto& art = th::artifacts(nm);
            for (auto& inv : invariants_for(art, 0)) {
                Algebra alg = art.scheme.numeral_alg;
                auto [before, after] =
                    build_before_after(art.desc, art.scheme, art.maps, art.pmes[0], inv.nodes, alg);
                std::set<std::string> ak;
                for (auto& a : after) ak.insert(a.key());
                for (auto& b : before) CHECK(ak.count(b.key()));
            }
        }
    }
    SUBCASE("identical before and after reject the invariant") {
        std::vector<Assignment> same{{{opnd("x")}, opnd("y")}};
        CHECK_THROWS_AS((void)extract_update(same, same), EmptyUpdate);
    }
}

TEST_CASE("common subexpression elimination") {
    SUBCASE("CG {1,2,3} reproduces the worksheet's nine assignments") {
        const auto& art = th::artifacts("cg_nonsym");
        int idx = th::textbook_pme_cg(art);
        auto invs = invariants_for(art, idx);
        auto ws = worksheet_for(art, idx, find_inv(invs, {1, 2, 3}), true);
        auto got = strs(ws.update);
        std::vector<std::string> want = {
            "t_1 := A p_1",
            "delta_11 := r_1^T r_1 / r_1^T t_1",
            "r_2 := r_1 - t_1 delta_11",
            "x_2 := x_1 - p_1 delta_11",
            "t_2 := A r_2",
            "u_02 := - inv(P_0^T A P_0) P_0^T t_2",
            "t_3 := P_0 u_02",
            "nu_12 := (- p_1^T t_2 - p_1^T A t_3) / p_1^T t_1",
            "p_2 := r_2 + t_3 + p_1 nu_12"};
        CHECK(got == want);
    }
    SUBCASE("an update without repeated chunks is unchanged") {
        Algebra alg;
        SymDim n = SymDim::sym('n'), one(1);
        alg.declare("A", "", n, n);
        alg.declare("x", "", n, one);
        alg.declare("y", "", n, one);
        std::vector<Assignment> upd{{{opnd("y")}, alg.normalize(mul({opnd("A"), opnd("x")}))}};
        auto out = eliminate_cse(alg, upd);
        REQUIRE(out.size() == 1);
        CHECK(out[0].str() == upd[0].str());
    }
    SUBCASE("overlapping chunks: the matrix-vector split point wins the tie") {
        Algebra alg;
        SymDim n = SymDim::sym('n'), k = SymDim::sym('k'), one(1);
        alg.declare("A", "", n, n);
        alg.declare("P", "0", n, k);
        alg.declare("p", "1", n, one);
        alg.declare("r", "2", n, one);
        alg.declare("w", "1", k, k);
        alg.declare("w", "2", one, one);
        alg.declare("w", "3", one, k);
        TermPtr P0 = opnd("P", "0"), p1 = opnd("p", "1"), r2 = opnd("r", "2"), A = opnd("A");
        std::vector<Assignment> upd{
            {{opnd("w", "1")}, alg.normalize(mul({tr(P0), A, P0}))},
            {{opnd("w", "2")}, alg.normalize(mul({tr(p1), A, r2}))},
            {{opnd("w", "3")}, alg.normalize(mul({tr(p1), A, P0}))}};
        auto out = eliminate_cse(alg, upd);
        REQUIRE(out.size() == 4);  // exactly one auxiliary introduced
        CHECK(out[0].str() == "w_1 := P_0^T A P_0");
        CHECK(out[1].str() == "t_1 := p_1^T A");
        CHECK(out[2].str() == "w_2 := t_1 r_2");
        CHECK(out[3].str() == "w_3 := t_1 P_0");
    }
    SUBCASE("semantics preserved on randomized interpretations") {
        const auto& art = th::artifacts("cg_nonsym");
        int idx = th::textbook_pme_cg(art);
        auto invs = invariants_for(art, idx);
        Algebra alg = art.scheme.numeral_alg;
        auto [before, after] =
            build_before_after(art.desc, art.scheme, art.maps, art.pmes[idx], {1, 2, 3}, alg);
        auto upd = extract_update(before, after);
        auto reduced = eliminate_cse(alg, upd);

        Rng rng(77);
        int n = 6, k = 2;
        for (int trial = 0; trial < 100; ++trial) {
            std::map<std::string, Mat> base;
            base["A"] = rng.matrix(n, n);
            base["P_0"] = rng.matrix(n, k);
            base["p_1"] = rng.matrix(n, 1);
            base["r_1"] = rng.matrix(n, 1);
            base["x_1"] = rng.matrix(n, 1);
            auto run = [&](const std::vector<Assignment>& as) {
                std::map<std::string, Mat> env = base;
                for (auto& a : as) {
                    auto v = eval_concrete(env, n, k, a.rhs, k);
                    REQUIRE(v);
                    env[th::bind_key(a.targets[0])] = *v;
                }
                return env;
            };
            auto e1 = run(upd), e2 = run(reduced);
            for (auto key : {"r_2", "x_2", "p_2", "delta_11", "nu_12"}) {
                double scale = std::max(1.0, e1.at(key).max_abs());
                CHECK((e1.at(key) - e2.at(key)).max_abs() / scale < 1e-12);
            }
        }
    }
    SUBCASE("exhaustive mode emits at most the cap") {
        const auto& art = th::artifacts("cg_nonsym");
        int idx = th::textbook_pme_cg(art);
        auto invs = invariants_for(art, idx);
        Algebra alg = art.scheme.numeral_alg;
        auto base = worksheet_for(art, idx, find_inv(invs, {1, 2, 3}), false);
        auto variants = eliminate_cse_all(alg, base.update, 16);
        CHECK(variants.size() >= 1);
        CHECK(variants.size() <= 16);
    }
}

TEST_CASE("worksheet rendering") {
    const auto& art = th::artifacts("cg_nonsym");
    int idx = th::textbook_pme_cg(art);
    auto invs = invariants_for(art, idx);
    auto ws = worksheet_for(art, idx, find_inv(invs, {1, 2, 3}), true);

    SUBCASE("the text render carries the guard line") {
        std::string text = render_text(ws);
        CHECK(text.find("while || r_R || >= eps") != std::string::npos);
        CHECK(text.find("p_R := r_R") != std::string::npos);
    }
    SUBCASE("JSON round-trips") {
        json j = worksheet_to_json(ws);
        Worksheet back = worksheet_from_json(j);
        CHECK(worksheet_to_json(back).dump() == j.dump());
        CHECK(render_text(back) == render_text(ws));
    }
    SUBCASE("empty preprocessing renders as such") {
        const auto& bart = th::artifacts("bicg");
        int bidx = th::textbook_pme_bicg(bart);
        auto binvs = invariants_for(bart, bidx);
        auto bws = worksheet_for(bart, bidx, find_inv(binvs, {1}), false);
        std::string text = render_text(bws);
        CHECK(text.find("Preprocessing:\n  (none)") != std::string::npos);
    }
    SUBCASE("latex render exists and mentions the operation") {
        std::string tex = render_latex(ws);
        CHECK(tex.find("CG") != std::string::npos);
    }
}

TEST_CASE("BiCG worksheet pair from the figure") {
    const auto& art = th::artifacts("bicg");
    int idx = th::textbook_pme_bicg(art);
    auto invs = invariants_for(art, idx);

    auto full = worksheet_for(art, idx, find_inv(invs, {1, 2, 3, 4, 5, 6, 7, 8}), false);
    auto got = strs(full.update);
    std::vector<std::string> want = {
        "nu_12 := - pt_1^T A r_2 / pt_1^T A p_1",
        "p_2 := r_2 + p_1 nu_12",
        "pt_2 := rt_2 + pt_1 nu_12",
        "delta_22 := pt_2^T r_2 / pt_2^T A p_2",
        "r_3 := r_2 - A p_2 delta_22",
        "rt_3 := rt_2 - A^T pt_2 delta_22",
        "x_3 := x_2 - p_2 delta_22"};
    CHECK(got == want);

    auto single = worksheet_for(art, idx, find_inv(invs, {1}), false);
    auto got1 = strs(single.update);
    std::vector<std::string> want1 = {
        "u_01 := - inv(Pt_0^T A P_0) Pt_0^T A r_1",
        "p_1 := r_1 + P_0 u_01",
        "pt_1 := rt_1 + Pt_0 u_01",
        "delta_11 := pt_1^T r_1 / pt_1^T A p_1",
        "r_2 := r_1 - A p_1 delta_11",
        "rt_2 := rt_1 - A^T pt_1 delta_11",
        "x_2 := x_1 - p_1 delta_11"};
    CHECK(got1 == want1);
    CHECK(single.preprocessing.empty());
}
