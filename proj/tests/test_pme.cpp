#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flame/numeric.hpp"
#include "helpers.hpp"

using namespace flame;

TEST_CASE("the recursive function matches the traversed-region blocks") {
    SUBCASE("Krylov") {
        auto desc = th::load("krylov");
        auto scheme = initial_partition(desc);
        Algebra alg = scheme.region_alg;
        LevelSpec spec{SplitLevel::Region, &scheme};
        Flattener fl{desc, spec, alg};
        std::vector<Equation> blocks;
        for (auto& e : desc.post)
            for (auto& b : fl.flatten_eq(e)) blocks.push_back(b);
        auto [call_asgn, residual] = match_operation(desc, scheme, blocks, alg);
        CHECK(call_asgn.str() == "{[K_L, k_R]} := KS(A, K_L e0)");
        REQUIRE(residual.size() == 1);
        CHECK(print_term(residual[0].lhs) + " = " + print_term(residual[0].rhs) == "A k_R = k_+");
    }
    SUBCASE("nonsymmetric CG leaves the three right-hand block equations") {
        auto desc = th::load("cg_nonsym");
        auto scheme = initial_partition(desc);
        Algebra alg = scheme.region_alg;
        LevelSpec spec{SplitLevel::Region, &scheme};
        Flattener fl{desc, spec, alg};
        std::vector<Equation> blocks;
        for (auto& e : desc.post)
            for (auto& b : fl.flatten_eq(e)) blocks.push_back(b);
        auto [call_asgn, residual] = match_operation(desc, scheme, blocks, alg);
        CHECK(call_asgn.str() ==
              "{[R_L, r_R], U_TL, P_L, D_TL, [X_L, x_R]} := CG(A, R_L e0, X_L e0)");
        REQUIRE(residual.size() == 3);
    }
    SUBCASE("a partitioning that cannot host the function raises NoMatch") {
        // X mis-declared as plain output: the renamed postcondition blocks
        // cannot be found among the flattened ones
        auto desc = parse_description(
            "operation CGX\n"
            "operand A : Input, square, NonSingular\n"
            "operand R : FirstColumnInput, tall1, Orthogonal\n"
            "operand Ru : FirstColumnInput, tall, Orthogonal, underlined_of R\n"
            "operand U : Output, small, StrictlyUpperTriangular\n"
            "operand P : Output, tall\n"
            "operand D : Output, small, Diagonal\n"
            "operand X : Output, tall\n"
            "equation A * P * D = R * (Iu - Ju)\n"
            "equation P * (I - U) = Ru\n"
            "equation P * D = X * Ju\n"
            "guard norm_last_col R < eps\n");
        auto scheme = initial_partition(desc);
        Algebra alg = scheme.region_alg;
        LevelSpec spec{SplitLevel::Region, &scheme};
        Flattener fl{desc, spec, alg};
        std::vector<Equation> blocks;
        for (auto& e : desc.post)
            for (auto& b : fl.flatten_eq(e)) blocks.push_back(b);
        CHECK_THROWS_AS((void)match_operation(desc, scheme, blocks, alg), NoMatch);
    }
}

TEST_CASE("solve candidates for the three residual equations") {
    const auto& art = th::artifacts("cg_nonsym");
    Algebra alg = art.solve_alg;
    LevelSpec spec{SplitLevel::Region, &art.scheme};
    Flattener fl{art.desc, spec, alg};
    std::vector<Equation> blocks;
    for (auto& e : art.desc.post)
        for (auto& b : fl.flatten_eq(e)) blocks.push_back(b);
    auto [call_asgn, residual] = match_operation(art.desc, art.scheme, blocks, alg);
    std::set<std::string> known;
    for (auto& t : call_asgn.targets) known.insert(key_of(t));
    for (auto& o : art.desc.operands)
        if (o.kind == OperandKind::Input) known.insert(key_of(opnd(o.name)));

    EquationSolver solver{alg, art.region_props, known};
    // -P_L u_TR + p_R = r_R  (two unknowns): property application solves u_TR
    {
        auto cands = solver.candidates(residual[1]);
        REQUIRE(cands.size() == 2);
        std::set<std::string> got;
        for (auto& c : cands) got.insert(c.str());
        CHECK(got.count("u_TR := - inv(P_L^T A P_L) P_L^T A r_R"));
        CHECK(got.count("u_TR := - inv(R_L^T A P_L) R_L^T A r_R"));
    }
    // after u_TR and p_R, the delta equation has the two orthogonality routes
    {
        known.insert(key_of(opnd("U", "TR")));
        known.insert(key_of(opnd("P", "R")));
        EquationSolver s2{alg, art.region_props, known};
        auto cands = s2.candidates(residual[0]);
        REQUIRE(cands.size() == 2);
        std::set<std::string> got;
        for (auto& c : cands) got.insert(c.str());
        CHECK(got.count("delta_BR := r_R^T r_R / r_R^T A p_R"));
        CHECK(got.count("delta_BR := p_R^T r_R / p_R^T A p_R"));
        // then r_+ isolates directly
        known.insert(key_of(opnd("D", "BR")));
        EquationSolver s3{alg, art.region_props, known};
        auto c3 = s3.candidates(residual[0]);
        REQUIRE(c3.size() == 1);
        CHECK(c3[0].str() == "r_+ := r_R - A p_R delta_BR");
        // and x_+ from the last equation
        known.insert(key_of(opnd("R", "+")));
        EquationSolver s4{alg, art.region_props, known};
        auto c4 = s4.candidates(residual[2]);
        REQUIRE(c4.size() == 1);
        CHECK(c4[0].str() == "x_+ := x_R - p_R delta_BR");
    }
}

TEST_CASE("PME counts and shapes") {
    SUBCASE("nonsymmetric CG produces exactly four PMEs, one the textbook variant") {
        const auto& art = th::artifacts("cg_nonsym");
        CHECK(art.pmes.size() == 4);
        int idx = th::textbook_pme_cg(art);
        REQUIRE(idx >= 0);
        const PME& pme = art.pmes[idx];
        REQUIRE(pme.assignments.size() == 6);
        CHECK(pme.assignments[0].str() ==
              "{[R_L, r_R], U_TL, P_L, D_TL, [X_L, x_R]} := CG(A, R_L e0, X_L e0)");
        CHECK(pme.assignments[1].str() == "u_TR := - inv(P_L^T A P_L) P_L^T A r_R");
        CHECK(pme.assignments[2].str() == "p_R := r_R + P_L u_TR");
        CHECK(pme.assignments[3].str() == "delta_BR := r_R^T r_R / r_R^T A p_R");
        CHECK(pme.assignments[4].str() == "r_+ := r_R - A p_R delta_BR");
        CHECK(pme.assignments[5].str() == "x_+ := x_R - p_R delta_BR");
    }
    SUBCASE("Krylov produces exactly one two-assignment PME") {
        const auto& art = th::artifacts("krylov");
        REQUIRE(art.pmes.size() == 1);
        REQUIRE(art.pmes[0].assignments.size() == 2);
        CHECK(art.pmes[0].assignments[1].str() == "k_+ := A k_R");
    }
    SUBCASE("BiCG produces the eight-assignment textbook variant") {
        const auto& art = th::artifacts("bicg");
        int idx = th::textbook_pme_bicg(art);
        REQUIRE(idx >= 0);
        const PME& pme = art.pmes[idx];
        REQUIRE(pme.assignments.size() == 8);
        CHECK(pme.assignments[1].str() == "u_TR := - inv(Pt_L^T A P_L) Pt_L^T A r_R");
        CHECK(pme.assignments[2].str() == "p_R := r_R + P_L u_TR");
        CHECK(pme.assignments[3].str() == "pt_R := rt_R + Pt_L u_TR");
        CHECK(pme.assignments[4].str() == "delta_BR := pt_R^T r_R / pt_R^T A p_R");
        CHECK(pme.assignments[5].str() == "r_+ := r_R - A p_R delta_BR");
        CHECK(pme.assignments[6].str() == "rt_+ := rt_R - A^T pt_R delta_BR");
        CHECK(pme.assignments[7].str() == "x_+ := x_R - p_R delta_BR");
    }
}

TEST_CASE("every generated PME is topologically valid") {
    for (const char* nm : {"cg_nonsym", "cg_sym", "bicg", "krylov", "steepest_descent", "jacobi",
                           "gauss_seidel", "sor", "richardson"}) {
        const auto& art = th::artifacts(nm);
        for (auto& pme : art.pmes) CHECK(pme_topologically_valid(art.desc, pme));
    }
}

TEST_CASE("the Arnoldi normalization gap surfaces as Unsolvable") {
    auto desc = th::load("arnoldi");
    try {
        build_artifacts(desc);
        FAIL("expected Unsolvable");
    } catch (const Unsolvable& u) {
        bool has_eta = false;
        for (auto& s : u.unknowns)
            if (s == "eta_BR") has_eta = true;
        CHECK(has_eta);
    }
}

TEST_CASE("numeric PME soundness against a reference run") {
    // instantiate the traversed blocks from k reference iterations, evaluate
    // the residual assignments, and confirm the (k+1)-column postcondition
    const auto& art = th::artifacts("cg_nonsym");
    int idx = th::textbook_pme_cg(art);
    REQUIRE(idx >= 0);
    const PME& pme = art.pmes[idx];

    int n = 24, k = 6;
    auto prob = instantiate(ProblemClass::GeneralNonsingular, n, 9);
    auto ref = reference_cg(prob.A, prob.b, prob.x0, k + 1);

    std::map<std::string, Mat> bind;
    bind["A"] = prob.A;
    bind["R_L"] = ref.R.slice(0, n, 0, k);
    bind["r_R"] = ref.R.slice(0, n, k, k + 1);
    bind["X_L"] = ref.X.slice(0, n, 0, k);
    bind["x_R"] = ref.X.slice(0, n, k, k + 1);
    bind["P_L"] = ref.P.slice(0, n, 0, k);
    bind["U_TL"] = ref.U.slice(0, k, 0, k);
    bind["D_TL"] = ref.D.slice(0, k, 0, k);

    // evaluate the residual assignments in order
    for (size_t i = 1; i < pme.assignments.size(); ++i) {
        const Assignment& a = pme.assignments[i];
        auto v = eval_concrete(bind, n, k, a.rhs, k);
        REQUIRE(v);
        bind[th::bind_key(a.targets[0])] = *v;
    }
    // assemble the extended operands and check the full postcondition
    auto hcat = [&](std::vector<Mat> parts) {
        int cols = 0;
        for (auto& p : parts) cols += p.cols;
        Mat out(parts[0].rows, cols);
        int c0 = 0;
        for (auto& p : parts) {
            for (int i = 0; i < p.rows; ++i)
                for (int j = 0; j < p.cols; ++j) out(i, c0 + j) = p(i, j);
            c0 += p.cols;
        }
        return out;
    };
    bind["R"] = hcat({bind["R_L"], bind["r_R"], bind["r_+"]});
    bind["Ru"] = hcat({bind["R_L"], bind["r_R"]});
    bind["X"] = hcat({bind["X_L"], bind["x_R"], bind["x_+"]});
    bind["P"] = hcat({bind["P_L"], bind["p_R"]});
    Mat U(k + 1, k + 1), D(k + 1, k + 1);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) { U(i, j) = bind["U_TL"](i, j); D(i, j) = bind["D_TL"](i, j); }
    for (int i = 0; i < k; ++i) U(i, k) = bind["u_TR"](i, 0);
    D(k, k) = bind["delta_BR"](0, 0);
    bind["U"] = U;
    bind["D"] = D;

    for (auto& eq : art.desc.post) {
        auto L = eval_concrete(bind, n, k + 1, eq.lhs);
        auto R = eval_concrete(bind, n, k + 1, eq.rhs);
        REQUIRE(L);
        REQUIRE(R);
        double scale = std::max(1.0, L->max_abs());
        CHECK((*L - *R).max_abs() / scale < 1e-8);
    }
}
