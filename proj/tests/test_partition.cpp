#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flame/numeric.hpp"
#include "helpers.hpp"

using namespace flame;

TEST_CASE("initial partitioning shapes per operand role") {
    auto desc = th::load("cg_nonsym");
    auto scheme = initial_partition(desc);
    CHECK(scheme.of("R").pattern == OperandScheme::Pattern::Cols3);
    CHECK(scheme.of("Ru").pattern == OperandScheme::Pattern::Cols2);
    CHECK(scheme.of("P").pattern == OperandScheme::Pattern::Cols2);
    CHECK(scheme.of("U").pattern == OperandScheme::Pattern::Square2);
    CHECK(scheme.of("D").pattern == OperandScheme::Pattern::Square2);
    CHECK(scheme.of("A").pattern == OperandScheme::Pattern::None);

    auto arnoldi = th::load("arnoldi");
    auto s2 = initial_partition(arnoldi);
    CHECK(s2.of("H").pattern == OperandScheme::Pattern::Hess);
}

TEST_CASE("structural constants partition into their explicit grids") {
    auto desc = th::load("krylov");
    auto scheme = initial_partition(desc);
    Algebra alg = scheme.region_alg;
    LevelSpec spec{SplitLevel::Region, &scheme};
    Flattener fl{desc, spec, alg};
    // Ju is (m+1) x m: rows (k,1,1), cols (k,1)
    SplitVal v = fl.as_grid(cst(ConstKind::LowerShiftDropLast, SymDim::sym('m', 1), SymDim::sym('m')));
    REQUIRE(v.is_grid());
    CHECK(v.rows() == 3);
    CHECK(v.cols() == 2);
    CHECK(print_term(v.block(0, 0)) == "J");
    CHECK(print_term(v.block(0, 1)) == "0");
    CHECK(print_term(v.block(1, 0)) == "er^T");
    CHECK(print_term(v.block(1, 1)) == "0");
    CHECK(print_term(v.block(2, 0)) == "0");
    CHECK(print_term(v.block(2, 1)) == "1");
}

TEST_CASE("flattening distributes the equality blockwise") {
    SUBCASE("Krylov") {
        auto desc = th::load("krylov");
        auto scheme = initial_partition(desc);
        Algebra alg = scheme.region_alg;
        LevelSpec spec{SplitLevel::Region, &scheme};
        Flattener fl{desc, spec, alg};
        auto blocks = fl.flatten_eq(desc.post[0]);
        REQUIRE(blocks.size() == 2);
        CHECK(print_term(blocks[0].lhs) + " = " + print_term(blocks[0].rhs) == "A K_L = K_L J + k_R er^T");
        CHECK(print_term(blocks[1].lhs) + " = " + print_term(blocks[1].rhs) == "A k_R = k_+");
    }
    SUBCASE("nonsymmetric CG, first equation") {
        auto desc = th::load("cg_nonsym");
        auto scheme = initial_partition(desc);
        Algebra alg = scheme.region_alg;
        LevelSpec spec{SplitLevel::Region, &scheme};
        Flattener fl{desc, spec, alg};
        auto blocks = fl.flatten_eq(desc.post[0]);
        REQUIRE(blocks.size() == 2);
        CHECK(print_term(blocks[0].lhs) + " = " + print_term(blocks[0].rhs) ==
              "A P_L D_TL = R_L (I - J) - r_R er^T");
        CHECK(print_term(blocks[1].lhs) + " = " + print_term(blocks[1].rhs) ==
              "A p_R delta_BR = r_R - r_+");
    }
    SUBCASE("an equation over unpartitioned operands passes through") {
        auto desc = parse_description(
            "operation T2\n"
            "operand A : Input, square\n"
            "operand B : Input, square\n"
            "operand X : FirstColumnInput, tall1\n"
            "equation A * B = B * A\n"
            "guard norm_last_col X < eps\n");
        auto scheme = initial_partition(desc);
        Algebra alg = scheme.region_alg;
        LevelSpec spec{SplitLevel::Region, &scheme};
        Flattener fl{desc, spec, alg};
        auto blocks = fl.flatten_eq(desc.post[0]);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0].key() == desc.post[0].key());
    }
}

TEST_CASE("properties partition blockwise with zero and named blocks") {
    const auto& art = th::artifacts("cg_nonsym");
    SUBCASE("diagonal gram matrix") {
        CHECK(th::has_property(art.region_props, "Diagonal[R_L^T R_L]"));
        CHECK(th::has_property(art.region_props, "Zero[R_L^T r_R]"));
        CHECK(th::has_property(art.region_props, "Zero[r_R^T R_L]"));
        CHECK(th::has_property(art.region_props, "Zero[r_R^T r_+]"));
    }
    SUBCASE("lower triangular P^T A P") {
        CHECK(th::has_property(art.region_props, "LowerTriangular[P_L^T A P_L]"));
        CHECK(th::has_property(art.region_props, "Zero[P_L^T A p_R]"));
    }
    SUBCASE("unpartitioned subjects pass through") {
        CHECK(th::has_property(art.region_props, "NonSingular[A]"));
    }
}

TEST_CASE("zero-diagonal partitions to scalar zeros on the diagonal") {
    const auto& art = th::artifacts("steepest_descent");
    CHECK(th::has_property(art.region_props, "Zero[r_R^T r_+]"));
}

TEST_CASE("flatten soundness: block equations hold iff the original holds") {
    auto desc = th::load("cg_nonsym");
    auto scheme = initial_partition(desc);
    Algebra alg = scheme.region_alg;
    LevelSpec spec{SplitLevel::Region, &scheme};
    Flattener fl{desc, spec, alg};

    int n = 7, k = 3;
    Rng rng(5);
    // random concrete blocks; derive full operands from them
    std::map<std::string, Mat> bind;
    Mat RL = rng.matrix(n, k), rR = rng.matrix(n, 1), rP = rng.matrix(n, 1);
    Mat XL = rng.matrix(n, k), xR = rng.matrix(n, 1), xP = rng.matrix(n, 1);
    Mat PL = rng.matrix(n, k), pR = rng.matrix(n, 1);
    Mat UTL = rng.matrix(k, k), uTR = rng.matrix(k, 1);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j <= i; ++j) UTL(i, j) = 0;  // strictly upper
    Mat DTL(k, k), dBR = rng.matrix(1, 1);
    for (int i = 0; i < k; ++i) DTL(i, i) = rng.uniform() + 2;
    bind["A"] = rng.matrix(n, n);
    bind["R_L"] = RL; bind["r_R"] = rR; bind["r_+"] = rP;
    bind["X_L"] = XL; bind["x_R"] = xR; bind["x_+"] = xP;
    bind["P_L"] = PL; bind["p_R"] = pR;
    bind["U_TL"] = UTL; bind["u_TR"] = uTR;
    bind["D_TL"] = DTL; bind["delta_BR"] = dBR;

    // full operands assembled from the blocks
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
    bind["R"] = hcat({RL, rR, rP});
    bind["Ru"] = hcat({RL, rR});
    bind["X"] = hcat({XL, xR, xP});
    bind["P"] = hcat({PL, pR});
    Mat U(k + 1, k + 1), D(k + 1, k + 1);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) { U(i, j) = UTL(i, j); D(i, j) = DTL(i, j); }
    for (int i = 0; i < k; ++i) U(i, k) = uTR(i, 0);
    D(k, k) = dBR(0, 0);
    bind["U"] = U;
    bind["D"] = D;

    for (auto& eq : desc.post) {
        auto blocks = fl.flatten_eq(eq);
        auto L = eval_concrete(bind, n, k + 1, eq.lhs, k);
        auto R = eval_concrete(bind, n, k + 1, eq.rhs, k);
        REQUIRE(L);
        REQUIRE(R);
        double full_resid = (*L - *R).max_abs();
        double block_resid = 0;
        for (auto& b : blocks) {
            auto bl = eval_concrete(bind, n, k + 1, b.lhs, k);
            auto br = eval_concrete(bind, n, k + 1, b.rhs, k);
            REQUIRE(bl);
            REQUIRE(br);
            block_resid = std::max(block_resid, (*bl - *br).max_abs());
        }
        // generic random blocks: the residuals measure the same violation
        CHECK(std::fabs(full_resid - block_resid) <= 1e-12 * (1 + full_resid));
    }
}

TEST_CASE("partitioned block properties hold numerically when the parent does") {
    // orthogonal-ish R: build with exactly diagonal gram matrix
    int n = 8, k = 3;
    Mat R(n, k + 2);
    for (int j = 0; j < k + 2; ++j) R(j, j) = 1.5 + j;  // orthogonal columns
    Mat RL = R.slice(0, n, 0, k), rR = R.slice(0, n, k, k + 1), rP = R.slice(0, n, k + 1, k + 2);
    // Zero[R_L^T r_R] etc.
    CHECK((RL.transposed() * rR).max_abs() == 0);
    CHECK((rR.transposed() * rP).max_abs() == 0);
    Mat G = RL.transposed() * RL;
    double offdiag = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            if (i != j) offdiag = std::max(offdiag, std::fabs(G(i, j)));
    CHECK(offdiag == 0);
}

TEST_CASE("initial sizes empty the traversed regions") {
    auto desc = th::load("cg_nonsym");
    auto scheme = initial_partition(desc);
    auto maps = build_region_maps(desc, scheme);
    LevelSpec rspec{SplitLevel::Region, &scheme};
    for (auto& o : desc.operands) rspec.operand_val(o, scheme.region_alg);
    Algebra alg0 = initial_algebra(scheme);
    CHECK(alg0.vanishes(opnd("P", "L")));
    CHECK(alg0.vanishes(opnd("U", "TL")));
    CHECK_FALSE(alg0.vanishes(opnd("P", "R", "p_R")));
    // a product with an empty inner extent reduces to zero
    TermPtr t = mul({opnd("P", "L"), opnd("U", "TR")});
    CHECK(is_zero_term(alg0.normalize(t)));
}
