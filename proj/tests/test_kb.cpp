#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flame/matrix.hpp"
#include "flame/numeric.hpp"
#include "helpers.hpp"

using namespace flame;

TEST_CASE("default knowledgebase carries the expected rules") {
    auto kb = default_kb();
    using P = PropertyName;
    CHECK(kb.has_rule(RuleKind::SubtermCompose, {P::Diagonal, P::LowerTriangular}, P::LowerTriangular));
    CHECK(kb.has_rule(RuleKind::SubtermCompose, {P::StrictlyUpperTriangular}, P::UpperTriangular));
    CHECK(kb.has_rule(RuleKind::FunctionLift, {P::LowerTriangular}, P::UpperTriangular));
    CHECK(kb.has_rule(RuleKind::FunctionLift, {P::LowerTriangular}, P::LowerTriangular));  // inversion
    CHECK(kb.has_rule(RuleKind::FunctionLift, {P::Orthogonal}, P::Diagonal));
    CHECK(kb.has_rule(RuleKind::SameTermCombine, {P::SPD}, P::NonSingular));
    CHECK(kb.has_rule(RuleKind::SameTermCombine, {P::Diagonal}, P::NonSingular));
    // transpose duals exist for every lower shape
    CHECK(kb.has_rule(RuleKind::FunctionLift, {P::LowerTrapezoidal}, P::UpperTrapezoidal));
    CHECK(kb.has_rule(RuleKind::FunctionLift, {P::LowerTriangularR}, P::UpperTriangularR));
}

TEST_CASE("apply_rules_once: single saturation pass semantics") {
    Algebra alg;
    SymDim n = SymDim::sym('n');
    alg.declare("R", "", n, SymDim::sym('m', 1));
    alg.declare("U", "", SymDim::sym('m'), SymDim::sym('m'));

    SUBCASE("orthogonality yields a diagonal gram matrix") {
        PropertySet props;
        props.add({PropertyName::Orthogonal, opnd("R")});
        auto out = apply_rules_once(default_kb(), alg, props, {});
        CHECK(th::has_property(out, "Diagonal[R^T R]"));
    }
    SUBCASE("I minus strictly upper is upper triangular, given the term occurs") {
        PropertySet props;
        props.add({PropertyName::StrictlyUpperTriangular, opnd("U")});
        SymDim m = SymDim::sym('m');
        TermPtr imu = add({cst(ConstKind::Identity, m, m), neg(opnd("U"))});
        std::vector<Equation> eqs{{alg.normalize(mul({opnd("R"), imu})), alg.normalize(opnd("R"))}};
        auto out = apply_rules_once(default_kb(), alg, props, eqs);
        CHECK(th::has_property(out, "UpperTriangular[I - U]"));
        CHECK(th::has_property(out, "NonSingular[I - U]"));
        // without the equation, the existence guard blocks the inference
        auto out2 = apply_rules_once(default_kb(), alg, props, {});
        CHECK_FALSE(th::has_property(out2, "UpperTriangular[I - U]"));
    }
    SUBCASE("an empty knowledgebase derives nothing") {
        PropertySet props;
        props.add({PropertyName::Orthogonal, opnd("R")});
        Knowledgebase empty;
        auto out = apply_rules_once(empty, alg, props, {});
        CHECK(out.size() == props.size());
    }
}

namespace {

Mat masked_random(Rng& rng, int n, int m, Band band) {
    Mat a = rng.matrix(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            long d = j - i;
            bool ok = (band.lo <= -Band::INF || d >= band.lo) && (band.hi >= Band::INF || d <= band.hi);
            if (!ok) a(i, j) = 0;
        }
    // keep banded square matrices comfortably nonsingular
    if (n == m && band.lo <= 0 && band.hi >= 0)
        for (int i = 0; i < n; ++i) a(i, i) += 3;
    return a;
}

double band_violation(const Mat& a, Band band) {
    double worst = 0;
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) {
            long d = j - i;
            bool ok = (band.lo <= -Band::INF || d >= band.lo) && (band.hi >= Band::INF || d <= band.hi);
            if (!ok) worst = std::max(worst, std::fabs(a(i, j)));
        }
    return worst;
}

} // namespace

TEST_CASE("numeric soundness of the shape closure") {
    // premise-satisfying random matrices satisfy the concluded band
    Rng rng(2024);
    std::vector<PropertyName> shapes = {
        PropertyName::Diagonal, PropertyName::UpperDiagonal, PropertyName::LowerDiagonal,
        PropertyName::UpperTriangular, PropertyName::LowerTriangular,
        PropertyName::StrictlyUpperTriangular, PropertyName::UpperHessenberg};
    int trials = 0;
    for (auto pa : shapes)
        for (auto pb : shapes) {
            Band ba = *band_of_property(pa), bb = *band_of_property(pb);
            for (int t = 0; t < 5; ++t) {
                int n = 4 + int(rng.gen() % 3);
                Mat x = masked_random(rng, n, n, ba);
                Mat y = masked_random(rng, n, n, bb);
                CHECK(band_violation(x * y, ba + bb) < 1e-10);
                ++trials;
            }
        }
    CHECK(trials >= 200);

    // transpose duals
    for (auto pa : shapes) {
        Band ba = *band_of_property(pa);
        Mat x = masked_random(rng, 6, 6, ba);
        CHECK(band_violation(x.transposed(), ba.transposed()) == 0);
    }
    // inversion preserves triangularity
    for (auto pa : {PropertyName::Diagonal, PropertyName::LowerTriangular, PropertyName::UpperTriangular}) {
        Band ba = *band_of_property(pa);
        Mat x = masked_random(rng, 6, 6, ba);
        Mat inv = solve_dense(x, Mat::identity(6));
        CHECK(band_violation(inv, ba.inverse()) < 1e-10);
    }
    // the I + strictly-upper rule
    for (int t = 0; t < 20; ++t) {
        Mat u = masked_random(rng, 5, 5, *band_of_property(PropertyName::StrictlyUpperTriangular));
        Mat m = Mat::identity(5) - u;
        CHECK(band_violation(m, Band{0, Band::INF}) == 0);
        CHECK_NOTHROW((void)solve_dense(m, Mat::identity(5)));  // nonsingular
    }
}

TEST_CASE("transpose duality of a derived set") {
    const auto& art = th::artifacts("cg_nonsym");
    Algebra alg = art.desc.algebra();
    for (auto& p : art.op_props) {
        auto b = band_of_property(p.name);
        if (!b) continue;
        TermPtr tsubj = alg.transpose_of(p.subject);
        auto d = alg.dims_of(tsubj);
        if (!d) continue;
        auto dual = property_for_band(b->transposed(), *d);
        if (!dual) continue;
        CHECK(art.op_props.contains(*dual, tsubj));
    }
}

TEST_CASE("user-defined rules apply through the pattern matcher") {
    auto desc = parse_description(
        "operation T1\n"
        "operand D : Input, square, Diagonal\n"
        "operand L : Input, square, LowerTriangular\n"
        "operand x : Input, vector\n"
        "operand Y : Output, square\n"
        "equation D * L * Y = x\n"
        "rule Diagonal[?a] ; LowerTriangular[?b] ; exists ?a * ?b => LowerTriangular[?a * ?b]\n"
        "guard size Y = n x m\n");
    Knowledgebase kb;  // only the user rule: conclusions must come from it
    kb.rules = desc.extra_rules;
    Algebra alg = desc.algebra();
    auto st = initialize(desc, alg);
    RuleEngine eng(kb, alg, 3, 1000);
    eng.begin_closure();
    while (eng.pass(st.props, st.temp, st.eqs)) {
    }
    CHECK(th::has_property(st.props, "LowerTriangular[D L]"));
}
