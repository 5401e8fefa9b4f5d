#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flame/render.hpp"
#include "helpers.hpp"

using namespace flame;

TEST_CASE("every shipped description parses") {
    for (const char* nm : {"krylov", "cg_nonsym", "cg_sym", "bicg", "jacobi", "gauss_seidel", "sor",
                           "richardson", "steepest_descent", "arnoldi"}) {
        auto desc = th::load(nm);
        CHECK_FALSE(desc.operation.empty());
        CHECK(desc.guard.has_value());
        CHECK_FALSE(desc.post.empty());
    }
}

TEST_CASE("the Krylov description matches its matrix representation") {
    auto desc = th::load("krylov");
    CHECK(desc.operation == "KS");
    REQUIRE(desc.post.size() == 1);
    CHECK(print_term(desc.post[0].lhs) == "A Ku");
    CHECK(print_term(desc.post[0].rhs) == "K Ju");
    const OperandDecl* k = desc.find("K");
    REQUIRE(k);
    CHECK(k->kind == OperandKind::FirstColumnInput);
    CHECK(k->has_underlined_twin);
    CHECK(desc.guard->form == GuardSpec::Form::SizeBound);
}

TEST_CASE("parse errors carry the offending line") {
    SUBCASE("malformed equation") {
        try {
            parse_description(
                "operation T\n"
                "operand A : Input, square\n"
                "operand X : FirstColumnInput, tall1\n"
                "equation A * = X\n"
                "guard size X = n x m\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 4);
        }
    }
    SUBCASE("unknown token") {
        CHECK_THROWS_AS(parse_description("operation T\nequation Q = Q\n"), ParseError);
    }
    SUBCASE("unknown directive") {
        CHECK_THROWS_AS(parse_description("operation T\nfoo bar\n"), ParseError);
    }
    SUBCASE("unknown guard form") {
        CHECK_THROWS_AS(parse_description("operation T\n"
                                          "operand X : FirstColumnInput, tall1\n"
                                          "guard weird X < eps\n"),
                        ParseError);
    }
}

TEST_CASE("constant dimensions are inferred from context") {
    auto desc = th::load("jacobi");
    // D X Ju = (L + U) Xu + b e^T: Ju must be (m+1) x m, e must have length m
    std::function<void(const TermPtr&, bool&)> find_ju = [&](const TermPtr& t, bool& found) {
        if (t->kind == Term::Kind::Const && t->ckind == ConstKind::LowerShiftDropLast) {
            found = true;
            CHECK(t->crows.str() == "m+1");
            CHECK(t->ccols.str() == "m");
        }
        for (auto& k : t->kids) find_ju(k, found);
    };
    bool found = false;
    find_ju(desc.post[0].lhs, found);
    CHECK(found);
    bool founde = false;
    std::function<void(const TermPtr&)> find_e = [&](const TermPtr& t) {
        if (t->kind == Term::Kind::Const && t->ckind == ConstKind::Ones) {
            founde = true;
            CHECK(t->crows.str() == "m");
            CHECK(t->ccols.str() == "1");
        }
        for (auto& k : t->kids) find_e(k);
    };
    find_e(desc.post[0].rhs);
    CHECK(founde);
}

TEST_CASE("rule lines parse into user rules") {
    auto desc = parse_description(
        "operation T\n"
        "operand A : Input, square, Diagonal\n"
        "operand X : FirstColumnInput, tall1\n"
        "equation A * Xu = X * Ju\n"
        "operand Xu : FirstColumnInput, tall, underlined_of X\n"
        "rule Diagonal[?a] ; Diagonal[?b] ; exists ?a * ?b => Diagonal[?a * ?b]\n"
        "guard size X = n x m\n");
    REQUIRE(desc.extra_rules.size() == 1);
    const auto& r = desc.extra_rules[0];
    CHECK(r.form == InferenceRule::Form::UserPattern);
    CHECK(r.premises == std::vector<PropertyName>{PropertyName::Diagonal, PropertyName::Diagonal});
    CHECK(r.has_existence);
    CHECK(r.conclusion == PropertyName::Diagonal);
}

TEST_CASE("every shipped description runs the pipeline; arnoldi is the negative fixture") {
    for (const char* nm : {"krylov", "cg_nonsym", "cg_sym", "bicg", "jacobi", "gauss_seidel", "sor",
                           "richardson", "steepest_descent"}) {
        const auto& art = th::artifacts(nm);
        CHECK_FALSE(art.pmes.empty());
        CHECK(art.guard.has_value());
        CHECK_FALSE(invariants_for(art, 0).empty());
    }
    CHECK_THROWS_AS((void)build_artifacts(th::load("arnoldi")), Unsolvable);
}

TEST_CASE("emissions are byte-stable across pipeline runs") {
    auto a1 = build_artifacts(th::load("cg_nonsym"));
    auto a2 = build_artifacts(th::load("cg_nonsym"));
    CHECK(emit_properties(a1) == emit_properties(a2));
    CHECK(emit_pmes(a1) == emit_pmes(a2));
    CHECK(emit_invariants(a1, 0) == emit_invariants(a2, 0));
    auto invs1 = invariants_for(a1, 0);
    auto invs2 = invariants_for(a2, 0);
    REQUIRE(invs1.size() == invs2.size());
    auto w1 = worksheet_for(a1, 0, invs1[2], true);
    auto w2 = worksheet_for(a2, 0, invs2[2], true);
    CHECK(render(w1, "json") == render(w2, "json"));
    CHECK(render(w1, "text") == render(w2, "text"));
}

TEST_CASE("kb extension files reuse the rule-line syntax") {
    std::string path = "/tmp/flame_kb_ext.rules";
    {
        std::ofstream f(path);
        f << "Diagonal[?a] ; Diagonal[?b] ; exists ?a * ?b => Diagonal[?a * ?b]\n";
    }
    auto rules = load_kb_file(path);
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].conclusion == PropertyName::Diagonal);
}
