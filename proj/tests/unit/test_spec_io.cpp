#include <string>

#include "doctest.h"

#include "affmart/params.hpp"
#include "affmart/spec_io.hpp"

using namespace affmart;

namespace {
std::string spec_path(const std::string& name) { return std::string(AFFMART_SPEC_DIR) + "/" + name; }

bool has_rule(const std::vector<Violation>& v, const std::string& rule) {
    for (const auto& x : v)
        if (x.rule == rule) return true;
    return false;
}
}  // namespace

TEST_SUITE("spec_io") {

TEST_CASE("example spec loads with a series measure") {
    const AffineParams p = load_spec(spec_path("zeta_series.json"));
    CHECK(p.m == 1);
    CHECK(p.n == 0);
    REQUIRE(p.kappa.size() == 2);
    CHECK(p.kappa[0].is_zero());
    CHECK(p.kappa[1].kind() == JumpMeasure::Kind::SeriesAtomic);
    CHECK(p.beta[1](0) == doctest::Approx(M_PI * M_PI / 6.0));
    CHECK(validate_admissibility(p).empty());
}

TEST_CASE("empty kappa arrays give zero measures") {
    const AffineParams p = parse_spec(R"({"m": 1, "n": 1, "beta": [[0, 0], [-1, 0], [0, -1]], "kappa": []})");
    REQUIRE(p.kappa.size() == 3);
    for (const auto& k : p.kappa) CHECK(k.is_zero());
    CHECK(p.gamma == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("round trip keeps expressions verbatim") {
    for (const char* f : {"zeta_series.json", "stable_half.json", "weighted_series.json", "weighted_series_heavy.json"}) {
        const AffineParams p = load_spec(spec_path(f));
        const nlohmann::json a = params_to_json(p);
        const AffineParams q = params_from_json(a);
        CHECK(params_to_json(q) == a);
    }
    const AffineParams p = load_spec(spec_path("weighted_series.json"));
    CHECK(params_to_json(p)["kappa"][1]["weight_expr"] == "1/((1+n)*n^2)");
}

TEST_CASE("errors name the key or the line") {
    try {
        parse_spec("{\"m\": 1,\n \"n\": 0,\n \"beta\": [[0] [1]]}");
        FAIL("no throw");
    } catch (const SpecError& e) {
        CHECK(e.where().find("line 3") != std::string::npos);
    }
    try {
        parse_spec(R"({"m": 1, "n": 1, "beta": [[0, 0], [1], [0, 0]]})");
        FAIL("no throw");
    } catch (const SpecError& e) {
        CHECK(e.where() == "beta[1]");
    }
    try {
        parse_spec(R"({"m": 1, "n": 0, "kappa": [null, {"kind": "series", "point_exprs": ["n"], "weight_expr": "1/n^^2", "tail": {"c": 1, "p": 2}}]})");
        FAIL("no throw");
    } catch (const SpecError& e) {
        CHECK(e.where().find("kappa[1]") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_spec(R"({"n": 0})"), SpecError);
    CHECK_THROWS_AS(load_spec(spec_path("missing.json")), SpecError);
}

TEST_CASE("admissibility violations") {
    const AffineParams bad = load_spec(spec_path("bad_gamma.json"));
    const auto v = validate_admissibility(bad);
    CHECK(has_rule(v, "gamma.nonnegative"));

    AffineParams p = AffineParams::zero(1, 1);
    p.alpha[0](0, 0) = 1.0;  // diffusion of the R_+ coordinate at the boundary
    p.beta[0](0) = -0.5;     // inward drift required at 0
    const auto w = validate_admissibility(p);
    CHECK(has_rule(w, "alpha.block"));
    CHECK(has_rule(w, "beta.cross_drift"));

    AffineParams q = AffineParams::zero(1, 0);
    q.kappa[0] = JumpMeasure::finite(1, {{{-0.5}, 1.0}});  // jumps out of R_+
    CHECK(has_rule(validate_admissibility(q), "kappa.support"));
}

}
