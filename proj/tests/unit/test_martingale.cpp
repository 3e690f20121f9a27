#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"

#include "affmart/martingale.hpp"
#include "affmart/riccati.hpp"
#include "affmart/spec_io.hpp"

using namespace affmart;

namespace {

std::string spec_path(const std::string& name) { return std::string(AFFMART_SPEC_DIR) + "/" + name; }

double clamp1(double x) { return std::max(-1.0, std::min(1.0, x)); }

// m = 1, n = 1 with atoms in both kappa_0 and kappa_1, drift of X^2 balanced.
AffineParams two_factor() {
    AffineParams p = AffineParams::zero(1, 1);
    p.alpha[0](1, 1) = 0.3;
    p.alpha[1] << 0.4, 0.1, 0.1, 0.2;
    p.beta[0] << 0.5, 0.0;
    p.beta[1] << -0.8, 0.0;
    p.beta[2] << 0.0, -0.3;
    p.kappa[0] = JumpMeasure::finite(2, {{{0.5, -0.6}, 0.7}, {{0.0, 2.5}, 0.2}});
    p.kappa[1] = JumpMeasure::finite(2, {{{1.5, 3.0}, 0.4}, {{0.2, -0.9}, 1.1}});
    for (std::size_t j = 0; j <= 1; ++j) {
        double gap = 0.0;
        for (const Atom& a : p.kappa[j].finite_atoms().atoms) gap += a.weight * (a.point[1] - clamp1(a.point[1]));
        p.beta[j](1) = -gap;
    }
    p.beta[2](1) = 0.0;
    return p;
}

}  // namespace

TEST_SUITE("martingale") {

TEST_CASE("positivity") {
    AffineParams p = AffineParams::zero(0, 1);
    p.kappa[0] = JumpMeasure::finite(1, {{{-0.9}, 1.0}, {{4.0}, 0.1}});
    CHECK(positivity_check(p, 1).is_holds());
    p.kappa[0] = JumpMeasure::finite(1, {{{-1.2}, 1.0}});
    CHECK(positivity_check(p, 1).is_fails());
    p.kappa[0] = JumpMeasure::series({Expr::parse("1 - n/4")}, Expr::parse("1/n^2"), {1.0, 2.0});
    CHECK(positivity_check(p, 1).is_fails());
    p.kappa[0] = JumpMeasure::density(Expr::parse("exp(-abs(xi1))"), {{-3.0, 2.0}}, 0.0, 0.0);
    CHECK(positivity_check(p, 1).is_fails());
    p.kappa[0] = JumpMeasure::density(Expr::parse("exp(-abs(xi1))"), {{-1.0, INFINITY}}, 0.0, -10.0);
    CHECK(positivity_check(p, 1).is_holds());
}

TEST_CASE("drift identity residuals") {
    AffineParams p = two_factor();
    std::vector<DriftResidual> res;
    CHECK(local_martingale_check(p, 2, 1e-10, &res).is_holds());
    REQUIRE(res.size() == 3);
    for (const auto& r : res) CHECK(std::abs(r.value) < 1e-14);
    p.beta[1](1) += 0.01;
    res.clear();
    CHECK(local_martingale_check(p, 2, 1e-10, &res).is_fails());
    CHECK(res[1].value == doctest::Approx(0.01));
}

TEST_CASE("star transform against the reweighted integrand") {
    const AffineParams p = two_factor();
    const AffineParams s = star_transform(p, 2);
    RContext star(s, {1e-13, false});
    const std::vector<std::vector<cplx>> us{{cplx(-0.7, 0.3), cplx(0.0, 1.2)}, {cplx(-0.1, 0.0), cplx(0.0, -0.5)}};
    for (std::size_t j = 0; j <= 1; ++j) {
        // beta* = beta + alpha e_2 + int xi_2 h(xi) dkappa
        Eigen::VectorXd bs = p.beta[j] + p.alpha[j].col(1);
        for (const Atom& a : p.kappa[j].finite_atoms().atoms)
            for (int k = 0; k < 2; ++k) bs(k) += a.weight * a.point[1] * clamp1(a.point[k]);
        CHECK((s.beta[j] - bs).cwiseAbs().maxCoeff() < 1e-14);
        for (const auto& u : us) {
            cplx expect = 0.0;
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) expect += 0.5 * u[k] * p.alpha[j](k, l) * u[l];
            for (int k = 0; k < 2; ++k) expect += bs(k) * u[k];
            for (const Atom& a : p.kappa[j].finite_atoms().atoms) {
                const cplx ux = u[0] * a.point[0] + u[1] * a.point[1];
                const cplx uh = u[0] * clamp1(a.point[0]) + u[1] * clamp1(a.point[1]);
                expect += a.weight * (1.0 + a.point[1]) * (std::exp(ux) - 1.0 - uh);
            }
            CHECK(std::abs(eval_R(star, j, std::span<const cplx>(u)) - expect) < 1e-12);
        }
    }
}

TEST_CASE("Brownian stochastic exponential is a true martingale") {
    AffineParams p = AffineParams::zero(0, 1);
    p.alpha[0](0, 0) = 1.0;
    const MartingaleReport r = martingale_verdict(p, MartingaleForm::stochastic_exp(1));
    CHECK(r.overall.is_holds());
    CHECK(to_json(r)["verdict"] == "true martingale");
}

TEST_CASE("drift violation is not a local martingale") {
    AffineParams p = AffineParams::zero(0, 1);
    p.alpha[0](0, 0) = 1.0;
    p.beta[0](0) = 0.2;
    const MartingaleReport r = martingale_verdict(p, MartingaleForm::stochastic_exp(1));
    CHECK(r.overall.is_fails());
    CHECK(to_json(r)["verdict"] == "not a local martingale");
}

TEST_CASE("lifts add one real coordinate") {
    const AffineParams p = two_factor();
    const AffineParams e = exp_lift(p, 2);
    CHECK(e.m == 1);
    CHECK(e.n == 2);
    CHECK(validate_admissibility(e).empty());
    const AffineParams f = functional_lift(p, 1.0, {0.5, -0.25});
    CHECK(f.dim() == 3);
    CHECK(validate_admissibility(f).empty());
}

TEST_CASE("weighted series: true martingale; heavier tail: strict local martingale") {
    const AffineParams p = load_spec(spec_path("weighted_series.json"));
    const MartingaleReport r = martingale_verdict(p, MartingaleForm::stochastic_exp(2));
    CHECK(r.positivity.is_holds());
    CHECK(r.local_mart.is_holds());
    CHECK(r.overall.is_holds());

    const AffineParams h = load_spec(spec_path("weighted_series_heavy.json"));
    const MartingaleReport rh = martingale_verdict(h, MartingaleForm::stochastic_exp(2));
    CHECK(rh.local_mart.is_holds());
    CHECK(rh.overall.is_fails());
    CHECK(to_json(rh)["verdict"] == "strict local martingale");
}

TEST_CASE("form descriptions") {
    CHECK(MartingaleForm::stochastic_exp(2).describe() == "stochastic_exp(2)");
    CHECK(MartingaleForm::ordinary_exp(1).describe() == "ordinary_exp(1)");
}

}
