#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "affmart/martingale.hpp"
#include "affmart/montecarlo.hpp"
#include "affmart/spec_io.hpp"

using namespace affmart;

namespace {

std::string spec_path(const std::string& name) { return std::string(AFFMART_SPEC_DIR) + "/" + name; }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double stderr_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1) / double(v.size()));
}

// Square-root diffusion with state-dependent jumps of size 0.5 at rate 2 X.
AffineParams cir_jumps() {
    AffineParams p = AffineParams::zero(1, 0);
    p.alpha[1](0, 0) = 0.3;
    p.beta[0](0) = 0.5;
    p.beta[1](0) = -1.0;
    p.kappa[1] = JumpMeasure::finite(1, {{{0.5}, 2.0}});
    return p;
}

}  // namespace

TEST_SUITE("montecarlo") {

TEST_CASE("deterministic limit follows the linear flow") {
    AffineParams p = AffineParams::zero(0, 2);
    p.beta[1] << -0.5, -1.0;
    p.beta[2] << 1.0, -0.5;
    SimConfig c;
    c.x0 = {1.0, 0.0};
    c.T = 2.0;
    c.paths = 3;
    c.steps_per_unit = 2000;
    const PathEnsemble e = simulate_paths(p, c);
    const double T = c.T, d = std::exp(-0.5 * T);
    for (const auto& x : e.terminal) {
        CHECK(x[0] == doctest::Approx(d * std::cos(T)).epsilon(2e-3));
        CHECK(x[1] == doctest::Approx(-d * std::sin(T)).epsilon(2e-3));
    }
}

TEST_CASE("Poisson counts") {
    AffineParams p = AffineParams::zero(0, 1);
    p.kappa[0] = JumpMeasure::finite(1, {{{1.0}, 3.0}});
    p.beta[0](0) = 3.0;  // cancels the compensator so X_T counts jumps
    SimConfig c;
    c.x0 = {0.0};
    c.T = 1.5;
    c.paths = 20000;
    c.steps_per_unit = 50;
    const PathEnsemble e = simulate_paths(p, c);
    std::vector<double> n(e.jump_counts.begin(), e.jump_counts.end());
    CHECK(std::abs(mean_of(n) - 4.5) < 3.0 * stderr_of(n));
    for (std::size_t k = 0; k < 50; ++k) CHECK(e.terminal[k][0] == doctest::Approx(double(e.jump_counts[k])));
}

TEST_CASE("thinning matches the moment ODE") {
    const AffineParams p = cir_jumps();
    SimConfig c;
    c.x0 = {2.0};
    c.T = 1.0;
    c.paths = 20000;
    c.steps_per_unit = 500;
    const PathEnsemble e = simulate_paths(p, c);
    // E[X_t] = 0.5 + 1.5 e^{-t}; expected count = 2 int_0^1 E[X_s] ds.
    const double expected = 2.0 * (0.5 + 1.5 * (1.0 - std::exp(-1.0)));
    std::vector<double> n(e.jump_counts.begin(), e.jump_counts.end());
    CHECK(std::abs(mean_of(n) - expected) < 3.0 * stderr_of(n));
    CHECK(std::abs(e.mean[0] - (0.5 + 1.5 * std::exp(-1.0))) < 3.0 * e.std_error[0] + 1e-3);
    for (const auto& x : e.terminal) CHECK(x[0] >= 0.0);
    CHECK_FALSE(e.clip_warning);
}

TEST_CASE("time integrals") {
    AffineParams p = AffineParams::zero(0, 1);
    p.beta[0](0) = 2.0;
    SimConfig c;
    c.x0 = {1.0};
    c.T = 3.0;
    c.paths = 2;
    c.steps_per_unit = 100;
    const PathEnsemble e = simulate_paths(p, c);
    // X_s = 1 + 2 s
    CHECK(e.integrated[0][0] == doctest::Approx(3.0 + 9.0).epsilon(1e-12));
}

TEST_CASE("results do not depend on the thread count") {
    SimConfig c;
    c.x0 = {1.0};
    c.paths = 1001;
    c.steps_per_unit = 100;
    c.seed = 99;
    c.threads = 1;
    const PathEnsemble a = simulate_paths(cir_jumps(), c);
    c.threads = 4;
    const PathEnsemble b = simulate_paths(cir_jumps(), c);
    CHECK(a.terminal == b.terminal);
    CHECK(a.mean == b.mean);
    CHECK(a.std_error == b.std_error);
    c.seed = 100;
    const PathEnsemble d = simulate_paths(cir_jumps(), c);
    CHECK(a.mean != d.mean);
}

TEST_CASE("continuous stochastic exponential has mean one") {
    AffineParams p = AffineParams::zero(0, 1);
    p.alpha[0](0, 0) = 0.8;
    SimConfig c;
    c.x0 = {0.0};
    c.paths = 40000;
    c.steps_per_unit = 100;
    const SampleStats s = estimate_stoch_exp_mean(p, 1, c);
    CHECK(std::abs(s.mean - 1.0) < 3.0 * s.std_error);
    CHECK(s.count == 40000);
}

TEST_CASE("bounded jumps: mean one, and a drift shift moves it") {
    AffineParams p = AffineParams::zero(1, 1);
    p.beta[1] << -0.5, 0.0;
    p.beta[0] << 1.0, 0.0;
    p.kappa[1] = JumpMeasure::finite(2, {{{0.3, -0.5}, 1.0}, {{0.0, 2.0}, 0.5}});
    // drift identity for X^2: beta_1^2 = -int (xi_2 - h_2) dkappa_1 = -0.5
    p.beta[1](1) = -0.5;
    REQUIRE(local_martingale_check(p, 2).is_holds());
    SimConfig c;
    c.x0 = {1.0, 0.0};
    c.paths = 40000;
    c.steps_per_unit = 200;
    const SampleStats s = estimate_stoch_exp_mean(p, 2, c);
    CHECK(std::abs(s.mean - 1.0) < 3.0 * s.std_error);
    p.beta[1](1) += 0.3;
    const SampleStats t = estimate_stoch_exp_mean(p, 2, c);
    CHECK(t.mean - 1.0 > 3.0 * t.std_error);
}

TEST_CASE("halving the step keeps the estimate") {
    AffineParams p = AffineParams::zero(1, 1);
    p.alpha[1] << 0.2, 0.0, 0.0, 0.5;
    p.beta[0] << 0.3, 0.0;
    p.beta[1] << -0.6, 0.0;
    SimConfig c;
    c.x0 = {1.0, 0.0};
    c.paths = 20000;
    c.steps_per_unit = 100;
    const SampleStats a = estimate_stoch_exp_mean(p, 2, c);
    c.steps_per_unit = 200;
    const SampleStats b = estimate_stoch_exp_mean(p, 2, c);
    CHECK(std::abs(a.mean - b.mean) < std::max(a.std_error, b.std_error) * 2.0);
}

TEST_CASE("preconditions") {
    AffineParams stable = AffineParams::zero(1, 0);
    stable.beta[1](0) = 4.0;
    stable.kappa[1] = JumpMeasure::density(Expr::parse("xi1^(-1.5)"), {{0.0, INFINITY}}, -1.5, -1.5);
    SimConfig c;
    c.x0 = {1.0};
    c.paths = 10;
    try {
        simulate_paths(stable, c);
        FAIL("no throw");
    } catch (const SimulationError& e) {
        CHECK(std::string(e.what()).find("kappa_1") != std::string::npos);
    }
    AffineParams killed = cir_jumps();
    killed.gamma[0] = 0.1;
    CHECK_THROWS_AS(simulate_paths(killed, c), SimulationError);

    AffineParams neg = AffineParams::zero(0, 1);
    neg.kappa[0] = JumpMeasure::finite(1, {{{-1.5}, 1.0}});
    neg.beta[0](0) = 1.0;
    c.x0 = {0.0};
    CHECK_THROWS_AS(estimate_stoch_exp_mean(neg, 1, c), SimulationError);
    c.x0 = {};
    CHECK_THROWS_AS(simulate_paths(cir_jumps(), c), std::invalid_argument);
}

TEST_CASE("density marks") {
    AffineParams p = AffineParams::zero(0, 1);
    // Uniform jumps on (0, 2) at rate 2.
    p.kappa[0] = JumpMeasure::density(Expr::parse("1"), {{0.0, 2.0}}, 0.0, 0.0);
    p.beta[0](0) = 1.5;  // int h = int_0^1 x dx + int_1^2 1 dx
    SimConfig c;
    c.x0 = {0.0};
    c.paths = 20000;
    c.steps_per_unit = 20;
    const PathEnsemble e = simulate_paths(p, c);
    // X_1 = sum of marks: mean 2 * 1.
    CHECK(std::abs(e.mean[0] - 2.0) < 3.0 * e.std_error[0]);
}

TEST_CASE("characteristic function: Gaussian case") {
    AffineParams p = AffineParams::zero(0, 1);
    p.alpha[0](0, 0) = 1.0;
    p.beta[0](0) = 0.2;
    p.beta[1](0) = -1.0;
    SimConfig c;
    c.x0 = {0.5};
    c.paths = 20000;
    c.steps_per_unit = 200;
    std::vector<std::vector<std::complex<double>>> grid;
    for (double a : {-2.0, -1.0, 0.0, 1.0, 2.0}) grid.push_back({{0.0, a}});
    const CFCheck r = empirical_cf_check(p, c, grid);
    CHECK(r.max_z < 3.0);
    CHECK(r.points[2].empirical == std::complex<double>(1.0, 0.0));
    CHECK(std::abs(r.points[2].model - 1.0) < 1e-9);
}

TEST_CASE("no explosions in a conservative model") {
    SimConfig c;
    c.x0 = {1.0};
    c.paths = 2000;
    c.steps_per_unit = 100;
    const ExplosionEstimate e = detect_explosion(cir_jumps(), c, 1e6);
    CHECK(e.exploded == 0);
    CHECK(e.frequency == 0.0);
}

TEST_CASE("truncation re-solves the drift identity") {
    const AffineParams p = load_spec(spec_path("weighted_series.json"));
    std::vector<std::size_t> resolved;
    const AffineParams t = truncate_model(p, 50, &resolved);
    CHECK(resolved == std::vector<std::size_t>{2});
    REQUIRE(t.kappa[1].kind() == JumpMeasure::Kind::FiniteAtomic);
    CHECK(t.kappa[1].finite_atoms().atoms.size() == 50);
    double gap = 0.0;
    for (int n = 1; n <= 50; ++n) gap += (n - 1.0) / ((1.0 + n) * n * n);
    CHECK(t.beta[1](1) == doctest::Approx(-gap).epsilon(1e-14));
    CHECK(t.beta[1](0) == p.beta[1](0));
    std::vector<DriftResidual> res;
    CHECK(local_martingale_check(t, 2, 1e-12, &res).is_holds());
}

TEST_CASE("jump log") {
    SimConfig c;
    c.x0 = {1.0};
    c.paths = 20;
    c.steps_per_unit = 100;
    c.record_jumps = true;
    const PathEnsemble e = simulate_paths(cir_jumps(), c);
    const std::size_t total = std::accumulate(e.jump_counts.begin(), e.jump_counts.end(), std::size_t{0});
    CHECK(e.jumps.size() == total);
    for (const auto& j : e.jumps) {
        CHECK(j.time >= 0.0);
        CHECK(j.time <= 1.0);
        CHECK(j.mark == std::vector<double>{0.5});
    }
    const nlohmann::json js = to_json(e);
    CHECK(js["paths"] == 20);
}

}
