#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"

#include "affmart/riccati.hpp"

using namespace affmart;

namespace {

AffineParams zeta_series() {
    AffineParams p = AffineParams::zero(1, 0);
    p.beta[1](0) = M_PI * M_PI / 6.0;
    p.kappa[1] = JumpMeasure::series({Expr::parse("n")}, Expr::parse("1/n^2"), {1.0, 2.0});
    return p;
}

AffineParams stable_half() {
    AffineParams p = AffineParams::zero(1, 0);
    p.beta[1](0) = 4.0;
    p.kappa[1] = JumpMeasure::density(Expr::parse("xi1^(-1.5)"), {{0.0, INFINITY}}, -1.5, -1.5);
    return p;
}

// Ornstein-Uhlenbeck on R: dX = (b - lam X) dt + sigma dW.
AffineParams ou(double b, double lam, double sigma) {
    AffineParams p = AffineParams::zero(0, 1);
    p.alpha[0](0, 0) = sigma * sigma;
    p.beta[0](0) = b;
    p.beta[1](0) = -lam;
    return p;
}

// Square-root diffusion on R_+: dX = (b - lam X) dt + sigma sqrt(X) dW.
AffineParams cir(double b, double lam, double sigma) {
    AffineParams p = AffineParams::zero(1, 0);
    p.alpha[1](0, 0) = sigma * sigma;
    p.beta[0](0) = b;
    p.beta[1](0) = -lam;
    return p;
}

// Li2(x) by its defining power series; |x| < 1.
double dilog(double x) {
    double s = 0.0, xk = x;
    for (int k = 1; k < 2000 && std::abs(xk) > 1e-20; ++k, xk *= x) s += xk / (double(k) * k);
    return s;
}

}  // namespace

TEST_SUITE("riccati") {

TEST_CASE("series R against the dilogarithm") {
    RContext ctx(zeta_series());
    for (double u : {-0.1, -0.5, -2.0}) {
        const double r = eval_R(ctx, 1, std::vector<double>{u});
        CHECK(std::abs(r - (dilog(std::exp(u)) - M_PI * M_PI / 6.0)) < 1e-9);
    }
    CHECK(eval_R(ctx, 0, std::vector<double>{-0.5}) == 0.0);
    const double d = derivative_R_fd(ctx, 1, std::vector<double>{-0.5}, 1, 1e-4);
    CHECK(std::abs(d + std::log1p(-std::exp(-0.5))) < 1e-7);
}

TEST_CASE("complex argument on the imaginary axis") {
    RContext ctx(zeta_series());
    const std::vector<cplx> u{cplx(0.0, 0.8)};
    // beta cancels the compensator: R = sum (e^{i 0.8 n} - 1) / n^2
    cplx direct = 0.0;
    const int N = 200000;
    for (int n = 1; n <= N; ++n) direct += (std::exp(cplx(0.0, 0.8 * n)) - 1.0) / (double(n) * n);
    // Tail of -1/n^2 beyond N; the oscillating tail is O(1/N^2).
    direct -= 1.0 / N - 0.5 / (double(N) * N);
    CHECK(std::abs(eval_R(ctx, 1, u) - direct) < 1e-8);
}

TEST_CASE("stable density R is -2 sqrt(pi) sqrt(-u)") {
    RContext ctx(stable_half());
    for (double u : {-1e-4, -0.3, -1.0, -5.0}) {
        const double r = eval_R(ctx, 1, std::vector<double>{u});
        CHECK(r == doctest::Approx(-2.0 * std::sqrt(M_PI) * std::sqrt(-u)).epsilon(1e-7));
    }
}

TEST_CASE("OU flow has a closed form") {
    const double b = 0.3, lam = 1.7, sig = 0.6;
    RContext ctx(ou(b, lam, sig));
    const std::vector<cplx> u{cplx(0.0, 1.1)};
    const double T = 2.0;
    const FlowResult f = solve_flow(ctx, std::span<const cplx>(u), T, 1e-10);
    const double e = std::exp(-lam * T);
    const cplx psi = u[0] * e;
    const cplx psi0 = b * u[0] * (1.0 - e) / lam + sig * sig * u[0] * u[0] * (1.0 - e * e) / (4.0 * lam);
    CHECK(std::abs(f.psi.back()[0] - psi) < 1e-8);
    CHECK(std::abs(f.psi0.back() - psi0) < 1e-8);
    CHECK(f.times.back() == T);
}

TEST_CASE("square-root diffusion flow has a closed form") {
    const double b = 0.5, lam = 0.8, sig = 1.3;
    RContext ctx(cir(b, lam, sig));
    const std::vector<double> u{-1.0};
    const FlowResult f = solve_flow(ctx, std::span<const double>(u), 1.5, 1e-11);
    for (std::size_t k = 0; k < f.times.size(); k += 10) {
        const double t = f.times[k];
        const double c = sig * sig / (2.0 * lam);
        const double psi = 1.0 / ((1.0 / u[0] - c) * std::exp(lam * t) + c);
        CHECK(std::abs(f.psi[k][0].real() - psi) < 1e-8);
    }
}

TEST_CASE("flow property on smooth and non-Lipschitz fields") {
    const std::vector<cplx> u{cplx(-1.0, 0.0)};
    RContext a(ou(0.3, 1.0, 0.5));
    const std::vector<cplx> v{cplx(0.0, 1.0)};
    CHECK(flow_property_check(a, v, 0.5, 0.5, 1e-9) < 50e-9);
    RContext b(zeta_series());
    CHECK(flow_property_check(b, u, 0.5, 0.5, 1e-9) < 50e-9);
}

TEST_CASE("minimal solutions") {
    RContext lin(cir(0.0, 0.7, 0.0));
    const MinimalSolution z = minimal_solution_zero(lin, 5.0);
    REQUIRE(z.converged());
    CHECK(z.sup_abs < 1e-6);

    RContext st(stable_half());
    const MinimalSolution m = minimal_solution_zero(st, 1.0);
    REQUIRE(m.converged());
    for (std::size_t k = 0; k < m.limit.times.size(); ++k) {
        const double t = m.limit.times[k];
        if (t < 0.1) continue;
        CHECK(m.limit.psi[k][0].real() == doctest::Approx(-M_PI * t * t).epsilon(1e-3));
    }
}

TEST_CASE("quasimonotonicity") {
    AffineParams p = AffineParams::zero(2, 0);
    p.beta[1] << -1.0, 0.4;
    p.beta[2] << 0.2, -0.5;
    p.alpha[1](0, 0) = 1.0;
    p.kappa[2] = JumpMeasure::finite(2, {{{0.5, 1.0}, 0.3}});
    RContext ctx(p);
    CHECK(check_quasimonotone(ctx, 500, 11).is_holds());

    // Negative cross-drift breaks it for a raw vector field.
    const VectorField bad = [](std::span<const double> x) { return std::vector<double>{-x[1], -x[0]}; };
    CHECK(check_quasimonotone(bad, 2, 200, 3).is_fails());
}

TEST_CASE("killing enters R_0") {
    AffineParams p = AffineParams::zero(1, 0);
    p.gamma[0] = 0.25;
    p.beta[1](0) = -1.0;
    RContext ctx(p);
    CHECK(eval_R(ctx, 0, std::vector<double>{-0.3}) == doctest::Approx(-0.25));
}

}
