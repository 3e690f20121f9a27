// Acceptance checks. Each criterion prints one PASS/FAIL line; the process
// exits non-zero when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "affmart/conservativeness.hpp"
#include "affmart/martingale.hpp"
#include "affmart/montecarlo.hpp"
#include "affmart/riccati.hpp"
#include "affmart/spec_io.hpp"

using namespace affmart;

namespace {

constexpr double kZeta2 = M_PI * M_PI / 6.0;

std::string spec(const std::string& name) { return std::string(AFFMART_SPEC_DIR) + "/" + name; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double clamp1(double x) { return std::max(-1.0, std::min(1.0, x)); }

struct CriterionResult {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

// ---------------------------------------------------------------- 1
CriterionResult criterion1() {
    CriterionResult o;
    const auto t0 = std::chrono::steady_clock::now();
    const AffineParams p = load_spec(spec("zeta_series.json"));
    o.require(validate_admissibility(p).empty(), "admissible");
    const Verdict mom = sufficient_moment_check(p);
    o.require(mom.is_fails(), "moment condition violated");
    const Verdict osg = osgood_check(p);
    o.require(osg.is_holds(), "Osgood integral divergent");
    ConservativenessOptions co;
    co.horizon = 10.0;
    const ConservativenessReport r = conservativeness_verdict(p, co);
    o.require(r.overall.is_holds(), "conservative");
    const double sup = r.minimal_solution ? r.minimal_solution->sup_abs : INFINITY;
    o.require(sup <= 1e-6, "sup_{t<=10} |psi_I(t,0)| <= 1e-6");
    const double secs = seconds_since(t0);
    o.require(secs < 10.0, "runtime < 10 s");
    o.detail << "moments " << to_string(mom.outcome) << ", Osgood " << to_string(osg.outcome) << ", verdict "
             << to_string(r.overall.outcome) << ", sup|psi_I| = " << sup << ", " << secs << " s";
    return o;
}

// ---------------------------------------------------------------- 2
CriterionResult criterion2() {
    CriterionResult o;
    RContext ctx(load_spec(spec("zeta_series.json")));
    const double u = -0.5;
    const double r = eval_R(ctx, 1, std::vector<double>{u});
    // Oracle: beta cancels the compensator, R(u) = sum (e^{un} - 1) / n^2.
    // Partial sum to N, tail of -1/n^2 in closed-form bounds, e^{un} tail below e^{uN}/N^2.
    const int N = 1000000;
    double s = 0.0;
    for (int n = N; n >= 1; --n) s += std::expm1(u * n) / (double(n) * n);
    const double tail_lo = -1.0 / N, tail_hi = -1.0 / (N + 1.0);
    const double oracle = s + 0.5 * (tail_lo + tail_hi);
    const double oracle_err = 0.5 * (tail_hi - tail_lo) + std::exp(u * N);
    o.require(std::abs(r - (-0.9074)) <= 5e-4, "R(-0.5) = -0.9074 +- 5e-4");
    o.require(std::abs(r - oracle) <= oracle_err + 1e-9, "R(-0.5) matches the partial-sum oracle");
    const double d = derivative_R_fd(ctx, 1, std::vector<double>{u}, 1, 1e-4);
    const double dref = -std::log(1.0 - std::exp(u));
    o.require(std::abs(d - 0.93275) <= 1e-4 && std::abs(d - dref) <= 1e-4, "R'(-0.5) = 0.93275 +- 1e-4");
    o.detail.precision(10);
    o.detail << "R(-0.5) = " << r << " (oracle " << oracle << " +- " << oracle_err << "), R'(-0.5) = " << d
             << " (-ln(1-e^-0.5) = " << dref << ")";
    return o;
}

// ---------------------------------------------------------------- 3
CriterionResult criterion3() {
    CriterionResult o;
    const auto t0 = std::chrono::steady_clock::now();
    const AffineParams p = load_spec(spec("stable_half.json"));
    RContext ctx(p);
    const Verdict osg = osgood_check(ctx);
    o.require(osg.is_fails(), "Osgood integral convergent");
    const MinimalSolution m = minimal_solution_zero(ctx, 1.0);
    o.require(m.converged(), "minimal solution converged");
    // Separation of variables: psi' = -2 sqrt(pi) sqrt(-psi), psi(0) = 0, leaving 0 at once.
    double worst = 0.0;
    for (std::size_t k = 0; k < m.limit.times.size(); ++k) {
        const double t = m.limit.times[k];
        if (t < 0.1 - 1e-12) continue;
        const double exact = -M_PI * t * t;
        worst = std::max(worst, std::abs(m.limit.psi[k][0].real() - exact) / std::abs(exact));
    }
    o.require(worst <= 1e-3, "relative error <= 1e-3 on [0.1, 1]");
    const std::vector<double> x{1.0};
    const double surv = survival_probability(p, x, 1.0);
    o.require(std::abs(surv - std::exp(-M_PI)) <= 1e-3, "survival = e^{-pi} +- 1e-3");
    const double secs = seconds_since(t0);
    o.require(secs < 10.0, "runtime < 10 s");
    o.detail << "Osgood " << to_string(osg.outcome) << ", max rel err vs -pi t^2 = " << worst << ", p_1(1,D) = " << surv
             << " (e^-pi = " << std::exp(-M_PI) << "), " << secs << " s";
    return o;
}

// ---------------------------------------------------------------- 4
CriterionResult criterion4() {
    CriterionResult o;
    const auto t0 = std::chrono::steady_clock::now();
    const AffineParams p = load_spec(spec("weighted_series.json"));
    const Verdict pos = positivity_check(p, 2);
    o.require(pos.is_holds(), "positivity");
    std::vector<DriftResidual> res;
    const Verdict lm = local_martingale_check(p, 2, 1e-8, &res);
    double worst_res = 0.0;
    for (const auto& r : res) worst_res = std::max(worst_res, std::abs(r.value));
    o.require(lm.is_holds() && worst_res <= 1e-8, "local martingale, drift residual <= 1e-8");
    const AffineParams s = star_transform(p, 2);
    double worst_w = 0.0;
    for (int n = 1; n <= 100; ++n) {
        const double w = s.kappa[1].series_weight(n);
        worst_w = std::max(worst_w, std::abs(w * n * n - 1.0));
    }
    o.require(worst_w <= 1e-12, "star weights 1/n^2 (rel err <= 1e-12)");
    const double b1 = s.beta[1](0);
    o.require(std::abs(b1 - kZeta2) <= 1e-8, "beta* first component = pi^2/6");
    const MartingaleReport mr = martingale_verdict(p, MartingaleForm::stochastic_exp(2));
    o.require(mr.overall.is_holds(), "true martingale");
    const double secs = seconds_since(t0);
    o.require(secs < 10.0, "runtime < 10 s");
    o.detail.precision(12);
    o.detail << "residual " << worst_res << ", star weight rel err " << worst_w << ", beta*_1^1 = " << b1
             << ", verdict " << to_json(mr)["verdict"].get<std::string>() << ", " << secs << " s";
    return o;
}

// Random admissible finite-atom model with the drift identity of component i
// built in. Atoms keep 1 + xi_i > 0.
struct RandomModel {
    AffineParams params;
    std::size_t i = 0;
};

RandomModel random_model(std::mt19937_64& rng, std::size_t m, std::size_t n) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<int> atoms_count(1, 4);
    const std::size_t d = m + n;
    RandomModel rm;
    rm.i = n > 0 ? m + 1 + static_cast<std::size_t>(U(rng) * double(n)) % n : 1 + static_cast<std::size_t>(U(rng) * double(m)) % m;
    const std::size_t i = rm.i;
    AffineParams p = AffineParams::zero(m, n);

    auto psd_on = [&](const std::vector<std::size_t>& idx) {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t a : idx)
            for (std::size_t b : idx) G(a, b) = U(rng) - 0.5;
        return Eigen::MatrixXd(0.6 * G * G.transpose());
    };
    std::vector<std::size_t> J;
    for (std::size_t k = m; k < d; ++k) J.push_back(k);

    for (std::size_t j = 0; j <= m; ++j) {
        std::vector<std::size_t> idx = J;
        if (j > 0) idx.insert(idx.begin(), j - 1);
        p.alpha[j] = psd_on(idx);
        std::vector<Atom> atoms;
        const int na = atoms_count(rng);
        for (int a = 0; a < na; ++a) {
            std::vector<double> xi(d);
            for (std::size_t k = 0; k < m; ++k) xi[k] = U(rng) < 0.3 ? 0.0 : 2.5 * U(rng);
            for (std::size_t k = m; k < d; ++k) xi[k] = -0.95 + 3.0 * U(rng);
            // For i in I the identity forces xi_i = 0 on kappa_j, j != i.
            if (i <= m && j != i) xi[i - 1] = 0.0;
            bool zero = true;
            for (double v : xi) zero = zero && v == 0.0;
            if (zero) continue;
            atoms.push_back({xi, 0.1 + U(rng)});
        }
        p.kappa[j] = JumpMeasure::finite(d, atoms);
        Eigen::VectorXd hint = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        for (const Atom& a : atoms)
            for (std::size_t k = 0; k < d; ++k) hint(static_cast<Eigen::Index>(k)) += a.weight * clamp1(a.point[k]);
        for (std::size_t k = 0; k < d; ++k) {
            const auto K = static_cast<Eigen::Index>(k);
            if (k < m && k + 1 != j)
                p.beta[j](K) = hint(K) + U(rng);  // cross drift stays inward
            else
                p.beta[j](K) = 2.0 * U(rng) - 1.0;
        }
        double gap = 0.0;
        for (const Atom& a : atoms) gap += a.weight * (a.point[i - 1] - clamp1(a.point[i - 1]));
        p.beta[j](static_cast<Eigen::Index>(i - 1)) = -gap;
    }
    for (std::size_t j = m + 1; j <= d; ++j)
        for (std::size_t k = m; k < d; ++k) p.beta[j](static_cast<Eigen::Index>(k)) = (k == i - 1) ? 0.0 : U(rng) - 0.5;
    rm.params = std::move(p);
    return rm;
}

// ---------------------------------------------------------------- 5
CriterionResult criterion5() {
    CriterionResult o;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int models = 0, attempts = 0, points = 0;
    double worst = 0.0;
    while (models < 50 && attempts < 500) {
        ++attempts;
        const std::size_t m = static_cast<std::size_t>(U(rng) * 3.0);
        const std::size_t n = (m == 0 ? 1 : 0) + static_cast<std::size_t>(U(rng) * 3.0);
        const RandomModel rm = random_model(rng, m, n);
        const AffineParams& p = rm.params;
        if (!validate_admissibility(p).empty()) continue;
        if (!positivity_check(p, rm.i).is_holds() || !local_martingale_check(p, rm.i).is_holds()) continue;
        const AffineParams s = star_transform(p, rm.i);
        RContext star(s, {1e-13, true});
        const std::size_t d = p.dim(), i = rm.i;
        for (int q = 0; q < 20; ++q) {
            std::vector<cplx> u(d);
            for (std::size_t k = 0; k < d; ++k) u[k] = {k < m ? -2.0 * U(rng) : 0.0, 4.0 * U(rng) - 2.0};
            for (std::size_t j = 0; j <= d; ++j) {
                // Generator of E(X^i) e^{<u,X>} divided by itself, coefficient of X^j:
                // (u + e_i) quadratic form minus the i-th diagonal, drift on u + e_i,
                // and the jump factor (1 + xi_i) e^{<u,xi>}.
                const Eigen::MatrixXd& a = p.alpha[j];
                std::vector<cplx> v = u;
                v[i - 1] += 1.0;
                cplx g = 0.0;
                for (std::size_t k = 0; k < d; ++k)
                    for (std::size_t l = 0; l < d; ++l)
                        g += 0.5 * v[k] * a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) * v[l];
                g -= 0.5 * a(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(i - 1));
                for (std::size_t k = 0; k < d; ++k) g += p.beta[j](static_cast<Eigen::Index>(k)) * v[k];
                if (!p.kappa[j].is_zero())
                    for (const Atom& at : p.kappa[j].finite_atoms().atoms) {
                        cplx ux = 0.0, vh = 0.0;
                        for (std::size_t k = 0; k < d; ++k) {
                            ux += u[k] * at.point[k];
                            vh += v[k] * clamp1(at.point[k]);
                        }
                        g += at.weight * ((1.0 + at.point[i - 1]) * std::exp(ux) - 1.0 - vh);
                    }
                const cplx r = eval_R(star, j, std::span<const cplx>(u));
                worst = std::max(worst, std::abs(r - g));
            }
            ++points;
        }
        ++models;
    }
    o.require(models == 50, "50 models generated");
    o.require(worst <= 1e-8, "max |R* - reweighted| <= 1e-8");
    o.detail << models << " models, " << points << " points, max |R* - reweighted generator| = " << worst;
    return o;
}

// ---------------------------------------------------------------- 6
CriterionResult criterion6() {
    CriterionResult o;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int models = 0, attempts = 0;
    long checks = 0, violations = 0;
    while (models < 100 && attempts < 1000) {
        ++attempts;
        const std::size_t m = 1 + static_cast<std::size_t>(U(rng) * 2.0);
        const std::size_t n = static_cast<std::size_t>(U(rng) * 2.0);
        RandomModel rm = random_model(rng, m, n);
        AffineParams p = rm.params;
        // Every fifth model gets a one-sided stable component, which explodes.
        if (models % 5 == 4) {
            p.kappa[1] = JumpMeasure::density(Expr::parse(std::to_string(0.2 + U(rng)) + "*xi1^(-1.5)"),
                                              std::vector<Interval>(1, {0.0, INFINITY}), -1.5, -1.5, 1e-10,
                                              [&] {
                                                  std::vector<Expr> e;
                                                  for (std::size_t k = 1; k < p.dim(); ++k) e.push_back(Expr::parse("0"));
                                                  return e;
                                              }());
            for (std::size_t k = 1; k < m; ++k) p.beta[1](static_cast<Eigen::Index>(k)) = std::abs(p.beta[1](static_cast<Eigen::Index>(k)));
        }
        if (!validate_admissibility(p).empty()) continue;
        RContext ctx(p);
        const double T = 1.0;
        FlowOptions fo;
        fo.points = 21;
        std::vector<double> u1(p.dim(), 0.0), u2(p.dim(), 0.0);
        for (std::size_t k = 0; k < m; ++k) {
            u2[k] = -2.0 * U(rng);
            u1[k] = u2[k] - 2.0 * U(rng);
        }
        try {
            const FlowResult f1 = solve_flow(ctx, std::span<const double>(u1), T, 1e-9, fo);
            const FlowResult f2 = solve_flow(ctx, std::span<const double>(u2), T, 1e-9, fo);
            for (std::size_t t = 0; t < f1.times.size(); ++t)
                for (std::size_t k = 0; k < m; ++k) {
                    ++checks;
                    if (f1.psi[t][k].real() > f2.psi[t][k].real() + 1e-6) ++violations;
                }
            MinimalSolutionOptions mo;
            mo.points = 21;
            const MinimalSolution ms = minimal_solution_zero(ctx, T, mo);
            if (!ms.converged()) {
                o.require(false, "minimal solution converged");
                continue;
            }
            // Solutions from zero: the solver's own trajectory and delayed copies of the minimal one.
            const std::vector<double> zero(p.dim(), 0.0);
            const FlowResult fz = solve_flow(ctx, std::span<const double>(zero), T, 1e-9, fo);
            const std::size_t G = ms.limit.times.size();
            for (std::size_t t = 0; t < G; ++t)
                for (std::size_t k = 0; k < m; ++k) {
                    const double mn = ms.limit.psi[t][k].real();
                    checks += 2;
                    if (fz.psi[t][k].real() < mn - 1e-6) ++violations;
                    if (t >= 5 && ms.limit.psi[t - 5][k].real() < mn - 1e-6) ++violations;
                }
            // Starts just below zero stay below the minimal solution.
            std::vector<double> eps(p.dim(), 0.0);
            for (std::size_t k = 0; k < m; ++k) eps[k] = -1e-3 * U(rng);
            const FlowResult fe = solve_flow(ctx, std::span<const double>(eps), T, 1e-9, fo);
            for (std::size_t t = 0; t < G; ++t)
                for (std::size_t k = 0; k < m; ++k) {
                    ++checks;
                    if (fe.psi[t][k].real() > ms.limit.psi[t][k].real() + 1e-6) ++violations;
                }
        } catch (const std::exception& e) {
            o.require(false, std::string("solver error: ") + e.what());
            continue;
        }
        ++models;
    }
    o.require(models == 100, "100 models");
    o.require(violations == 0, "zero violations");
    o.detail << models << " models, " << checks << " comparisons, " << violations << " violations";
    return o;
}

AffineParams truncated_weighted_series() { return truncate_model(load_spec(spec("weighted_series.json")), 50); }

// ---------------------------------------------------------------- 7
CriterionResult criterion7() {
    CriterionResult o;
    const auto t0 = std::chrono::steady_clock::now();
    const AffineParams p = truncated_weighted_series();
    SimConfig c;
    c.x0 = {1.0, 0.0};
    c.T = 1.0;
    c.steps_per_unit = 1000;
    c.paths = 200000;
    c.seed = 20240601;
    const SampleStats s = estimate_stoch_exp_mean(p, 2, c);
    const double z = (s.mean - 1.0) / s.std_error;
    o.require(std::abs(z) <= 3.0, "mean of E(X^2)_T within 3 stderr of 1");
    AffineParams neg = p;
    neg.beta[1](1) += 0.1;
    const SampleStats sn = estimate_stoch_exp_mean(neg, 2, c);
    const double zn = (sn.mean - 1.0) / sn.std_error;
    o.require(std::abs(zn) > 3.0, "negative control outside 3 stderr");
    const double secs = seconds_since(t0);
    o.require(secs < 60.0, "runtime < 60 s");
    o.detail << "mean " << s.mean << " +- " << s.std_error << " (z " << z << ", median of means " << s.median_of_means
             << "); control mean " << sn.mean << " +- " << sn.std_error << " (z " << zn << "), " << secs << " s";
    if (!o.pass)
        o.detail << "; note: E(X^2)_T has finite moments only up to order ~1.004 in this model, see README";
    return o;
}

// ---------------------------------------------------------------- 8
CriterionResult criterion8() {
    CriterionResult o;
    const auto t0 = std::chrono::steady_clock::now();
    const AffineParams p = truncated_weighted_series();
    SimConfig c;
    c.x0 = {1.0, 0.0};
    c.T = 0.5;
    c.steps_per_unit = 1000;
    c.paths = 200000;
    c.seed = 20240602;
    std::vector<std::vector<std::complex<double>>> grid;
    for (double a : {-2.0, 0.0, 2.0})
        for (double b : {-2.0, 0.0, 2.0}) grid.push_back({{0.0, a}, {0.0, b}});
    const CFCheck r = empirical_cf_check(p, c, grid);
    o.require(r.points.size() == 9, "9 grid points");
    o.require(r.max_z <= 3.0, "every |phi_emp - phi_model| within 3 stderr");
    const double secs = seconds_since(t0);
    o.require(secs < 60.0, "runtime < 60 s");
    o.detail << "max |diff| " << r.max_abs_diff << ", max z " << r.max_z << ", " << secs << " s";
    return o;
}

// ---------------------------------------------------------------- 9
CriterionResult criterion9() {
    CriterionResult o;
    const double tol = 1e-9;
    struct Case {
        const char* file;
        std::vector<cplx> u;
    };
    const std::vector<Case> cases{{"zeta_series.json", {cplx(-1.0)}},
                                  {"stable_half.json", {cplx(-1.0)}},
                                  {"weighted_series.json", {cplx(-1.0), cplx(0.0, 0.5)}}};
    for (const Case& c : cases) {
        RContext ctx(load_spec(spec(c.file)));
        const double e = flow_property_check(ctx, c.u, 0.5, 0.5, tol);
        o.require(e <= 50.0 * tol, std::string(c.file) + " flow defect <= 50 tol");
        o.detail << c.file << ": " << e << "  ";
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> selected;
    app.add_option("--criterion", selected, "Criteria to run (default all)")->check(CLI::Range(1, 9));
    CLI11_PARSE(app, argc, argv);
    if (selected.empty())
        for (int k = 1; k <= 9; ++k) selected.push_back(k);

    const std::vector<std::function<CriterionResult()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};
    bool all = true;
    for (int k : selected) {
        CriterionResult r;
        try {
            r = criteria[static_cast<std::size_t>(k - 1)]();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail << "exception: " << e.what();
        }
        std::cout << "criterion " << k << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.detail.str() << std::endl;
        all = all && r.pass;
    }
    return all ? 0 : 1;
}
