#include "affmart/params.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace affmart {

namespace {

std::string idx(int v) { return std::to_string(v); }

Violation make(std::string rule, int j, int k, int l, double q, std::string msg,
               bool inconclusive = false) {
    Violation v;
    v.rule = std::move(rule);
    v.j = j;
    v.k = k;
    v.l = l;
    v.quantity = q;
    v.inconclusive = inconclusive;
    v.message = std::move(msg);
    return v;
}

// Support of kappa_j must lie in D \ {0}.
void check_support(const JumpMeasure& mu, std::size_t m, int j, std::vector<Violation>& out) {
    auto bad_point = [&](std::span<const double> p) {
        bool nonzero = false;
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (k < m && p[k] < 0.0) return true;
            if (p[k] != 0.0) nonzero = true;
        }
        return !nonzero;
    };
    auto report = [&](const std::string& where) {
        out.push_back(make("kappa.support", j, -1, -1, 0.0,
                           "kappa_" + idx(j) + " charges a point outside D\\{0} (" + where + ")"));
    };
    switch (mu.kind()) {
        case JumpMeasure::Kind::FiniteAtomic: {
            const auto& atoms = mu.finite_atoms().atoms;
            for (std::size_t a = 0; a < atoms.size(); ++a)
                if (bad_point(atoms[a].point)) {
                    report("atom " + std::to_string(a));
                    return;
                }
            return;
        }
        case JumpMeasure::Kind::SeriesAtomic: {
            auto probe = [&](double nn) {
                const auto p = mu.series_point(nn);
                if (bad_point(p)) {
                    report("series atom n=" + std::to_string(static_cast<long long>(nn)));
                    return false;
                }
                return true;
            };
            for (int nn = 1; nn <= 1000; ++nn)
                if (!probe(nn)) return;
            for (int e = 10; e <= 40; ++e)
                if (!probe(std::ldexp(1.0, e))) return;
            return;
        }
        case JumpMeasure::Kind::Density: {
            const auto& dm = mu.density_measure();
            const std::size_t base = dm.domain.size();
            for (std::size_t k = 0; k < std::min(m, base); ++k)
                if (dm.domain[k].lo < 0.0) {
                    report("domain of coordinate " + std::to_string(k + 1) + " extends below 0");
                    return;
                }
            // Derived coordinates are probed on the free axis.
            if (base < mu.dim() && m > base) {
                const Interval iv = dm.domain[dm.free_coordinate()];
                std::vector<double> b, full;
                for (int e = -30; e <= 30; ++e)
                    for (double s : {1.0, -1.0}) {
                        const double x = s * std::ldexp(1.0, e);
                        if (x <= iv.lo || x >= iv.hi) continue;
                        mu.density_point(x, b, full);
                        if (bad_point(full)) {
                            report("derived coordinate at x=" + std::to_string(x));
                            return;
                        }
                    }
            }
            return;
        }
    }
}

void check_integral(const JumpMeasure& mu, const MomentKind& kind, const std::string& rule, int j,
                    int k, const std::string& what, double tol, std::vector<Violation>& out,
                    IntegralResult* result = nullptr) {
    IntegrationOptions io;
    io.tol = tol;
    IntegralResult r = integrate(mu, kind.integrand(), io);
    if (result) *result = r;
    if (r.status == IntegralResult::Status::Divergent)
        out.push_back(make(rule, j, k, -1, std::numeric_limits<double>::infinity(),
                           what + " diverges (" + r.note + ")"));
    else if (r.status == IntegralResult::Status::Inconclusive)
        out.push_back(make(rule, j, k, -1, r.value, what + " undecided: " + r.note, true));
}

}  // namespace

AffineParams AffineParams::zero(std::size_t m, std::size_t n) {
    AffineParams p;
    p.m = m;
    p.n = n;
    const std::size_t d = m + n;
    for (std::size_t j = 0; j <= d; ++j) {
        p.alpha.push_back(Eigen::MatrixXd::Zero(d, d));
        p.beta.push_back(Eigen::VectorXd::Zero(d));
        p.gamma.push_back(0.0);
        p.kappa.push_back(JumpMeasure::zero(d));
    }
    return p;
}

Eigen::VectorXd truncation_h(const Eigen::VectorXd& xi) {
    return xi.unaryExpr([](double x) { return std::max(-1.0, std::min(1.0, x)); });
}

void check_dimensions(const AffineParams& p) {
    const std::size_t d = p.dim();
    if (d == 0) throw std::invalid_argument("m + n must be at least 1");
    auto need = [&](std::size_t got, const char* field) {
        if (got != d + 1)
            throw std::invalid_argument(std::string(field) + " must have d+1 = " +
                                        std::to_string(d + 1) + " entries, got " +
                                        std::to_string(got));
    };
    need(p.alpha.size(), "alpha");
    need(p.beta.size(), "beta");
    need(p.gamma.size(), "gamma");
    need(p.kappa.size(), "kappa");
    for (std::size_t j = 0; j <= d; ++j) {
        if (p.alpha[j].rows() != static_cast<Eigen::Index>(d) ||
            p.alpha[j].cols() != static_cast<Eigen::Index>(d))
            throw std::invalid_argument("alpha[" + std::to_string(j) + "] must be " +
                                        std::to_string(d) + "x" + std::to_string(d));
        if (p.beta[j].size() != static_cast<Eigen::Index>(d))
            throw std::invalid_argument("beta[" + std::to_string(j) + "] must have length " +
                                        std::to_string(d));
        if (p.kappa[j].dim() != d)
            throw std::invalid_argument("kappa[" + std::to_string(j) + "] has dimension " +
                                        std::to_string(p.kappa[j].dim()) + ", expected " +
                                        std::to_string(d));
    }
}

std::vector<Violation> validate_admissibility(const AffineParams& p,
                                              const AdmissibilityOptions& opts) {
    check_dimensions(p);
    std::vector<Violation> out;
    const int d = static_cast<int>(p.dim());
    const int m = static_cast<int>(p.m);

    for (int j = 0; j <= d; ++j) {
        const Eigen::MatrixXd& a = p.alpha[j];
        const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
        if (asym > opts.psd_tol * std::max(1.0, a.cwiseAbs().maxCoeff()))
            out.push_back(make("alpha.symmetric", j, -1, -1, asym,
                               "alpha_" + idx(j) + " is not symmetric"));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()),
                                                          Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues().minCoeff();
        if (lmin < -opts.psd_tol * std::max(1.0, a.cwiseAbs().maxCoeff()))
            out.push_back(make("alpha.psd", j, -1, -1, lmin,
                               "alpha_" + idx(j) + " has negative eigenvalue " +
                                   std::to_string(lmin)));

        if (j > m) {
            if (a.cwiseAbs().maxCoeff() != 0.0)
                out.push_back(make("alpha.zero_above_m", j, -1, -1, a.cwiseAbs().maxCoeff(),
                                   "alpha_" + idx(j) + " must vanish for j > m"));
        } else {
            for (int k = 1; k <= m; ++k)
                for (int l = k; l <= m; ++l) {
                    if (k == j && l == j) continue;
                    const double v = a(k - 1, l - 1);
                    if (v != 0.0)
                        out.push_back(make("alpha.block", j, k, l, v,
                                           "alpha_" + idx(j) + "^{" + idx(k) + idx(l) +
                                               "} must be 0"));
                }
        }

        const double g = p.gamma[j];
        if (!(g >= 0.0))
            out.push_back(make("gamma.nonnegative", j, -1, -1, g,
                               "gamma_" + idx(j) + " = " + std::to_string(g) + " is negative"));
        else if (j > m && g != 0.0)
            out.push_back(make("gamma.zero_above_m", j, -1, -1, g,
                               "gamma_" + idx(j) + " must vanish for j > m"));

        const JumpMeasure& mu = p.kappa[j];
        if (j > m) {
            if (!mu.is_zero())
                out.push_back(make("kappa.zero_above_m", j, -1, -1, 0.0,
                                   "kappa_" + idx(j) + " must vanish for j > m"));
            for (int k = 1; k <= m; ++k)
                if (p.beta[j](k - 1) != 0.0)
                    out.push_back(make("beta.zero_above_m", j, k, -1, p.beta[j](k - 1),
                                       "beta_" + idx(j) + "^" + idx(k) + " must vanish for j > m"));
            continue;
        }

        if (mu.is_zero()) {
            for (int k = 1; k <= m; ++k)
                if (k != j && p.beta[j](k - 1) < -opts.drift_slack)
                    out.push_back(make("beta.cross_drift", j, k, -1, p.beta[j](k - 1),
                                       "beta_" + idx(j) + "^" + idx(k) + " - int h_" + idx(k) +
                                           " dkappa_" + idx(j) + " is negative"));
            continue;
        }

        check_support(mu, p.m, j, out);
        check_integral(mu, MomentKind::h_square(), "kappa.h_square", j, -1,
                       "int |h|^2 dkappa_" + idx(j), opts.tol, out);
        for (int k = 1; k <= m; ++k) {
            if (k == j) continue;
            check_integral(mu, MomentKind::h_abs(k), "kappa.h_abs", j, k,
                           "int |h_" + idx(k) + "| dkappa_" + idx(j), opts.tol, out);
            IntegrationOptions io;
            io.tol = opts.tol;
            const std::size_t kk = static_cast<std::size_t>(k - 1);
            const IntegralResult r = integrate(
                mu, [kk](std::span<const double> xi) { return std::max(-1.0, std::min(1.0, xi[kk])); },
                io);
            if (r.status != IntegralResult::Status::Finite) continue;
            const double gap = p.beta[j](k - 1) - r.value;
            if (gap < -opts.drift_slack - r.error_bound)
                out.push_back(make("beta.cross_drift", j, k, -1, gap,
                                   "beta_" + idx(j) + "^" + idx(k) + " - int h_" + idx(k) +
                                       " dkappa_" + idx(j) + " = " + std::to_string(gap) +
                                       " is negative"));
        }
    }
    return out;
}

}  // namespace affmart
