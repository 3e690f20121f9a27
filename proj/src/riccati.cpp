#include "affmart/riccati.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "numerics.hpp"

namespace affmart {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
// Series atoms summed explicitly before the Euler-Maclaurin tail.
constexpr std::size_t kCachedAtoms = 64;
constexpr double kMinJumpTol = 1e-13;

double h1(double x) { return std::max(-1.0, std::min(1.0, x)); }

// e^z - 1 - z without cancellation.
template <class T>
T phi(T z) {
    if (std::abs(z) < 0.5) {
        T term = z * z / 2.0;
        T sum = term;
        for (int k = 3; k < 24; ++k) {
            term *= z / static_cast<double>(k);
            sum += term;
            if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
        }
        return sum;
    }
    return detail::expm1_safe(z) - z;
}

template <class T>
double sup_norm(std::span<const T> u) {
    double s = 0.0;
    for (const T& v : u) s = std::max(s, std::abs(v));
    return s;
}

// Integrand e^{<u,xi>} - 1 - <u,h(xi)>. Small |z| uses phi(z) + <u, xi - h(xi)>;
// large |z| uses expm1(z) - <u,h(xi)> so neither branch cancels.
template <class T>
T levy_integrand(std::span<const T> u, std::span<const double> xi) {
    T z{};
    for (std::size_t k = 0; k < u.size(); ++k) z += u[k] * xi[k];
    T corr{};
    if (std::abs(z) < 0.5) {
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double g = xi[k] - h1(xi[k]);
            if (g != 0.0) corr += u[k] * g;
        }
        return phi(z) + corr;
    }
    for (std::size_t k = 0; k < u.size(); ++k) corr += u[k] * h1(xi[k]);
    return detail::expm1_safe(z) - corr;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

}  // namespace

namespace detail {

class JumpIntegrator {
public:
    virtual ~JumpIntegrator() = default;
    virtual cplx eval(std::span<const cplx> u, double rel_tol) const = 0;
    virtual double eval_real(std::span<const double> u, double rel_tol) const = 0;
};

namespace {

class ZeroJumps final : public JumpIntegrator {
public:
    cplx eval(std::span<const cplx>, double) const override { return 0.0; }
    double eval_real(std::span<const double>, double) const override { return 0.0; }
};

class AtomJumps final : public JumpIntegrator {
public:
    explicit AtomJumps(const FiniteAtoms& atoms) : atoms_(atoms.atoms) {}

    cplx eval(std::span<const cplx> u, double) const override { return sum<cplx>(u); }
    double eval_real(std::span<const double> u, double) const override { return sum<double>(u); }

private:
    template <class T>
    T sum(std::span<const T> u) const {
        CompensatedSum<T> acc;
        for (const Atom& a : atoms_) acc.add(a.weight * levy_integrand<T>(u, a.point));
        return acc.value();
    }

    std::vector<Atom> atoms_;
};

class SeriesJumps final : public JumpIntegrator {
public:
    explicit SeriesJumps(const JumpMeasure& mu) : mu_(mu) {
        for (std::size_t n = 1; n <= kCachedAtoms; ++n) {
            Atom a;
            a.point = mu.series_point(static_cast<double>(n));
            a.weight = mu.series_weight(static_cast<double>(n));
            cache_.push_back(std::move(a));
        }
    }

    cplx eval(std::span<const cplx> u, double rel_tol) const override {
        bool real = true;
        for (const cplx& v : u)
            if (v.imag() != 0.0) real = false;
        if (real) return sum<cplx>(u, rel_tol, false);
        // The tail integral of an oscillating term defeats the quadrature inside
        // Euler-Maclaurin, so the oscillating part is summed on its own.
        if (auto v = split_sum(u, rel_tol)) return *v;
        return sum<cplx>(u, rel_tol, true);
    }
    double eval_real(std::span<const double> u, double rel_tol) const override {
        return sum<double>(u, rel_tol, false);
    }

private:
    template <class T>
    T sum(std::span<const T> u, double rel_tol, bool verify) const {
        if (sup_norm(u) == 0.0) return T{};
        std::vector<double> p(u.size()), q(u.size());
        std::function<T(std::size_t)> direct = [&](std::size_t n) -> T {
            if (n <= cache_.size()) {
                const Atom& a = cache_[n - 1];
                return a.weight * levy_integrand<T>(u, a.point);
            }
            return term(u, static_cast<double>(n), p);
        };
        std::function<T(double)> smooth = [&](double x) { return term(u, x, q); };
        SeriesSumOptions so;
        so.abs_tol = std::max(rel_tol * sup_norm(u) * 1e-2, 1e-300);
        so.rel_tol = rel_tol;
        so.start_terms = kCachedAtoms;
        so.verify = verify;
        auto s = sum_series<T>(direct, smooth, so);
        if (!s.ok && !verify) {
            so.verify = true;
            s = sum_series<T>(direct, smooth, so);
        }
        if (!s.ok)
            throw RiccatiError("series jump integral did not converge (error " + fmt(s.error) +
                               " after " + std::to_string(s.terms) + " terms)");
        return s.value;
    }

    // Head summed directly; beyond it w_n e^{<u,xi_n>} goes through a Levin
    // u-transform checked at two orders and two offsets, and the smooth
    // remainder -w_n (1 + <u,h(xi_n)>) through Euler-Maclaurin.
    std::optional<cplx> split_sum(std::span<const cplx> u, double rel_tol) const {
        std::vector<double> pt(u.size());
        auto osc = [&](std::size_t n) {
            const double w = mu_.series_weight(static_cast<double>(n));
            if (w == 0.0) return cplx{};
            fill_point(static_cast<double>(n), pt);
            cplx z{};
            for (std::size_t k = 0; k < u.size(); ++k) z += u[k] * pt[k];
            return w * std::exp(z);
        };
        const double abs_tol = std::max(rel_tol * sup_norm(u) * 1e-2, 1e-300);
        for (std::size_t head : {std::size_t{64}, std::size_t{512}, std::size_t{4096}}) {
            CompensatedSum<cplx> partial;
            std::vector<double> hp(u.size());
            for (std::size_t n = 1; n <= head; ++n) {
                if (n <= cache_.size()) {
                    const Atom& a = cache_[n - 1];
                    partial.add(a.weight * levy_integrand<cplx>(u, a.point));
                } else {
                    partial.add(term(u, static_cast<double>(n), hp));
                }
            }
            std::vector<cplx> c(40);
            for (std::size_t m = 0; m < c.size(); ++m) c[m] = osc(head + 1 + m);
            const cplx a = levin_tail(c, 0, 12), b = levin_tail(c, 0, 18);
            // Shifted start: sum the skipped terms and accelerate the rest.
            cplx skipped{};
            for (std::size_t m = 0; m < 8; ++m) skipped += c[m];
            const cplx s = skipped + levin_tail(c, 8, 18);
            if (!std::isfinite(b.real()) || !std::isfinite(b.imag())) continue;
            const double osc_err = std::max(std::abs(a - b), std::abs(s - b));

            std::function<cplx(std::size_t)> direct = [&](std::size_t n) -> cplx {
                return n <= head ? cplx{} : smooth_part(u, static_cast<double>(n), pt);
            };
            std::function<cplx(double)> smooth = [&](double x) { return smooth_part(u, x, pt); };
            SeriesSumOptions so;
            so.abs_tol = abs_tol;
            so.rel_tol = rel_tol;
            so.start_terms = head;
            so.verify = true;
            const auto rest = sum_series<cplx>(direct, smooth, so);
            if (!rest.ok) return std::nullopt;

            const cplx total = partial.value() + b + rest.value;
            const double tol_eff = std::max(abs_tol, rel_tol * std::abs(total));
            if (osc_err + rest.error <= tol_eff) return total;
        }
        return std::nullopt;
    }

    // Limit of the series c[from] + c[from+1] + ... from k+1 terms.
    static cplx levin_tail(const std::vector<cplx>& c, std::size_t from, int k) {
        cplx partial{}, num{}, den{};
        for (int j = 0; j <= k; ++j) {
            const cplx t = c[from + static_cast<std::size_t>(j)];
            partial += t;
            if (t == cplx{}) return partial;
            const double nj = 1.0 + j;
            const cplx omega = (1.0 + nj) * t;
            const double f = (j % 2 ? -1.0 : 1.0) * std::exp(std::lgamma(k + 1.0) - std::lgamma(j + 1.0) -
                                                              std::lgamma(k - j + 1.0)) *
                             std::pow((1.0 + nj) / (1.0 + 1.0 + k), k - 1);
            num += f * partial / omega;
            den += f / omega;
        }
        return num / den;
    }

    cplx smooth_part(std::span<const cplx> u, double n, std::vector<double>& pt) const {
        const double w = mu_.series_weight(n);
        if (w == 0.0) return cplx{};
        fill_point(n, pt);
        cplx z{};
        for (std::size_t k = 0; k < u.size(); ++k) z += u[k] * h1(pt[k]);
        return -w * (1.0 + z);
    }

    void fill_point(double n, std::vector<double>& pt) const {
        const auto& s = mu_.atom_series();
        for (std::size_t k = 0; k < pt.size(); ++k) pt[k] = s.point_exprs[k].eval_index(n);
    }

    template <class T>
    T term(std::span<const T> u, double n, std::vector<double>& pt) const {
        const double w = mu_.series_weight(n);
        if (w == 0.0) return T{};
        const auto& s = mu_.atom_series();
        for (std::size_t k = 0; k < pt.size(); ++k) pt[k] = s.point_exprs[k].eval_index(n);
        return w * levy_integrand<T>(u, pt);
    }

    const JumpMeasure& mu_;
    std::vector<Atom> cache_;
};

class DensityJumps final : public JumpIntegrator {
public:
    explicit DensityJumps(const JumpMeasure& mu) : mu_(mu) {}

    cplx eval(std::span<const cplx> u, double rel_tol) const override {
        if (sup_norm(u) == 0.0) return 0.0;
        const double abs_tol = std::max(rel_tol * sup_norm(u) * 1e-2, 1e-300);
        const ComplexIntegral r = integrate_complex(
            mu_, [&](std::span<const double> xi) { return levy_integrand<cplx>(u, xi); }, abs_tol,
            rel_tol);
        if (!r.ok) throw RiccatiError("density jump integral: " + r.note);
        return r.value;
    }

    double eval_real(std::span<const double> u, double rel_tol) const override {
        if (sup_norm(u) == 0.0) return 0.0;
        const auto& dm = mu_.density_measure();
        const Interval iv = dm.domain[dm.free_coordinate()];
        std::vector<double> base, full;
        auto f = [&](double x) {
            mu_.density_point(x, base, full);
            const double dens = dm.density_expr.eval_point(base);
            if (dens == 0.0) return 0.0;
            return dens * levy_integrand<double>(u, full);
        };
        const double rel = std::max(rel_tol, kMinJumpTol);
        const double abs_tol = std::max(rel_tol * sup_norm(u) * 1e-2, 1e-300);
        const auto q = integrate_line(f, iv.lo, iv.hi, rel, abs_tol);
        if (!q.ok || !std::isfinite(q.value))
            throw RiccatiError("density jump integral did not converge (error " + fmt(q.error) + ")");
        return q.value;
    }

private:
    const JumpMeasure& mu_;
};

}  // namespace
}  // namespace detail

RContext::RContext(AffineParams params, RContextOptions opts)
    : params_(std::move(params)), opts_(opts) {
    check_dimensions(params_);
    if (opts_.validate) {
        std::string msg;
        for (const Violation& v : validate_admissibility(params_))
            if (!v.inconclusive) msg += "\n  " + v.rule + ": " + v.message;
        if (!msg.empty()) throw std::invalid_argument("parameters are not admissible:" + msg);
    }
    for (const JumpMeasure& mu : params_.kappa) {
        switch (mu.kind()) {
            case JumpMeasure::Kind::FiniteAtomic:
                if (mu.is_zero())
                    jumps_.push_back(std::make_unique<detail::ZeroJumps>());
                else
                    jumps_.push_back(std::make_unique<detail::AtomJumps>(mu.finite_atoms()));
                break;
            case JumpMeasure::Kind::SeriesAtomic:
                jumps_.push_back(std::make_unique<detail::SeriesJumps>(mu));
                break;
            case JumpMeasure::Kind::Density:
                jumps_.push_back(std::make_unique<detail::DensityJumps>(mu));
                break;
        }
    }
}

RContext::~RContext() = default;
RContext::RContext(RContext&&) noexcept = default;
RContext& RContext::operator=(RContext&&) noexcept = default;

cplx RContext::jump_part(std::size_t j, std::span<const cplx> u, double jump_tol) const {
    const double tol = jump_tol > 0.0 ? jump_tol : opts_.jump_rel_tol;
    return jumps_.at(j)->eval(u, std::max(tol, kMinJumpTol));
}

cplx RContext::R(std::size_t j, std::span<const cplx> u, double jump_tol) const {
    const std::size_t d = this->d();
    if (u.size() != d) throw std::invalid_argument("R: u has wrong dimension");
    const Eigen::MatrixXd& a = params_.alpha.at(j);
    const Eigen::VectorXd& b = params_.beta.at(j);
    cplx quad{}, lin{};
    for (std::size_t k = 0; k < d; ++k) {
        lin += b(k) * u[k];
        for (std::size_t l = 0; l < d; ++l)
            if (a(k, l) != 0.0) quad += a(k, l) * u[k] * u[l];
    }
    return 0.5 * quad + lin - params_.gamma[j] + jump_part(j, u, jump_tol);
}

double RContext::R_real(std::size_t j, std::span<const double> u, double jump_tol) const {
    const std::size_t d = this->d();
    if (u.size() != d) throw std::invalid_argument("R: u has wrong dimension");
    const Eigen::MatrixXd& a = params_.alpha.at(j);
    const Eigen::VectorXd& b = params_.beta.at(j);
    double quad = 0.0, lin = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        lin += b(k) * u[k];
        for (std::size_t l = 0; l < d; ++l)
            if (a(k, l) != 0.0) quad += a(k, l) * u[k] * u[l];
    }
    const double tol = std::max(jump_tol > 0.0 ? jump_tol : opts_.jump_rel_tol, kMinJumpTol);
    return 0.5 * quad + lin - params_.gamma[j] + jumps_.at(j)->eval_real(u, tol);
}

cplx eval_R(const RContext& ctx, std::size_t j, std::span<const cplx> u) {
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (k < ctx.m() && u[k].real() > 0.0)
            throw std::invalid_argument("eval_R: Re(u_" + std::to_string(k + 1) + ") > 0");
        if (k >= ctx.m() && u[k].real() != 0.0)
            throw std::invalid_argument("eval_R: Re(u_" + std::to_string(k + 1) + ") != 0");
    }
    return ctx.R(j, u);
}

double eval_R(const RContext& ctx, std::size_t j, std::span<const double> u) {
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (k < ctx.m() && u[k] > 0.0)
            throw std::invalid_argument("eval_R: u_" + std::to_string(k + 1) + " > 0");
        if (k >= ctx.m() && u[k] != 0.0)
            throw std::invalid_argument("eval_R: u_" + std::to_string(k + 1) + " != 0");
    }
    return ctx.R_real(j, u);
}

std::vector<double> eval_R_restricted(const RContext& ctx, std::span<const double> uI) {
    if (uI.size() != ctx.m()) throw std::invalid_argument("eval_R_restricted: uI must have length m");
    std::vector<double> u(ctx.d(), 0.0);
    std::copy(uI.begin(), uI.end(), u.begin());
    std::vector<double> out(ctx.m());
    for (std::size_t i = 0; i < ctx.m(); ++i) out[i] = eval_R(ctx, i + 1, u);
    return out;
}

cplx derivative_R_fd(const RContext& ctx, std::size_t j, std::span<const cplx> u,
                     std::span<const cplx> direction, double step) {
    std::vector<cplx> up(u.begin(), u.end()), dn(u.begin(), u.end());
    for (std::size_t k = 0; k < u.size(); ++k) {
        up[k] += step * direction[k];
        dn[k] -= step * direction[k];
    }
    return (ctx.R(j, up) - ctx.R(j, dn)) / (2.0 * step);
}

double derivative_R_fd(const RContext& ctx, std::size_t j, std::span<const double> u, std::size_t k,
                       double step) {
    std::vector<double> up(u.begin(), u.end()), dn(u.begin(), u.end());
    up.at(k - 1) += step;
    dn.at(k - 1) -= step;
    return (ctx.R_real(j, up) - ctx.R_real(j, dn)) / (2.0 * step);
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with Hairer's dense output.

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

using State = std::vector<cplx>;

class FlowIntegrator {
public:
    FlowIntegrator(const RContext& ctx, bool real_mode, double tol, double atol)
        : ctx_(ctx), real_(real_mode), rtol_(tol), atol_(atol),
          jump_tol_(std::max(tol / 100.0, kMinJumpTol)), n_(ctx.d() + 1) {}

    // Right-hand side on the closed domain: Re psi_I clipped to <= 0.
    void rhs(const State& y, State& f) {
        ++evals_;
        const std::size_t d = ctx_.d(), m = ctx_.m();
        if (real_) {
            buf_real_.resize(d);
            for (std::size_t k = 0; k < d; ++k) {
                buf_real_[k] = k < m ? std::min(y[k + 1].real(), 0.0) : 0.0;
            }
            for (std::size_t j = 0; j <= d; ++j) f[j] = ctx_.R_real(j, buf_real_, jump_tol_);
            return;
        }
        buf_.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            cplx v = y[k + 1];
            if (k < m) v.real(std::min(v.real(), 0.0));
            else v.real(0.0);
            buf_[k] = v;
        }
        for (std::size_t j = 0; j <= d; ++j) f[j] = ctx_.R(j, buf_, jump_tol_);
    }

    double scale(const cplx& a, const cplx& b) const {
        return atol_ + rtol_ * std::max(std::abs(a), std::abs(b));
    }

    FlowResult run(std::span<const cplx> u, double T, const FlowOptions& opts) {
        const std::size_t d = ctx_.d(), m = ctx_.m();
        FlowResult out;
        out.u0.assign(u.begin(), u.end());
        std::vector<double> grid = opts.times;
        if (grid.empty()) {
            const std::size_t pts = std::max<std::size_t>(opts.points, 2);
            for (std::size_t k = 0; k < pts; ++k)
                grid.push_back(T * static_cast<double>(k) / static_cast<double>(pts - 1));
        }
        std::sort(grid.begin(), grid.end());
        if (grid.front() < 0.0 || grid.back() > T * (1 + 1e-15))
            throw std::invalid_argument("solve_flow: output times must lie in [0, T]");
        out.times = grid;

        FlowDiagnostics& dg = out.diagnostics;
        dg.min_boundary_distance = kInf;
        dg.level_times.assign(opts.levels.size(), kNaN);
        dg.smallest_step = kInf;

        State y(n_);
        y[0] = 0.0;
        for (std::size_t k = 0; k < d; ++k) y[k + 1] = u[k];

        auto level_of = [&](const State& s) {
            double lv = 0.0;
            for (std::size_t k = 0; k < m; ++k) lv = std::max(lv, -s[k + 1].real());
            return lv;
        };
        auto boundary = [&](const State& s) {
            for (std::size_t k = 0; k < m; ++k)
                dg.min_boundary_distance = std::min(dg.min_boundary_distance, std::abs(s[k + 1].real()));
        };
        auto emit = [&](const State& s) {
            out.psi0.push_back(s[0]);
            out.psi.emplace_back(s.begin() + 1, s.end());
        };
        boundary(y);
        for (std::size_t l = 0; l < opts.levels.size(); ++l)
            if (level_of(y) >= opts.levels[l]) dg.level_times[l] = 0.0;

        std::size_t next_out = 0;
        while (next_out < grid.size() && grid[next_out] <= 0.0) {
            emit(y);
            ++next_out;
        }

        State k1(n_), k2(n_), k3(n_), k4(n_), k5(n_), k6(n_), k7(n_), tmp(n_), ynew(n_);
        rhs(y, k1);
        double t = 0.0;
        double h = initial_step(y, k1, T);
        std::size_t steps = 0;

        while (t < T && next_out < grid.size()) {
            if (++steps > opts.max_steps)
                throw FlowError("solve_flow: step budget exhausted at t=" + fmt(t), out, t);
            if (t + h > T) h = T - t;
            if (!(t + h > t) || h < 1e-300)
                throw FlowError("solve_flow: step size underflow at t=" + fmt(t) +
                                    " (possible non-uniqueness near the boundary)",
                                out, t);

            for (std::size_t i = 0; i < n_; ++i) tmp[i] = y[i] + h * a21 * k1[i];
            rhs(tmp, k2);
            for (std::size_t i = 0; i < n_; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
            rhs(tmp, k3);
            for (std::size_t i = 0; i < n_; ++i)
                tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
            rhs(tmp, k4);
            for (std::size_t i = 0; i < n_; ++i)
                tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
            rhs(tmp, k5);
            for (std::size_t i = 0; i < n_; ++i)
                tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                                     a65 * k5[i]);
            rhs(tmp, k6);
            for (std::size_t i = 0; i < n_; ++i)
                ynew[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] +
                                      a76 * k6[i]);
            rhs(ynew, k7);

            double err = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                const cplx e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                    e6 * k6[i] + e7 * k7[i]);
                err = std::max(err, std::abs(e) / scale(y[i], ynew[i]));
            }
            if (!std::isfinite(err)) err = 1e10;

            // A crossing of the boundary beyond tolerance is a rejected step.
            bool crossed = false;
            for (std::size_t k = 0; k < m; ++k) {
                const double re = ynew[k + 1].real();
                if (re > std::min(rtol_, scale(y[k + 1], ynew[k + 1]))) crossed = true;
            }

            if (err > 1.0 || crossed) {
                ++dg.rejected;
                const double fac = crossed ? 0.5 : std::max(0.2, 0.9 * std::pow(err, -0.2));
                h *= fac;
                continue;
            }

            bool clamped = false;
            for (std::size_t k = 0; k < m; ++k)
                if (ynew[k + 1].real() > 0.0) {
                    ynew[k + 1].real(0.0);
                    clamped = true;
                    ++dg.clamps;
                }
            if (clamped) rhs(ynew, k7);

            ++dg.accepted;
            dg.max_error_ratio = std::max(dg.max_error_ratio, err);
            dg.smallest_step = std::min(dg.smallest_step, h);
            const double t_new = (T - (t + h) < 1e-14 * T) ? T : t + h;

            // Dense output coefficients.
            State r1(y), r2(n_), r3(n_), r4(n_), r5(n_);
            for (std::size_t i = 0; i < n_; ++i) {
                r2[i] = ynew[i] - y[i];
                r3[i] = h * k1[i] - r2[i];
                r4[i] = r2[i] - h * k7[i] - r3[i];
                r5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] +
                             d7 * k7[i]);
            }
            auto dense = [&](double theta, State& s) {
                const double th1 = 1.0 - theta;
                for (std::size_t i = 0; i < n_; ++i)
                    s[i] = r1[i] + theta * (r2[i] + th1 * (r3[i] + theta * (r4[i] + th1 * r5[i])));
                for (std::size_t k = 0; k < m; ++k)
                    if (s[k + 1].real() > 0.0) s[k + 1].real(0.0);
            };

            State s(n_);
            while (next_out < grid.size() && grid[next_out] <= t_new) {
                if (grid[next_out] >= t_new) {
                    emit(ynew);
                } else {
                    dense((grid[next_out] - t) / h, s);
                    emit(s);
                }
                ++next_out;
            }
            for (std::size_t l = 0; l < opts.levels.size(); ++l) {
                if (!std::isnan(dg.level_times[l]) || level_of(ynew) < opts.levels[l]) continue;
                double lo = 0.0, hi = 1.0;
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    dense(mid, s);
                    (level_of(s) >= opts.levels[l] ? hi : lo) = mid;
                }
                dg.level_times[l] = t + hi * h;
            }

            y = ynew;
            k1 = k7;
            boundary(y);
            t = t_new;
            h *= std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-10), -0.2)));
        }
        // Grid points at T not reached due to rounding.
        while (next_out < grid.size()) {
            emit(y);
            ++next_out;
        }
        dg.rhs_evaluations = evals_;
        return out;
    }

private:
    double initial_step(const State& y, const State& f0, double T) {
        double d0 = 0.0, d1n = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double sc = atol_ + rtol_ * std::abs(y[i]);
            d0 = std::max(d0, std::abs(y[i]) / sc);
            d1n = std::max(d1n, std::abs(f0[i]) / sc);
        }
        double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
        h0 = std::min(h0, T);
        State y1(n_), f1(n_);
        for (std::size_t i = 0; i < n_; ++i) y1[i] = y[i] + h0 * f0[i];
        rhs(y1, f1);
        double d2 = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double sc = atol_ + rtol_ * std::abs(y[i]);
            d2 = std::max(d2, std::abs(f1[i] - f0[i]) / sc / h0);
        }
        const double dm = std::max(d1n, d2);
        const double h1v = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
        return std::min({100.0 * h0, h1v, T});
    }

    const RContext& ctx_;
    bool real_;
    double rtol_, atol_, jump_tol_;
    std::size_t n_;
    std::size_t evals_ = 0;
    std::vector<double> buf_real_;
    std::vector<cplx> buf_;
};

}  // namespace

FlowResult solve_flow(const RContext& ctx, std::span<const cplx> u, double T, double tol,
                      const FlowOptions& opts) {
    if (u.size() != ctx.d()) throw std::invalid_argument("solve_flow: u has wrong dimension");
    if (!(T > 0.0)) throw std::invalid_argument("solve_flow: T must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("solve_flow: tol must be positive");
    bool real = true;
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (k < ctx.m() && u[k].real() > 0.0)
            throw std::invalid_argument("solve_flow: Re(u_" + std::to_string(k + 1) + ") > 0");
        if (k >= ctx.m() && u[k].real() != 0.0)
            throw std::invalid_argument("solve_flow: Re(u_" + std::to_string(k + 1) + ") != 0");
        if (u[k].imag() != 0.0) real = false;
    }
    const double atol = opts.atol >= 0.0 ? opts.atol : tol;
    FlowIntegrator integ(ctx, real, tol, atol);
    return integ.run(u, T, opts);
}

FlowResult solve_flow(const RContext& ctx, std::span<const double> u, double T, double tol,
                      const FlowOptions& opts) {
    std::vector<cplx> uc(u.begin(), u.end());
    return solve_flow(ctx, std::span<const cplx>(uc), T, tol, opts);
}

// ---------------------------------------------------------------------------

const char* to_string(MinimalSolution::Method m) {
    switch (m) {
        case MinimalSolution::Method::PlainLimit: return "plain-limit";
        case MinimalSolution::Method::EscapeDivergence: return "escape-divergence";
        case MinimalSolution::Method::NotConverged: return "not-converged";
    }
    return "?";
}

MinimalSolution minimal_solution_zero(const RContext& ctx, double T,
                                      const MinimalSolutionOptions& opts) {
    const std::size_t m = ctx.m(), d = ctx.d();
    if (m == 0) throw std::invalid_argument("minimal_solution_zero: requires m >= 1");
    if (opts.schedule.empty()) throw std::invalid_argument("minimal_solution_zero: empty schedule");
    for (std::size_t k = 0; k < opts.schedule.size(); ++k)
        if (!(opts.schedule[k] > 0.0) || (k > 0 && !(opts.schedule[k] < opts.schedule[k - 1])))
            throw std::invalid_argument("minimal_solution_zero: schedule must decrease strictly");

    MinimalSolution out;
    std::vector<FlowResult> flows;
    std::vector<std::vector<double>> escapes;  // per level
    const std::vector<double> levels{opts.escape_level, opts.zero_level};

    auto sup_diff = [&](const FlowResult& a, const FlowResult& b) {
        double s = 0.0;
        for (std::size_t t = 0; t < a.times.size(); ++t)
            for (std::size_t k = 0; k < m; ++k) s = std::max(s, std::abs(a.psi[t][k] - b.psi[t][k]));
        return s;
    };

    for (double eps : opts.schedule) {
        std::vector<double> u(d, 0.0);
        for (std::size_t k = 0; k < m; ++k) u[k] = -eps;
        FlowOptions fo;
        fo.points = opts.points;
        fo.atol = opts.tol * eps * 1e-3;
        fo.levels = levels;
        FlowResult f = solve_flow(ctx, std::span<const double>(u), T, opts.tol, fo);
        out.epsilons.push_back(eps);
        out.escape_times.push_back(f.diagnostics.level_times[0]);
        escapes.push_back(f.diagnostics.level_times);

        if (!flows.empty()) {
            const FlowResult& prev = flows.back();
            // Larger eps gives the more negative trajectory.
            for (std::size_t t = 0; t < f.times.size(); ++t)
                for (std::size_t k = 0; k < m; ++k) {
                    const double a = prev.psi[t][k].real(), b = f.psi[t][k].real();
                    const double slack = 10.0 * opts.tol * std::max({std::abs(a), std::abs(b), eps});
                    if (a > b + slack)
                        throw std::logic_error("minimal_solution_zero: trajectories not ordered in eps at t=" +
                                               fmt(f.times[t]) + " (eps=" + fmt(eps) + ")");
                }
            out.sup_differences.push_back(sup_diff(prev, f));
        }
        flows.push_back(std::move(f));
        if (!out.sup_differences.empty() && out.sup_differences.back() < opts.converge_tol) {
            out.method = MinimalSolution::Method::PlainLimit;
            out.convergence_error = out.sup_differences.back();
            break;
        }
    }

    if (out.method != MinimalSolution::Method::PlainLimit) {
        // Escape-time analysis over the tail of the schedule.
        auto ratios_for = [&](std::size_t level, std::vector<double>& ratios) {
            std::vector<double> tau;
            for (const auto& e : escapes) tau.push_back(e[level]);
            if (tau.size() < 4) return false;
            for (std::size_t k = tau.size() - 4; k < tau.size(); ++k)
                if (std::isnan(tau[k])) return false;
            const std::size_t s = tau.size();
            const double i1 = tau[s - 3] - tau[s - 4], i2 = tau[s - 2] - tau[s - 3],
                         i3 = tau[s - 1] - tau[s - 2];
            if (!(i1 > 0.0 && i2 > 0.0 && i3 > 0.0)) return false;
            ratios = {i2 / i1, i3 / i2};
            return true;
        };
        std::vector<double> r0, r1;
        const bool ok0 = ratios_for(0, r0), ok1 = ratios_for(1, r1);
        if (ok0 && ok1 && std::min({r0[0], r0[1], r1[0], r1[1]}) >= opts.divergent_ratio) {
            out.method = MinimalSolution::Method::EscapeDivergence;
            std::ostringstream os;
            os << "escape times to level " << levels[0] << " grow without bound (increment ratios "
               << r0[0] << ", " << r0[1] << "; at level " << levels[1] << ": " << r1[0] << ", "
               << r1[1] << ")";
            out.note = os.str();
        } else {
            std::ostringstream os;
            os << "successive sup-difference " << (out.sup_differences.empty() ? kNaN : out.sup_differences.back())
               << " above " << opts.converge_tol;
            if (ok0) os << "; escape-time increment ratios " << r0[0] << ", " << r0[1];
            else os << "; escape times not resolved";
            out.note = os.str();
            out.convergence_error = out.sup_differences.empty() ? kInf : out.sup_differences.back();
        }
    }

    if (out.method == MinimalSolution::Method::EscapeDivergence) {
        FlowResult z;
        const FlowResult& last = flows.back();
        z.u0.assign(d, 0.0);
        z.times = last.times;
        for (double t : z.times) {
            z.psi0.emplace_back(-ctx.params().gamma[0] * t, 0.0);
            z.psi.emplace_back(d, cplx{});
        }
        z.diagnostics = last.diagnostics;
        out.limit = std::move(z);
        out.convergence_error = 0.0;
    } else {
        out.limit = flows.back();
    }
    for (const auto& row : out.limit.psi)
        for (std::size_t k = 0; k < m; ++k) out.sup_abs = std::max(out.sup_abs, std::abs(row[k].real()));
    return out;
}

// ---------------------------------------------------------------------------

Verdict check_quasimonotone(const VectorField& field, std::size_t m, std::size_t samples,
                            std::uint64_t seed, double tol) {
    const std::string crit = "quasimonotone";
    if (m <= 1) return Verdict::holds(crit, {{"m <= 1: condition is vacuous", 0.0, tol}});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    auto draw = [&]() { return std::pow(10.0, -3.0 + 3.7 * unit(rng)); };
    double worst = -kInf;
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<double> y(m), x(m);
        for (std::size_t k = 0; k < m; ++k) y[k] = unit(rng) < 0.1 ? 0.0 : -draw();
        const std::size_t i = pick(rng);
        for (std::size_t k = 0; k < m; ++k) x[k] = k == i ? y[k] : y[k] - draw();
        const double rx = field(x)[i], ry = field(y)[i];
        worst = std::max(worst, rx - ry);
        if (rx > ry + tol) {
            std::ostringstream os;
            os << "R_" << i + 1 << "(x) = " << rx << " > R_" << i + 1 << "(y) = " << ry << " at x=(";
            for (std::size_t k = 0; k < m; ++k) os << (k ? ", " : "") << x[k];
            os << "), y=(";
            for (std::size_t k = 0; k < m; ++k) os << (k ? ", " : "") << y[k];
            os << ")";
            return Verdict::fails(crit, {{os.str(), rx - ry, tol}});
        }
    }
    return Verdict::holds(crit, {{"max R_i(x) - R_i(y) over " + std::to_string(samples) + " pairs",
                                  worst, tol}});
}

Verdict check_quasimonotone(const RContext& ctx, std::size_t samples, std::uint64_t seed,
                            double tol) {
    VectorField f = [&ctx](std::span<const double> uI) { return eval_R_restricted(ctx, uI); };
    return check_quasimonotone(f, ctx.m(), samples, seed, tol);
}

double flow_property_check(const RContext& ctx, std::span<const cplx> u, double s, double t,
                           double tol) {
    FlowOptions fo;
    fo.points = 2;
    const FlowResult whole = solve_flow(ctx, u, s + t, tol, fo);
    const FlowResult first = solve_flow(ctx, u, s, tol, fo);
    const std::vector<cplx>& mid = first.psi.back();
    std::vector<cplx> start(mid);
    for (std::size_t k = ctx.m(); k < start.size(); ++k) start[k].real(0.0);
    const FlowResult second = solve_flow(ctx, start, t, tol, fo);
    double r = 0.0;
    for (std::size_t k = 0; k < ctx.d(); ++k)
        r = std::max(r, std::abs(whole.psi.back()[k] - second.psi.back()[k]));
    return r;
}

nlohmann::json flow_to_json(const FlowResult& f) {
    using nlohmann::json;
    auto pair = [](const cplx& z) { return json::array({z.real(), z.imag()}); };
    json out;
    out["u0"] = json::array();
    for (const cplx& z : f.u0) out["u0"].push_back(pair(z));
    out["times"] = f.times;
    out["psi0"] = json::array();
    for (const cplx& z : f.psi0) out["psi0"].push_back(pair(z));
    out["psi"] = json::array();
    for (const auto& row : f.psi) {
        json r = json::array();
        for (const cplx& z : row) r.push_back(pair(z));
        out["psi"].push_back(r);
    }
    const FlowDiagnostics& d = f.diagnostics;
    json lv = json::array();
    for (double v : d.level_times) lv.push_back(std::isnan(v) ? json(nullptr) : json(v));
    out["diagnostics"] = {{"accepted_steps", d.accepted},
                          {"rejected_steps", d.rejected},
                          {"rhs_evaluations", d.rhs_evaluations},
                          {"clamps", d.clamps},
                          {"min_boundary_distance",
                           std::isfinite(d.min_boundary_distance) ? json(d.min_boundary_distance)
                                                                  : json(nullptr)},
                          {"max_error_ratio", d.max_error_ratio},
                          {"smallest_step",
                           std::isfinite(d.smallest_step) ? json(d.smallest_step) : json(nullptr)},
                          {"level_times", lv}};
    return out;
}

}  // namespace affmart
