#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "affmart/params.hpp"
#include "affmart/verdict.hpp"

namespace affmart {

using cplx = std::complex<double>;

/// A jump integral inside R could not be resolved to tolerance.
class RiccatiError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RContextOptions {
    /// Relative accuracy of jump integrals; the absolute floor scales with |u|.
    double jump_rel_tol = 1e-11;
    /// Reject parameter sets with definite admissibility violations.
    bool validate = true;
};

namespace detail {
class JumpIntegrator;
}

/// Parameters plus per-measure evaluation caches. Immutable after
/// construction and safe to share between threads.
class RContext {
public:
    explicit RContext(AffineParams params, RContextOptions opts = {});
    ~RContext();
    RContext(const RContext&) = delete;
    RContext& operator=(const RContext&) = delete;
    RContext(RContext&&) noexcept;
    RContext& operator=(RContext&&) noexcept;

    const AffineParams& params() const { return params_; }
    std::size_t m() const { return params_.m; }
    std::size_t d() const { return params_.dim(); }
    const RContextOptions& options() const { return opts_; }

    /// R_j(u) for j = 0..d. `jump_tol` overrides the relative jump tolerance.
    cplx R(std::size_t j, std::span<const cplx> u, double jump_tol = 0.0) const;
    double R_real(std::size_t j, std::span<const double> u, double jump_tol = 0.0) const;
    /// Jump part of R_j only.
    cplx jump_part(std::size_t j, std::span<const cplx> u, double jump_tol = 0.0) const;

private:
    AffineParams params_;
    RContextOptions opts_;
    std::vector<std::unique_ptr<detail::JumpIntegrator>> jumps_;
};

cplx eval_R(const RContext& ctx, std::size_t j, std::span<const cplx> u);
double eval_R(const RContext& ctx, std::size_t j, std::span<const double> u);

/// First m components of R at (uI, 0).
std::vector<double> eval_R_restricted(const RContext& ctx, std::span<const double> uI);

/// Central difference of R_j along `direction` with step `step`.
cplx derivative_R_fd(const RContext& ctx, std::size_t j, std::span<const cplx> u,
                     std::span<const cplx> direction, double step);
/// Same along coordinate axis k (1-based).
double derivative_R_fd(const RContext& ctx, std::size_t j, std::span<const double> u,
                       std::size_t k, double step);

struct FlowDiagnostics {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evaluations = 0;
    std::size_t clamps = 0;
    /// Smallest |Re psi_k|, k <= m, over accepted states (infinity if m = 0).
    double min_boundary_distance = 0.0;
    /// Largest accepted local error estimate in units of the tolerance.
    double max_error_ratio = 0.0;
    double smallest_step = 0.0;
    /// First time max_k -Re psi_k reaches each requested level (NaN if never).
    std::vector<double> level_times;
};

struct FlowResult {
    std::vector<cplx> u0;
    std::vector<double> times;
    std::vector<cplx> psi0;
    std::vector<std::vector<cplx>> psi;
    FlowDiagnostics diagnostics;
};

/// Step-size underflow or budget exhaustion. Carries the trajectory up to
/// the last accepted state.
class FlowError : public std::runtime_error {
public:
    FlowError(const std::string& what, FlowResult partial, double t_last)
        : std::runtime_error(what), partial_(std::move(partial)), t_last_(t_last) {}
    const FlowResult& partial() const { return partial_; }
    double last_time() const { return t_last_; }

private:
    FlowResult partial_;
    double t_last_;
};

struct FlowOptions {
    /// Output grid; empty means `points` uniform times on [0, T].
    std::vector<double> times;
    std::size_t points = 101;
    /// Absolute tolerance; negative means equal to the relative tolerance.
    double atol = -1.0;
    std::size_t max_steps = 2'000'000;
    std::vector<double> levels;
};

/// Integrates d/dt psi = R(psi), d/dt psi_0 = R_0(psi) from (0, u).
FlowResult solve_flow(const RContext& ctx, std::span<const cplx> u, double T, double tol,
                      const FlowOptions& opts = {});
FlowResult solve_flow(const RContext& ctx, std::span<const double> u, double T, double tol,
                      const FlowOptions& opts = {});

/// Generic vector field on R^k used by the comparison-property tests.
using VectorField = std::function<std::vector<double>(std::span<const double>)>;

struct MinimalSolutionOptions {
    std::vector<double> schedule{1e-2, 1e-4, 1e-8, 1e-16, 1e-32, 1e-64};
    double tol = 1e-8;
    std::size_t points = 201;
    /// Successive sup-difference declaring the plain limit converged.
    double converge_tol = 1e-7;
    /// Escape times are tracked to both levels; divergence at `zero_level`
    /// bounds the limit by it on every horizon.
    double escape_level = 0.1;
    double zero_level = 1e-6;
    /// Escape-time increment ratio at or above which the escape time diverges.
    double divergent_ratio = 0.8;
};

struct MinimalSolution {
    enum class Method { PlainLimit, EscapeDivergence, NotConverged };

    Method method = Method::NotConverged;
    /// Limit estimate of psi_0(t, 0), psi(t, 0) on the output grid.
    FlowResult limit;
    std::vector<double> epsilons;
    std::vector<double> sup_differences;
    std::vector<double> escape_times;
    double sup_abs = 0.0;
    double convergence_error = 0.0;
    std::string note;

    bool converged() const { return method != Method::NotConverged; }
};

const char* to_string(MinimalSolution::Method m);

/// Minimal R_-^m valued solution from 0 as the limit of solutions started at
/// -eps * (1, ..., 1). Throws std::logic_error if trajectories are not
/// ordered in eps.
MinimalSolution minimal_solution_zero(const RContext& ctx, double T,
                                      const MinimalSolutionOptions& opts = {});

/// Random pairs x <= y in R_-^m with x_i = y_i; Fails with a witness when
/// R_i(x) > R_i(y) + tol.
Verdict check_quasimonotone(const RContext& ctx, std::size_t samples, std::uint64_t seed,
                            double tol = 1e-9);
Verdict check_quasimonotone(const VectorField& field, std::size_t m, std::size_t samples,
                            std::uint64_t seed, double tol = 1e-9);

/// ||psi(s+t, u) - psi(t, psi(s, u))||_inf with both sides solved at tol.
double flow_property_check(const RContext& ctx, std::span<const cplx> u, double s, double t,
                           double tol);

nlohmann::json flow_to_json(const FlowResult& flow);

}  // namespace affmart
