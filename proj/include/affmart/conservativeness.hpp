#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "affmart/params.hpp"
#include "affmart/riccati.hpp"
#include "affmart/verdict.hpp"

namespace affmart {

/// Raised when a criterion does not apply to the parameter shape (Osgood for m != 1).
class NotApplicable : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Holds iff every gamma_j is exactly zero.
Verdict necessary_gamma_check(const AffineParams& params);

/// wedge(k) moment of kappa_j for 1 <= j, k <= m; entry [j-1][k-1].
std::vector<std::vector<Verdict>> moment_check_matrix(const AffineParams& params, double tol = 1e-10);

/// Conjunction of the moment matrix.
Verdict sufficient_moment_check(const AffineParams& params, double tol = 1e-10);

struct OsgoodOptions {
    double delta = 1e-2;
    /// Inner endpoints -delta * 2^-k for k = 1..levels.
    std::size_t levels = 80;
    double cauchy_tol = 1e-9;
    std::size_t cauchy_window = 10;
    /// Power-law decay exponent of the dyadic pieces at or below which the
    /// integral is declared divergent (1 is the harmonic borderline).
    double divergent_exponent = 1.05;
};

struct OsgoodTrace {
    std::vector<double> endpoints;
    /// Integral of 1/R_1(u, 0) from -delta to each endpoint.
    std::vector<double> partial_integrals;
    double decay_exponent = 0.0;
};

/// Dichotomy for m = 1. Holds means the integral of 1/R_1 diverges near 0-
/// (zero is the only solution from 0), Fails means it converges.
Verdict osgood_check(const RContext& ctx, const OsgoodOptions& opts = {}, OsgoodTrace* trace = nullptr);
Verdict osgood_check(const AffineParams& params, const OsgoodOptions& opts = {});

struct ConservativenessOptions {
    double horizon = 10.0;
    /// sup |psi_I(t, 0)| at or below this declares the minimal solution zero.
    double zero_threshold = 1e-6;
    /// sup above this multiple of the convergence error declares it nonzero.
    double separation_factor = 100.0;
    double moment_tol = 1e-10;
    OsgoodOptions osgood;
    MinimalSolutionOptions minimal;
    /// Compute the minimal solution even when an earlier criterion decided.
    bool always_minimal = true;
};

struct MinimalSolutionSummary {
    double horizon = 0.0;
    double sup_abs = 0.0;
    double convergence_error = 0.0;
    std::string method;
    std::string note;
    bool converged = false;
};

struct ConservativenessReport {
    Verdict overall;
    Verdict gamma_check;
    std::vector<std::vector<Verdict>> moment_check;
    Verdict moment_overall;
    /// Empty when m != 1.
    std::optional<Verdict> osgood;
    std::optional<MinimalSolutionSummary> minimal_solution;
    /// Full limit trajectory when it was computed.
    std::optional<MinimalSolution> minimal;
    std::vector<std::string> decision_path;
    double zero_threshold = 1e-6;
};

ConservativenessReport conservativeness_verdict(const AffineParams& params,
                                                const ConservativenessOptions& opts = {});

nlohmann::json to_json(const ConservativenessReport& report);

/// exp(psi_0(t, 0) + <psi_I(t, 0), x_I>) from the minimal solution on [0, t].
/// Throws std::runtime_error when gamma != 0 or the minimal solution does not converge.
double survival_probability(const AffineParams& params, std::span<const double> x, double t,
                            const MinimalSolutionOptions& opts = {});

/// Same on every grid time of an already computed minimal solution.
std::vector<double> survival_curve(const MinimalSolution& minimal, std::span<const double> x);

}  // namespace affmart
