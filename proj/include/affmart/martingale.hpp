#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "affmart/conservativeness.hpp"
#include "affmart/params.hpp"
#include "affmart/verdict.hpp"

namespace affmart {

/// Which exponential of X is tested. Components are 1-based.
struct MartingaleForm {
    enum class Kind { StochasticExp, OrdinaryExp, AffineFunctional };

    Kind kind = Kind::StochasticExp;
    std::size_t component = 1;
    double p = 0.0;
    std::vector<double> P;

    static MartingaleForm stochastic_exp(std::size_t i) { return {Kind::StochasticExp, i, 0.0, {}}; }
    static MartingaleForm ordinary_exp(std::size_t i) { return {Kind::OrdinaryExp, i, 0.0, {}}; }
    static MartingaleForm affine_functional(double p, std::vector<double> P) {
        return {Kind::AffineFunctional, 0, p, std::move(P)};
    }

    std::string describe() const;
};

/// Holds iff no kappa_j charges {xi_i < -1}.
Verdict positivity_check(const AffineParams& params, std::size_t i);

struct DriftResidual {
    std::size_t j = 0;
    /// beta_j^i + integral of (xi_i - h_i) against kappa_j.
    double value = 0.0;
    double error_bound = 0.0;
    bool resolved = false;
};

/// Large-jump integrability and the drift identity for every j. Residuals
/// are reported raw in `residuals` when non-null.
Verdict local_martingale_check(const AffineParams& params, std::size_t i, double tol = 1e-8,
                               std::vector<DriftResidual>* residuals = nullptr);

/// Parameters of X under the measure with density E(X^i). Throws
/// std::invalid_argument when (1 + xi_i) is negative on the support, and
/// std::runtime_error when a drift integral cannot be resolved.
AffineParams star_transform(const AffineParams& params, std::size_t i);

/// (X, log-compensated exp(X^i)) on R_+^m x R^{n+1}.
AffineParams exp_lift(const AffineParams& params, std::size_t i);

/// (X, p + P.X) on R_+^m x R^{n+1}.
AffineParams functional_lift(const AffineParams& params, double p, const std::vector<double>& P);

struct MartingaleOptions {
    double drift_tol = 1e-8;
    ConservativenessOptions conservativeness;
};

struct MartingaleReport {
    MartingaleForm form;
    /// Component of the (possibly lifted) process whose stochastic exponential is tested.
    std::size_t component = 0;
    std::optional<AffineParams> lifted;
    Verdict positivity;
    Verdict local_mart;
    std::vector<DriftResidual> drift_residuals;
    std::optional<AffineParams> star_params;
    std::vector<Violation> star_admissibility;
    std::optional<ConservativenessReport> star_conservative;
    Verdict overall;
    std::vector<std::string> notes;
};

MartingaleReport martingale_verdict(const AffineParams& params, const MartingaleForm& form,
                                    const MartingaleOptions& opts = {});

nlohmann::json to_json(const MartingaleReport& report);

}  // namespace affmart
