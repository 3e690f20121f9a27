#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "affmart/measure.hpp"

namespace affmart {

/// Admissible parameter tuple (alpha, beta, gamma, kappa) on R_+^m x R^n.
/// Index j = 0 is the state-independent part; j = 1..d multiply X^j.
struct AffineParams {
    std::size_t m = 0;
    std::size_t n = 0;
    std::vector<Eigen::MatrixXd> alpha;
    std::vector<Eigen::VectorXd> beta;
    std::vector<double> gamma;
    std::vector<JumpMeasure> kappa;

    std::size_t dim() const { return m + n; }

    /// All-zero parameters of the given shape.
    static AffineParams zero(std::size_t m, std::size_t n);
};

/// Componentwise clamp to [-1, 1].
Eigen::VectorXd truncation_h(const Eigen::VectorXd& xi);

struct Violation {
    /// Stable identifier of the violated bullet, e.g. "gamma.nonnegative".
    std::string rule;
    /// Index tuple (j, k, l); unused slots are -1. Coordinates are 1-based.
    int j = -1, k = -1, l = -1;
    double quantity = 0.0;
    /// True when an integral could not be decided rather than provably violated.
    bool inconclusive = false;
    std::string message;
};

struct AdmissibilityOptions {
    double tol = 1e-10;
    /// Slack for the cross-drift inequality.
    double drift_slack = 1e-9;
    double psd_tol = 1e-12;
};

/// One record per violated bullet; empty means admissible.
std::vector<Violation> validate_admissibility(const AffineParams& params,
                                              const AdmissibilityOptions& opts = {});

/// Throws std::invalid_argument on shape mismatches.
void check_dimensions(const AffineParams& params);

}  // namespace affmart
