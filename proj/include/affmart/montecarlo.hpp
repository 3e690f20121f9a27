#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "affmart/params.hpp"

namespace affmart {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    std::vector<double> x0;
    double T = 1.0;
    std::size_t steps_per_unit = 1000;
    std::size_t paths = 10000;
    std::uint64_t seed = 20240601;
    /// A path is stopped and counted as exploded once max_k |X^k| exceeds this.
    double cap = std::numeric_limits<double>::infinity();
    /// 1-based component whose stochastic exponential is tracked; 0 for none.
    std::size_t stoch_exp_component = 0;
    bool record_jumps = false;
    /// Worker threads; 0 uses the hardware concurrency. Results do not depend on it.
    std::size_t threads = 0;
    /// Atoms kept when sampling marks of an infinite series.
    std::size_t series_atom_cap = std::size_t{1} << 20;
};

struct JumpRecord {
    std::size_t path = 0;
    double time = 0.0;
    std::size_t j = 0;
    std::vector<double> mark;
};

struct SampleStats {
    double mean = 0.0;
    double std_error = 0.0;
    double median_of_means = 0.0;
    std::size_t count = 0;
};

struct PathEnsemble {
    std::size_t d = 0;
    std::vector<std::vector<double>> terminal;
    /// Time integral of each coordinate along each path.
    std::vector<std::vector<double>> integrated;
    std::vector<std::size_t> jump_counts;
    std::vector<unsigned char> exploded;
    /// log E(X^i)_T per path when a component was tracked.
    std::vector<double> log_stoch_exp;
    std::vector<JumpRecord> jumps;

    std::vector<double> mean;
    std::vector<double> std_error;
    std::size_t explosions = 0;
    std::size_t clipped = 0;
    std::size_t total_steps = 0;
    /// Mass of series atoms beyond the sampling table, per kappa_j.
    std::vector<double> untabulated_mass;
    /// Clipped negative excursions exceed 1% of the steps.
    bool clip_warning = false;
};

/// Euler scheme for the diffusion part, thinning for jumps (finite activity only).
PathEnsemble simulate_paths(const AffineParams& params, const SimConfig& cfg);

/// Mean of E(X^i)_T with standard error and a 16-block median of means.
SampleStats estimate_stoch_exp_mean(const AffineParams& params, std::size_t i, const SimConfig& cfg);

struct CFPoint {
    std::vector<std::complex<double>> u;
    std::complex<double> empirical;
    std::complex<double> model;
    double std_error = 0.0;
};

struct CFCheck {
    std::vector<CFPoint> points;
    std::size_t worst = 0;
    double max_abs_diff = 0.0;
    /// max |emp - model| / stderr over the grid (0 where stderr is 0 and they agree).
    double max_z = 0.0;
};

/// Sample mean of exp(<u, X_T>) against exp(psi_0(T,u) + <psi(T,u), x0>).
CFCheck empirical_cf_check(const AffineParams& params, const SimConfig& cfg,
                           const std::vector<std::vector<std::complex<double>>>& u_grid,
                           double solver_tol = 1e-9);

struct ExplosionEstimate {
    double frequency = 0.0;
    double std_error = 0.0;
    std::size_t exploded = 0;
    std::size_t paths = 0;
};

ExplosionEstimate detect_explosion(const AffineParams& params, SimConfig cfg, double cap);

/// Replaces every series measure by its first `atoms` atoms and re-solves
/// beta_j^i for every component i whose drift identity held before. The
/// re-solved components are returned through `resolved` (1-based).
AffineParams truncate_model(const AffineParams& params, std::size_t atoms,
                            std::vector<std::size_t>* resolved = nullptr);

nlohmann::json to_json(const PathEnsemble& ensemble);

}  // namespace affmart
