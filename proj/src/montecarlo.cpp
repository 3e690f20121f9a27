#include "affmart/montecarlo.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include <Eigen/Dense>

#include "affmart/martingale.hpp"
#include "affmart/riccati.hpp"

namespace affmart {

namespace {

constexpr std::size_t kDensityCells = 8192;
constexpr std::size_t kMedianBlocks = 16;
// Series sampling tables stop once the declared tail mass is below this.
constexpr double kSeriesTailMass = 1e-12;

double clamp_unit(double x) { return std::max(-1.0, std::min(1.0, x)); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += v[k];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

SampleStats stats_of(const std::vector<double>& v) {
    SampleStats s;
    s.count = v.size();
    if (v.empty()) return s;
    const double n = static_cast<double>(v.size());
    s.mean = pairwise_sum(v.data(), v.size()) / n;
    std::vector<double> dev(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) dev[k] = (v[k] - s.mean) * (v[k] - s.mean);
    s.std_error = v.size() > 1 ? std::sqrt(pairwise_sum(dev.data(), dev.size()) / (n - 1.0) / n) : 0.0;
    const std::size_t blocks = std::min(kMedianBlocks, v.size());
    std::vector<double> bm;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t lo = b * v.size() / blocks, hi = (b + 1) * v.size() / blocks;
        bm.push_back(pairwise_sum(v.data() + lo, hi - lo) / static_cast<double>(hi - lo));
    }
    std::sort(bm.begin(), bm.end());
    s.median_of_means = bm.size() % 2 ? bm[bm.size() / 2] : 0.5 * (bm[bm.size() / 2 - 1] + bm[bm.size() / 2]);
    return s;
}

// Finite jump measure as used by the sampler: total mass, integral of h and
// a mark table. Densities are tabulated on a mapped grid; series are cut
// where the declared tail mass is negligible.
struct MarkSampler {
    double mass = 0.0;
    std::vector<double> h_integral;
    std::vector<std::vector<double>> marks;
    std::vector<double> probs;
    double untabulated = 0.0;

    // Density tables sample inside a cell.
    const JumpMeasure* density = nullptr;
    std::function<double(double)> x_of_s;
};

MarkSampler build_sampler(const JumpMeasure& mu, std::size_t j, std::size_t series_cap) {
    MarkSampler s;
    const std::size_t d = mu.dim();
    s.h_integral.assign(d, 0.0);
    if (mu.is_zero()) return s;
    const IntegralResult tm = total_mass(mu);
    if (tm.status == IntegralResult::Status::Divergent)
        throw SimulationError("kappa_" + std::to_string(j) + " has infinite total mass (infinite activity)");
    if (!tm.finite())
        throw SimulationError("kappa_" + std::to_string(j) + ": total mass could not be bounded (" + tm.note + ")");

    switch (mu.kind()) {
        case JumpMeasure::Kind::FiniteAtomic:
            for (const Atom& a : mu.finite_atoms().atoms) {
                s.marks.push_back(a.point);
                s.probs.push_back(a.weight);
            }
            break;
        case JumpMeasure::Kind::SeriesAtomic: {
            const auto& ser = mu.atom_series();
            const double p = ser.tail.p, c = std::abs(ser.tail.c);
            double n_tol = std::pow(c / ((p - 1.0) * kSeriesTailMass), 1.0 / (p - 1.0));
            const std::size_t N = static_cast<std::size_t>(std::min<double>(static_cast<double>(series_cap),
                                                                            std::max(64.0, std::ceil(n_tol))));
            for (std::size_t n = 1; n <= N; ++n) {
                const double w = mu.series_weight(static_cast<double>(n));
                if (w <= 0.0) continue;
                s.marks.push_back(mu.series_point(static_cast<double>(n)));
                s.probs.push_back(w);
            }
            s.untabulated = std::max(0.0, tm.value - std::accumulate(s.probs.begin(), s.probs.end(), 0.0));
            break;
        }
        case JumpMeasure::Kind::Density: {
            const auto& dm = mu.density_measure();
            const Interval iv = dm.domain[dm.free_coordinate()];
            const double lo = iv.lo, hi = iv.hi;
            if (std::isfinite(lo) && std::isfinite(hi))
                s.x_of_s = [lo, hi](double t) { return lo + (hi - lo) * t; };
            else if (std::isfinite(lo))
                s.x_of_s = [lo](double t) { return lo + t / (1.0 - t); };
            else if (std::isfinite(hi))
                s.x_of_s = [hi](double t) { return hi - t / (1.0 - t); };
            else
                s.x_of_s = [](double t) { return std::tan(M_PI * (t - 0.5)); };
            s.density = &mu;
            std::vector<double> base, full;
            const double h = 1.0 / static_cast<double>(kDensityCells);
            for (std::size_t c = 0; c < kDensityCells; ++c) {
                const double t = (static_cast<double>(c) + 0.5) * h;
                const double x = s.x_of_s(t);
                const double dx = s.x_of_s(std::min(t + 0.5 * h, 1.0 - 1e-16)) - s.x_of_s(t - 0.5 * h);
                mu.density_point(x, base, full);
                const double f = dm.density_expr.eval_point(base);
                s.marks.push_back(full);
                s.probs.push_back(std::isfinite(f * dx) ? std::max(0.0, f * dx) : 0.0);
            }
            break;
        }
    }
    s.mass = std::accumulate(s.probs.begin(), s.probs.end(), 0.0);
    if (!(s.mass > 0.0)) throw SimulationError("kappa_" + std::to_string(j) + " has no sampleable mass");
    for (std::size_t a = 0; a < s.marks.size(); ++a)
        for (std::size_t k = 0; k < d; ++k) s.h_integral[k] += s.probs[a] * clamp_unit(s.marks[a][k]);
    return s;
}

struct Model {
    std::size_t m = 0, d = 0;
    std::vector<MarkSampler> samplers;
    // drift_j = beta_j - integral of h against kappa_j (all jumps are simulated raw).
    std::vector<std::vector<double>> drift;
    std::vector<Eigen::MatrixXd> alpha;
    bool diffusion = false;
};

Model build_model(const AffineParams& p, std::size_t series_cap) {
    check_dimensions(p);
    for (std::size_t j = 0; j < p.gamma.size(); ++j)
        if (p.gamma[j] != 0.0) throw SimulationError("simulation requires gamma = 0 (gamma_" + std::to_string(j) + " != 0)");
    Model M;
    M.m = p.m;
    M.d = p.dim();
    for (std::size_t j = 0; j <= M.d; ++j) {
        M.samplers.push_back(build_sampler(p.kappa[j], j, series_cap));
        std::vector<double> b(M.d);
        for (std::size_t k = 0; k < M.d; ++k)
            b[k] = p.beta[j](static_cast<Eigen::Index>(k)) - M.samplers.back().h_integral[k];
        M.drift.push_back(std::move(b));
        M.alpha.push_back(p.alpha[j]);
        if (!p.alpha[j].isZero(0.0)) M.diffusion = true;
    }
    return M;
}

struct PathOutput {
    std::vector<double> terminal, integrated;
    std::size_t jumps = 0, clipped = 0;
    bool exploded = false;
    double log_e = 0.0;
};

class PathSimulator {
public:
    PathSimulator(const Model& M, const SimConfig& cfg) : M_(M), cfg_(cfg) {
        for (const MarkSampler& s : M.samplers) pickers_.emplace_back(s.probs.begin(), s.probs.end());
    }

    PathOutput run(std::size_t path, std::vector<JumpRecord>* log) {
        const std::size_t d = M_.d, m = M_.m;
        std::mt19937_64 rng(splitmix64(cfg_.seed ^ splitmix64(path + 0x5851f42d4c957f2dULL)));
        std::exponential_distribution<double> expo(1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);

        const std::size_t steps = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(cfg_.T * static_cast<double>(cfg_.steps_per_unit))));
        const double dt = cfg_.T / static_cast<double>(steps);
        const std::size_t ie = cfg_.stoch_exp_component;

        PathOutput out;
        std::vector<double> x = cfg_.x0, dc(d), J(d), y(d), z(d);
        out.integrated.assign(d, 0.0);
        double clock = expo(rng);

        auto intensity = [&](const std::vector<double>& s) {
            double lam = M_.samplers[0].mass;
            for (std::size_t j = 1; j <= m; ++j) lam += std::max(0.0, s[j - 1]) * M_.samplers[j].mass;
            return lam;
        };
        auto state_at = [&](double tau) {
            for (std::size_t k = 0; k < d; ++k) y[k] = x[k] + (tau / dt) * dc[k] + J[k];
        };

        for (std::size_t step = 0; step < steps; ++step) {
            // Continuous Euler increment with coefficients frozen at the step start.
            for (std::size_t k = 0; k < d; ++k) {
                double b = M_.drift[0][k];
                for (std::size_t j = 1; j <= d; ++j) b += x[j - 1] * M_.drift[j][k];
                dc[k] = b * dt;
            }
            double cii = 0.0;
            if (M_.diffusion) {
                Eigen::MatrixXd C = M_.alpha[0];
                for (std::size_t j = 1; j <= m; ++j) C += std::max(0.0, x[j - 1]) * M_.alpha[j];
                if (ie) cii = C(static_cast<Eigen::Index>(ie - 1), static_cast<Eigen::Index>(ie - 1));
                for (std::size_t k = 0; k < d; ++k) z[k] = normal(rng);
                const double sq = std::sqrt(dt);
                if (d == 1) {
                    dc[0] += std::sqrt(std::max(0.0, C(0, 0))) * z[0] * sq;
                } else {
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
                    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
                    const Eigen::VectorXd zz = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(d));
                    const Eigen::VectorXd inc = es.eigenvectors() * (ev.asDiagonal() * (es.eigenvectors().transpose() * zz));
                    for (std::size_t k = 0; k < d; ++k) dc[k] += inc(static_cast<Eigen::Index>(k)) * sq;
                }
            }

            // Jumps by thinning: the intensity is affine in the state, so along the
            // linear continuous path its maximum sits at an endpoint.
            std::fill(J.begin(), J.end(), 0.0);
            double tau = 0.0;
            std::vector<double> jump_integral(d, 0.0);
            for (;;) {
                state_at(tau);
                const double la = intensity(y);
                state_at(dt);
                const double bound = std::max(la, intensity(y));
                if (!(bound > 0.0)) break;
                const double hazard = bound * (dt - tau);
                if (clock > hazard) {
                    clock -= hazard;
                    break;
                }
                tau += clock / bound;
                clock = expo(rng);
                state_at(tau);
                const double lam = intensity(y);
                if (unif(rng) * bound > lam) continue;

                // Component of the mixture, then the mark.
                double pick = unif(rng) * lam;
                std::size_t j = 0;
                for (std::size_t c = 0; c <= m; ++c) {
                    const double w = c == 0 ? M_.samplers[0].mass : std::max(0.0, y[c - 1]) * M_.samplers[c].mass;
                    j = c;
                    if (pick < w) break;
                    pick -= w;
                }
                const MarkSampler& s = M_.samplers[j];
                const std::size_t a = pickers_[j](rng);
                std::vector<double> mark = s.marks[a];
                if (s.density) {
                    const double h = 1.0 / static_cast<double>(kDensityCells);
                    const double t = (static_cast<double>(a) + unif(rng)) * h;
                    std::vector<double> base;
                    s.density->density_point(s.x_of_s(std::min(t, 1.0 - 1e-16)), base, mark);
                }
                if (ie) {
                    const double f = 1.0 + mark[ie - 1];
                    if (!(f > 0.0))
                        throw SimulationError("jump of X^" + std::to_string(ie) + " at or below -1 on path " +
                                              std::to_string(path) + ": stochastic exponential is not positive");
                    out.log_e += std::log(f);
                }
                for (std::size_t k = 0; k < d; ++k) {
                    J[k] += mark[k];
                    jump_integral[k] += mark[k] * (dt - tau);
                }
                ++out.jumps;
                if (log) log->push_back({path, static_cast<double>(step) * dt + tau, j, mark});
            }

            for (std::size_t k = 0; k < d; ++k) {
                out.integrated[k] += x[k] * dt + 0.5 * dc[k] * dt + jump_integral[k];
                double nx = x[k] + dc[k] + J[k];
                double adj = 0.0;
                if (k < m && nx < 0.0) {
                    adj = -nx;
                    nx = 0.0;
                    ++out.clipped;
                }
                if (ie == k + 1) out.log_e += dc[k] + adj - 0.5 * cii * dt;
                x[k] = nx;
            }
            double norm = 0.0;
            for (double v : x) norm = std::max(norm, std::abs(v));
            if (!(norm <= cfg_.cap)) {
                out.exploded = true;
                break;
            }
        }
        out.terminal = x;
        return out;
    }

private:
    const Model& M_;
    const SimConfig& cfg_;
    std::vector<std::discrete_distribution<std::size_t>> pickers_;
};

}  // namespace

PathEnsemble simulate_paths(const AffineParams& params, const SimConfig& cfg) {
    if (cfg.paths < 1) throw std::invalid_argument("simulate_paths: paths must be >= 1");
    if (cfg.steps_per_unit < 1) throw std::invalid_argument("simulate_paths: steps must be >= 1");
    if (!(cfg.T > 0.0)) throw std::invalid_argument("simulate_paths: T must be positive");
    if (cfg.x0.size() != params.dim())
        throw std::invalid_argument("simulate_paths: x0 has " + std::to_string(cfg.x0.size()) + " entries, expected " +
                                    std::to_string(params.dim()));
    for (std::size_t k = 0; k < params.m; ++k)
        if (cfg.x0[k] < 0.0) throw std::invalid_argument("simulate_paths: x0 outside the state space");
    if (cfg.stoch_exp_component > params.dim())
        throw std::invalid_argument("simulate_paths: tracked component out of range");

    const Model M = build_model(params, cfg.series_atom_cap);
    const std::size_t N = cfg.paths, d = params.dim();
    PathEnsemble E;
    E.d = d;
    E.terminal.resize(N);
    E.integrated.resize(N);
    E.jump_counts.resize(N);
    E.exploded.resize(N);
    if (cfg.stoch_exp_component) E.log_stoch_exp.resize(N);
    for (const MarkSampler& s : M.samplers) E.untabulated_mass.push_back(s.untabulated);

    std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, N);
    std::vector<std::vector<JumpRecord>> logs(threads);
    std::vector<std::size_t> clipped(threads, 0);
    std::vector<std::exception_ptr> errors(threads);
    auto work = [&](std::size_t w) {
        try {
            PathSimulator sim(M, cfg);
            for (std::size_t p = w * N / threads; p < (w + 1) * N / threads; ++p) {
                PathOutput o = sim.run(p, cfg.record_jumps ? &logs[w] : nullptr);
                E.terminal[p] = std::move(o.terminal);
                E.integrated[p] = std::move(o.integrated);
                E.jump_counts[p] = o.jumps;
                E.exploded[p] = o.exploded;
                if (cfg.stoch_exp_component) E.log_stoch_exp[p] = o.log_e;
                clipped[w] += o.clipped;
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (auto& l : logs) E.jumps.insert(E.jumps.end(), l.begin(), l.end());

    E.clipped = std::accumulate(clipped.begin(), clipped.end(), std::size_t{0});
    E.total_steps = N * std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.T * static_cast<double>(cfg.steps_per_unit))));
    E.clip_warning = static_cast<double>(E.clipped) > 0.01 * static_cast<double>(E.total_steps);
    E.explosions = static_cast<std::size_t>(std::count(E.exploded.begin(), E.exploded.end(), 1));
    for (std::size_t k = 0; k < d; ++k) {
        std::vector<double> col(N);
        for (std::size_t p = 0; p < N; ++p) col[p] = E.terminal[p][k];
        const SampleStats s = stats_of(col);
        E.mean.push_back(s.mean);
        E.std_error.push_back(s.std_error);
    }
    return E;
}

SampleStats estimate_stoch_exp_mean(const AffineParams& params, std::size_t i, const SimConfig& cfg) {
    if (i < 1 || i > params.dim()) throw std::invalid_argument("estimate_stoch_exp_mean: component out of range");
    const Verdict pos = positivity_check(params, i);
    if (pos.is_fails())
        throw SimulationError("estimate_stoch_exp_mean: E(X^" + std::to_string(i) + ") is not positive");
    SimConfig c = cfg;
    c.stoch_exp_component = i;
    const PathEnsemble E = simulate_paths(params, c);
    std::vector<double> v(E.log_stoch_exp.size());
    // Killed paths contribute 0.
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = E.exploded[p] ? 0.0 : std::exp(E.log_stoch_exp[p]);
    return stats_of(v);
}

CFCheck empirical_cf_check(const AffineParams& params, const SimConfig& cfg,
                           const std::vector<std::vector<std::complex<double>>>& u_grid, double solver_tol) {
    const PathEnsemble E = simulate_paths(params, cfg);
    RContext ctx(params);
    CFCheck out;
    const std::size_t N = E.terminal.size(), d = params.dim();
    for (std::size_t g = 0; g < u_grid.size(); ++g) {
        const auto& u = u_grid[g];
        if (u.size() != d) throw std::invalid_argument("empirical_cf_check: grid point has wrong dimension");
        std::vector<double> re(N), im(N);
        for (std::size_t p = 0; p < N; ++p) {
            std::complex<double> s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += u[k] * E.terminal[p][k];
            const std::complex<double> v = E.exploded[p] ? 0.0 : std::exp(s);
            re[p] = v.real();
            im[p] = v.imag();
        }
        const SampleStats sr = stats_of(re), si = stats_of(im);
        CFPoint pt;
        pt.u = u;
        pt.empirical = {sr.mean, si.mean};
        pt.std_error = std::hypot(sr.std_error, si.std_error);
        FlowOptions fo;
        fo.times = {0.0, cfg.T};
        const FlowResult f = solve_flow(ctx, std::span<const cplx>(u), cfg.T, solver_tol, fo);
        std::complex<double> e = f.psi0.back();
        for (std::size_t k = 0; k < d; ++k) e += f.psi.back()[k] * cfg.x0[k];
        pt.model = std::exp(e);
        const double diff = std::abs(pt.empirical - pt.model);
        const double z = pt.std_error > 0.0 ? diff / pt.std_error : (diff > 1e-12 ? INFINITY : 0.0);
        out.max_abs_diff = std::max(out.max_abs_diff, diff);
        if (z >= out.max_z) {
            out.max_z = z;
            out.worst = g;
        }
        out.points.push_back(std::move(pt));
    }
    return out;
}

ExplosionEstimate detect_explosion(const AffineParams& params, SimConfig cfg, double cap) {
    cfg.cap = cap;
    cfg.stoch_exp_component = 0;
    const PathEnsemble E = simulate_paths(params, cfg);
    ExplosionEstimate r;
    r.paths = E.terminal.size();
    r.exploded = E.explosions;
    r.frequency = static_cast<double>(r.exploded) / static_cast<double>(r.paths);
    r.std_error = std::sqrt(r.frequency * (1.0 - r.frequency) / static_cast<double>(r.paths));
    return r;
}

AffineParams truncate_model(const AffineParams& params, std::size_t atoms, std::vector<std::size_t>* resolved) {
    check_dimensions(params);
    const std::size_t d = params.dim();
    std::vector<std::size_t> identities;
    for (std::size_t i = 1; i <= d; ++i)
        if (local_martingale_check(params, i).is_holds()) identities.push_back(i);

    AffineParams out = params;
    for (std::size_t j = 0; j <= d; ++j) {
        const JumpMeasure& mu = params.kappa[j];
        if (mu.kind() != JumpMeasure::Kind::SeriesAtomic) continue;
        std::vector<Atom> kept;
        for (std::size_t n = 1; n <= atoms; ++n) {
            const double w = mu.series_weight(static_cast<double>(n));
            if (w > 0.0) kept.push_back({mu.series_point(static_cast<double>(n)), w});
        }
        out.kappa[j] = JumpMeasure::finite(d, std::move(kept));
    }
    for (std::size_t i : identities)
        for (std::size_t j = 0; j <= d; ++j) {
            const JumpMeasure& mu = out.kappa[j];
            if (mu.kind() != JumpMeasure::Kind::FiniteAtomic) continue;
            double gap = 0.0;
            for (const Atom& a : mu.finite_atoms().atoms) gap += a.weight * (a.point[i - 1] - clamp_unit(a.point[i - 1]));
            out.beta[j](static_cast<Eigen::Index>(i - 1)) = -gap;
        }
    if (resolved) *resolved = identities;
    return out;
}

nlohmann::json to_json(const PathEnsemble& e) {
    return {{"paths", e.terminal.size()},
            {"mean", e.mean},
            {"std_error", e.std_error},
            {"explosions", e.explosions},
            {"clipped", e.clipped},
            {"clip_warning", e.clip_warning},
            {"total_steps", e.total_steps},
            {"untabulated_mass", e.untabulated_mass},
            {"jumps", std::accumulate(e.jump_counts.begin(), e.jump_counts.end(), std::size_t{0})}};
}

}  // namespace affmart
