#include "affmart/conservativeness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "numerics.hpp"

namespace affmart {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

std::vector<double> restricted_point(const RContext& ctx, double u1) {
    std::vector<double> u(ctx.d(), 0.0);
    u[0] = u1;
    return u;
}

bool all_gamma_zero(const AffineParams& p) {
    return std::all_of(p.gamma.begin(), p.gamma.end(), [](double g) { return g == 0.0; });
}

// Minimal solution outcome against the zero threshold.
Verdict classify_minimal(const MinimalSolution& ms, const ConservativenessOptions& opts) {
    const std::string crit = "minimal_solution";
    std::vector<Evidence> ev{{"sup |psi_I(t,0)| on [0," + fmt(opts.horizon) + "] (" +
                                  to_string(ms.method) + ")",
                              ms.sup_abs, opts.zero_threshold},
                             {"convergence error", ms.convergence_error, 0.0}};
    if (!ms.note.empty()) ev.push_back({ms.note, 0.0, 0.0});
    if (ms.converged() && ms.sup_abs <= opts.zero_threshold) return Verdict::holds(crit, ev);
    if (ms.sup_abs > opts.zero_threshold && ms.sup_abs >= opts.separation_factor * ms.convergence_error)
        return Verdict::fails(crit, ev);
    return Verdict::inconclusive(crit, ev);
}

}  // namespace

Verdict necessary_gamma_check(const AffineParams& params) {
    std::vector<Evidence> ev;
    for (std::size_t j = 0; j < params.gamma.size(); ++j)
        if (params.gamma[j] != 0.0) ev.push_back({"gamma_" + std::to_string(j) + " != 0", params.gamma[j], 0.0});
    if (ev.empty()) return Verdict::holds("gamma_zero", {{"all gamma_j = 0", 0.0, 0.0}});
    return Verdict::fails("gamma_zero", ev);
}

std::vector<std::vector<Verdict>> moment_check_matrix(const AffineParams& params, double tol) {
    const std::size_t m = params.m;
    std::vector<std::vector<Verdict>> out(m);
    for (std::size_t j = 1; j <= m; ++j)
        for (std::size_t k = 1; k <= m; ++k) {
            Verdict v = classify_moment(params.kappa[j], MomentKind::wedge(k), tol);
            v.criterion = "moment:kappa_" + std::to_string(j) + ":" + MomentKind::wedge(k).name();
            out[j - 1].push_back(std::move(v));
        }
    return out;
}

Verdict sufficient_moment_check(const AffineParams& params, double tol) {
    const auto matrix = moment_check_matrix(params, tol);
    std::vector<Outcome> outcomes;
    std::vector<Evidence> ev;
    for (const auto& row : matrix)
        for (const Verdict& v : row) {
            outcomes.push_back(v.outcome);
            if (!v.is_holds() || v.evidence.empty())
                ev.push_back({v.criterion + ": " + to_string(v.outcome), 0.0, tol});
            else
                ev.push_back({v.criterion + ": " + v.evidence.front().description, v.evidence.front().value, tol});
        }
    if (params.m == 0) ev.push_back({"m = 0: no moment conditions", 0.0, tol});
    switch (combine_all(outcomes)) {
        case Outcome::Holds: return Verdict::holds("sufficient_moment", ev);
        case Outcome::Fails: return Verdict::fails("sufficient_moment", ev);
        case Outcome::Inconclusive: break;
    }
    return Verdict::inconclusive("sufficient_moment", ev);
}

Verdict osgood_check(const RContext& ctx, const OsgoodOptions& opts, OsgoodTrace* trace) {
    const std::string crit = "osgood";
    if (ctx.m() != 1)
        throw NotApplicable("osgood_check: requires m = 1, got m = " + std::to_string(ctx.m()));
    if (!all_gamma_zero(ctx.params()))
        return Verdict::inconclusive(crit, {{"gamma != 0: R_1(0) != 0, the dichotomy does not apply", 0.0, 0.0}});
    if (opts.levels < 2 * opts.cauchy_window || opts.levels < 8)
        throw std::invalid_argument("osgood_check: too few levels");

    auto R = [&](double u) {
        const auto p = restricted_point(ctx, u);
        return ctx.R_real(1, std::span<const double>(p));
    };

    // Sign of R_1 on the dyadic endpoints.
    std::size_t neg = 0, pos = 0, zero = 0;
    for (std::size_t k = 0; k <= opts.levels; ++k) {
        const double r = R(-std::ldexp(opts.delta, -static_cast<int>(k)));
        if (r < 0.0) ++neg;
        else if (r > 0.0) ++pos;
        else ++zero;
    }
    if (neg == 0)
        return Verdict::holds(crit, {{"R_1(u,0) >= 0 left of 0: no solution leaves 0", 0.0, 0.0}});
    if (pos > 0 || zero > 0)
        return Verdict::inconclusive(
            crit, {{"R_1(u,0) changes sign on the left neighborhood of 0", static_cast<double>(pos), 0.0}});

    // Dyadic pieces a_k = |integral of 1/R over [-delta 2^{1-k}, -delta 2^{-k}]|.
    std::vector<double> pieces, partial, ends;
    double acc = 0.0;
    for (std::size_t k = 1; k <= opts.levels; ++k) {
        const double hi = -std::ldexp(opts.delta, -static_cast<int>(k));
        // In s = ln(-u) the integrand e^s / R(-e^s) is nearly flat.
        const double s0 = std::log(-hi);
        const auto q = detail::integrate_finite(
            [&](double s) { return std::exp(s) / R(-std::exp(s)); }, s0, s0 + std::log(2.0), 1e-10, 0.0);
        if (!q.ok || !std::isfinite(q.value))
            return Verdict::inconclusive(crit, {{"quadrature of 1/R_1 failed on level " + std::to_string(k),
                                                 q.value, q.error}});
        pieces.push_back(std::abs(q.value));
        acc += q.value;
        partial.push_back(acc);
        ends.push_back(hi);
    }
    const std::size_t K = pieces.size();
    const double q_half = std::log2(pieces[K / 2 - 1] / pieces[K - 1]);
    const double q_quarter = std::log(pieces[(3 * K) / 4 - 1] / pieces[K - 1]) / std::log(4.0 / 3.0);
    const double decay = std::max(q_half, q_quarter);
    if (trace) {
        trace->endpoints = ends;
        trace->partial_integrals = partial;
        trace->decay_exponent = decay;
    }

    const double cauchy = std::abs(partial[K - 1] - partial[K - 1 - opts.cauchy_window]);
    const double ratio = std::pow(pieces[K - 1] / pieces[K - 1 - opts.cauchy_window],
                                  1.0 / static_cast<double>(opts.cauchy_window));
    const double tail = ratio < 1.0 ? pieces[K - 1] * ratio / (1.0 - ratio) : kInf;
    std::vector<Evidence> ev{
        {"partial integral to -delta*2^-" + std::to_string(K), partial[K - 1], 0.0},
        {"dyadic piece decay exponent (1 = harmonic borderline)", decay, opts.divergent_exponent},
        {"change over the last " + std::to_string(opts.cauchy_window) + " levels", cauchy, opts.cauchy_tol},
        {"geometric tail estimate", tail, opts.cauchy_tol}};

    if (decay <= opts.divergent_exponent) return Verdict::holds(crit, ev);
    if (cauchy <= opts.cauchy_tol && tail <= opts.cauchy_tol) return Verdict::fails(crit, ev);
    return Verdict::inconclusive(crit, ev);
}

Verdict osgood_check(const AffineParams& params, const OsgoodOptions& opts) {
    RContext ctx(params);
    return osgood_check(ctx, opts);
}

ConservativenessReport conservativeness_verdict(const AffineParams& params,
                                                const ConservativenessOptions& opts) {
    for (const Violation& v : validate_admissibility(params))
        if (!v.inconclusive)
            throw std::invalid_argument("conservativeness_verdict: parameters are not admissible (" + v.rule +
                                        ": " + v.message + ")");

    ConservativenessReport rep;
    rep.zero_threshold = opts.zero_threshold;
    rep.gamma_check = necessary_gamma_check(params);
    rep.moment_check = moment_check_matrix(params, opts.moment_tol);
    rep.moment_overall = sufficient_moment_check(params, opts.moment_tol);

    std::optional<Verdict> decided;
    rep.decision_path.push_back("gamma_zero: " + std::string(to_string(rep.gamma_check.outcome)));
    if (rep.gamma_check.is_fails()) {
        decided = Verdict::fails("conservative", {{"gamma != 0 forces killing", 0.0, 0.0}});
    }
    if (!decided && params.m == 0) {
        decided = Verdict::holds("conservative", {{"m = 0 and gamma = 0: psi_0(t,0) = 0", 0.0, 0.0}});
        rep.decision_path.push_back("m = 0: no restricted system");
    }
    if (!decided) {
        rep.decision_path.push_back("sufficient_moment: " + std::string(to_string(rep.moment_overall.outcome)));
        if (rep.moment_overall.is_holds())
            decided = Verdict::holds("conservative", {{"moment condition holds for all j, k <= m", 0.0, 0.0}});
    }

    std::optional<RContext> ctx;
    if (!rep.gamma_check.is_fails() && params.m >= 1) ctx.emplace(params);

    if (ctx && params.m == 1) {
        try {
            rep.osgood = osgood_check(*ctx, opts.osgood);
        } catch (const std::exception& e) {
            rep.osgood = Verdict::inconclusive("osgood", {{std::string("error: ") + e.what(), 0.0, 0.0}});
        }
        if (!decided) {
            rep.decision_path.push_back("osgood: " + std::string(to_string(rep.osgood->outcome)));
            if (rep.osgood->is_holds())
                decided = Verdict::holds("conservative", {{"integral of 1/R_1 diverges at 0-", 0.0, 0.0}});
            else if (rep.osgood->is_fails())
                decided = Verdict::fails("conservative", {{"integral of 1/R_1 converges at 0-", 0.0, 0.0}});
        }
    }

    std::optional<Verdict> minimal_verdict;
    if (ctx && (!decided || opts.always_minimal)) {
        MinimalSolutionSummary sum;
        sum.horizon = opts.horizon;
        try {
            MinimalSolutionOptions mo = opts.minimal;
            mo.zero_level = opts.zero_threshold;
            MinimalSolution ms = minimal_solution_zero(*ctx, opts.horizon, mo);
            sum.sup_abs = ms.sup_abs;
            sum.convergence_error = ms.convergence_error;
            sum.method = to_string(ms.method);
            sum.note = ms.note;
            sum.converged = ms.converged();
            minimal_verdict = classify_minimal(ms, opts);
            rep.minimal = std::move(ms);
        } catch (const std::exception& e) {
            sum.sup_abs = std::numeric_limits<double>::quiet_NaN();
            sum.convergence_error = kInf;
            sum.method = "error";
            sum.note = e.what();
            minimal_verdict = Verdict::inconclusive("minimal_solution", {{std::string("solver error: ") + e.what(),
                                                                          0.0, 0.0}});
        }
        rep.minimal_solution = sum;
        if (!decided) {
            rep.decision_path.push_back("minimal_solution: " + std::string(to_string(minimal_verdict->outcome)));
            Verdict v = *minimal_verdict;
            v.criterion = "conservative";
            decided = v;
        }
    }

    if (!decided) {
        decided = Verdict::inconclusive("conservative", {{"no criterion decided", 0.0, 0.0}});
    }
    rep.overall = *decided;

    // A resolved nonzero minimal solution is a witness of non-conservativeness.
    if (minimal_verdict && minimal_verdict->is_fails() && !rep.overall.is_fails()) {
        rep.overall = Verdict::fails("conservative", minimal_verdict->evidence);
        rep.decision_path.push_back("minimal_solution: Fails (overrides earlier criterion)");
    } else if (minimal_verdict && minimal_verdict->is_holds() && rep.overall.is_fails() &&
               rep.gamma_check.is_holds()) {
        rep.overall = Verdict::inconclusive(
            "conservative", {{"minimal solution is zero but an earlier criterion failed", 0.0, 0.0}});
        rep.decision_path.push_back("conflict: minimal_solution Holds");
    }
    return rep;
}

nlohmann::json to_json(const ConservativenessReport& r) {
    using nlohmann::json;
    json out;
    out["overall"] = to_json(r.overall);
    out["gamma_check"] = to_json(r.gamma_check);
    json mm = json::array();
    for (const auto& row : r.moment_check) {
        json jr = json::array();
        for (const Verdict& v : row) jr.push_back(to_json(v));
        mm.push_back(jr);
    }
    out["moment_check"] = mm;
    out["moment_overall"] = to_json(r.moment_overall);
    out["osgood"] = r.osgood ? to_json(*r.osgood) : json("NotApplicable");
    if (r.minimal_solution) {
        const auto& s = *r.minimal_solution;
        out["minimal_solution"] = {{"horizon", s.horizon},
                                   {"sup_abs", std::isfinite(s.sup_abs) ? json(s.sup_abs) : json("nan")},
                                   {"convergence_error",
                                    std::isfinite(s.convergence_error) ? json(s.convergence_error) : json("inf")},
                                   {"method", s.method},
                                   {"note", s.note},
                                   {"zero_threshold", r.zero_threshold}};
    } else {
        out["minimal_solution"] = nullptr;
    }
    out["decision_path"] = r.decision_path;
    return out;
}

std::vector<double> survival_curve(const MinimalSolution& minimal, std::span<const double> x) {
    const FlowResult& f = minimal.limit;
    std::vector<double> out;
    for (std::size_t t = 0; t < f.times.size(); ++t) {
        double e = f.psi0[t].real();
        for (std::size_t k = 0; k < x.size() && k < f.psi[t].size(); ++k) e += f.psi[t][k].real() * x[k];
        out.push_back(std::min(1.0, std::exp(e)));
    }
    return out;
}

double survival_probability(const AffineParams& params, std::span<const double> x, double t,
                            const MinimalSolutionOptions& opts) {
    if (!all_gamma_zero(params)) throw std::runtime_error("survival_probability: requires gamma = 0");
    if (x.size() != params.dim()) throw std::invalid_argument("survival_probability: x has wrong dimension");
    for (std::size_t k = 0; k < params.m; ++k)
        if (x[k] < 0.0) throw std::invalid_argument("survival_probability: x outside the state space");
    if (params.m == 0 || t == 0.0) return 1.0;
    RContext ctx(params);
    const MinimalSolution ms = minimal_solution_zero(ctx, t, opts);
    if (!ms.converged())
        throw std::runtime_error("survival_probability: minimal solution did not converge (" + ms.note + ")");
    return survival_curve(ms, x.subspan(0, params.m)).back();
}

}  // namespace affmart
