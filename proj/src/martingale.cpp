#include "affmart/martingale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "affmart/spec_io.hpp"

namespace affmart {

namespace {

constexpr double kIntegralTol = 1e-10;
// Series positivity scan: every atom up to this index, then dyadic probes.
constexpr std::size_t kSeriesScan = std::size_t{1} << 16;
constexpr int kSeriesProbeLast = 60;

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

double clamp_unit(double x) { return std::max(-1.0, std::min(1.0, x)); }

void check_component(const AffineParams& p, std::size_t i, const char* who) {
    if (i < 1 || i > p.dim())
        throw std::invalid_argument(std::string(who) + ": component " + std::to_string(i) + " outside 1.." +
                                    std::to_string(p.dim()));
}

// Coordinate k (0-based) of a series or density measure as expression source.
std::string coordinate_source(const JumpMeasure& mu, std::size_t k) {
    if (mu.kind() == JumpMeasure::Kind::SeriesAtomic) return "(" + mu.atom_series().point_exprs[k].source() + ")";
    const auto& dm = mu.density_measure();
    if (k < dm.domain.size()) return "xi" + std::to_string(k + 1);
    return "(" + dm.extra_coords[k - dm.domain.size()].source() + ")";
}

// Growth exponent g of |f(n)| ~ C n^g at large n, snapped to integers.
double series_growth(const std::function<double(double)>& f, double& coeff) {
    const double a = std::ldexp(1.0, 50), b = std::ldexp(1.0, 51);
    const double fa = std::abs(f(a)), fb = std::abs(f(b));
    if (!(std::isfinite(fa) && std::isfinite(fb)) || fa == 0.0 || fb == 0.0) {
        coeff = std::numeric_limits<double>::quiet_NaN();
        return std::numeric_limits<double>::infinity();
    }
    double g = std::log2(fb / fa);
    if (std::abs(g - std::round(g)) < 1e-6) g = std::round(g);
    coeff = fb / std::pow(b, g);
    return g;
}

double density_growth(const JumpMeasure& mu, const std::function<double(std::span<const double>)>& f) {
    const auto& dm = mu.density_measure();
    const Interval iv = dm.domain[dm.free_coordinate()];
    const double dir = std::isinf(iv.hi) ? 1.0 : (std::isinf(iv.lo) ? -1.0 : 0.0);
    if (dir == 0.0) return 0.0;
    std::vector<double> base, full;
    mu.density_point(dir * std::ldexp(1.0, 40), base, full);
    const double fa = std::abs(f(full));
    mu.density_point(dir * std::ldexp(1.0, 41), base, full);
    const double fb = std::abs(f(full));
    if (!(std::isfinite(fa) && std::isfinite(fb)) || fa == 0.0 || fb == 0.0)
        return std::numeric_limits<double>::infinity();
    double g = std::log2(fb / fa);
    if (std::abs(g - std::round(g)) < 1e-6) g = std::round(g);
    return g;
}

// Integral of f against mu or an exception naming `what`.
double resolved_integral(const JumpMeasure& mu, const PointFunction& f, const std::string& what) {
    if (mu.is_zero()) return 0.0;
    IntegrationOptions io;
    io.tol = kIntegralTol;
    const IntegralResult r = integrate(mu, f, io);
    if (r.status == IntegralResult::Status::Divergent)
        throw std::runtime_error(what + " diverges (" + r.note + ")");
    if (!r.finite()) throw std::runtime_error(what + " could not be resolved (" + r.note + ")");
    return r.value;
}

// Image of mu under xi -> (xi, g(xi)); `g_source` is the new coordinate as an
// expression in mu's own variables.
JumpMeasure append_coordinate(const JumpMeasure& mu, const std::function<double(std::span<const double>)>& g,
                              const std::function<std::string(const JumpMeasure&)>& g_source) {
    const std::size_t d = mu.dim();
    switch (mu.kind()) {
        case JumpMeasure::Kind::FiniteAtomic: {
            std::vector<Atom> atoms;
            for (const Atom& a : mu.finite_atoms().atoms) {
                Atom b = a;
                b.point.push_back(g(a.point));
                if (!std::isfinite(b.point.back()))
                    throw std::runtime_error("lifted coordinate is not finite at an atom");
                atoms.push_back(std::move(b));
            }
            return JumpMeasure::finite(d + 1, std::move(atoms));
        }
        case JumpMeasure::Kind::SeriesAtomic: {
            const auto& s = mu.atom_series();
            std::vector<Expr> pts = s.point_exprs;
            pts.push_back(Expr::parse(g_source(mu)));
            return JumpMeasure::series(std::move(pts), s.weight_expr, s.tail, s.truncation_tol);
        }
        case JumpMeasure::Kind::Density: {
            const auto& dm = mu.density_measure();
            std::vector<Expr> extra = dm.extra_coords;
            extra.push_back(Expr::parse(g_source(mu)));
            return JumpMeasure::density(dm.density_expr, dm.domain, dm.tail_exponent_at_zero,
                                        dm.tail_exponent_at_infinity, dm.quadrature_tol, std::move(extra));
        }
    }
    throw std::logic_error("unreachable");
}

// Shared frame of both lifts: alpha block extension by the column vector v,
// beta extension by `extra_beta`, kappa image, component d+1 zero.
AffineParams lift_frame(const AffineParams& p, const Eigen::VectorXd& v,
                        const std::vector<double>& extra_beta, std::vector<JumpMeasure> kappa) {
    const std::size_t d = p.dim();
    AffineParams out;
    out.m = p.m;
    out.n = p.n + 1;
    for (std::size_t j = 0; j <= d + 1; ++j) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d + 1, d + 1);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(d + 1);
        if (j <= d) {
            const Eigen::MatrixXd& al = p.alpha[j];
            a.topLeftCorner(d, d) = al;
            a.topRightCorner(d, 1) = al * v;
            a.bottomLeftCorner(1, d) = (al * v).transpose();
            a(d, d) = v.dot(al * v);
            b.head(d) = p.beta[j];
            b(d) = extra_beta[j];
        }
        out.alpha.push_back(a);
        out.beta.push_back(b);
        out.gamma.push_back(j <= d ? p.gamma[j] : 0.0);
        out.kappa.push_back(j <= d ? std::move(kappa[j]) : JumpMeasure::zero(d + 1));
    }
    return out;
}

}  // namespace

std::string MartingaleForm::describe() const {
    switch (kind) {
        case Kind::StochasticExp: return "stochastic_exp(" + std::to_string(component) + ")";
        case Kind::OrdinaryExp: return "ordinary_exp(" + std::to_string(component) + ")";
        case Kind::AffineFunctional: {
            std::string s = "affine_functional(p=" + fmt(p) + ", P=(";
            for (std::size_t k = 0; k < P.size(); ++k) s += (k ? ", " : "") + fmt(P[k]);
            return s + "))";
        }
    }
    return "?";
}

Verdict positivity_check(const AffineParams& params, std::size_t i) {
    check_component(params, i, "positivity_check");
    const std::string crit = "positivity(" + std::to_string(i) + ")";
    const std::size_t k = i - 1;
    std::vector<Evidence> ev;
    bool inconclusive = false;
    for (std::size_t j = 0; j < params.kappa.size(); ++j) {
        const JumpMeasure& mu = params.kappa[j];
        const std::string name = "kappa_" + std::to_string(j);
        switch (mu.kind()) {
            case JumpMeasure::Kind::FiniteAtomic: {
                const auto& atoms = mu.finite_atoms().atoms;
                for (std::size_t a = 0; a < atoms.size(); ++a)
                    if (atoms[a].point[k] < -1.0)
                        return Verdict::fails(crit, {{name + " atom " + std::to_string(a) + " has xi_" +
                                                          std::to_string(i) + " < -1",
                                                      atoms[a].point[k], -1.0}});
                break;
            }
            case JumpMeasure::Kind::SeriesAtomic: {
                const Expr& e = mu.atom_series().point_exprs[k];
                auto bad = [&](double n) { return e.eval_index(n) < -1.0 && mu.series_weight(n) > 0.0; };
                for (std::size_t n = 1; n <= kSeriesScan; ++n)
                    if (bad(static_cast<double>(n)))
                        return Verdict::fails(crit, {{name + " series atom n=" + std::to_string(n) + " has xi_" +
                                                          std::to_string(i) + " < -1",
                                                      e.eval_index(static_cast<double>(n)), -1.0}});
                for (int p = 17; p <= kSeriesProbeLast; ++p)
                    if (bad(std::ldexp(1.0, p)))
                        return Verdict::fails(crit, {{name + " series atom n=2^" + std::to_string(p) +
                                                          " has xi_" + std::to_string(i) + " < -1",
                                                      e.eval_index(std::ldexp(1.0, p)), -1.0}});
                ev.push_back({name + ": atoms n <= " + std::to_string(kSeriesScan) +
                                  " and dyadic probes to 2^" + std::to_string(kSeriesProbeLast) + " have xi_" +
                                  std::to_string(i) + " >= -1",
                              0.0, -1.0});
                break;
            }
            case JumpMeasure::Kind::Density: {
                const auto& dm = mu.density_measure();
                const std::size_t fc = dm.free_coordinate();
                const Interval iv = dm.domain[fc];
                if (k == fc && iv.lo >= -1.0) break;
                if (k < dm.domain.size() && k != fc) {
                    if (dm.domain[k].lo < -1.0)
                        return Verdict::fails(crit, {{name + " is supported on xi_" + std::to_string(i) + " = " +
                                                          fmt(dm.domain[k].lo),
                                                      dm.domain[k].lo, -1.0}});
                    break;
                }
                // Probe the free coordinate for positive density with xi_i < -1.
                std::vector<double> base, full;
                bool seen_positive_below = false;
                double witness = 0.0;
                for (int p = -30; p <= 40 && !seen_positive_below; ++p)
                    for (double sgn : {1.0, -1.0}) {
                        const double x = sgn * std::ldexp(1.0, p);
                        if (x <= iv.lo || x >= iv.hi) continue;
                        mu.density_point(x, base, full);
                        if (full[k] < -1.0 && dm.density_expr.eval_point(base) > 0.0) {
                            seen_positive_below = true;
                            witness = full[k];
                            break;
                        }
                    }
                if (seen_positive_below)
                    return Verdict::fails(crit, {{name + " has density mass where xi_" + std::to_string(i) + " < -1",
                                                  witness, -1.0}});
                if (k == fc) {
                    inconclusive = true;
                    ev.push_back({name + ": domain extends below -1 but no positive density was found there",
                                  iv.lo, -1.0});
                } else {
                    ev.push_back({name + ": derived coordinate xi_" + std::to_string(i) +
                                      " stays >= -1 on the probe grid",
                                  0.0, -1.0});
                }
                break;
            }
        }
    }
    if (inconclusive) return Verdict::inconclusive(crit, ev);
    ev.insert(ev.begin(), {"no kappa_j charges {xi_" + std::to_string(i) + " < -1}", 0.0, -1.0});
    return Verdict::holds(crit, ev);
}

Verdict local_martingale_check(const AffineParams& params, std::size_t i, double tol,
                               std::vector<DriftResidual>* residuals) {
    check_component(params, i, "local_martingale_check");
    const std::string crit = "local_martingale(" + std::to_string(i) + ")";
    std::vector<Outcome> outcomes;
    std::vector<Evidence> ev;
    std::vector<DriftResidual> res;
    const MomentKind gap = MomentKind::compensator_gap(i);
    for (std::size_t j = 0; j < params.kappa.size(); ++j) {
        const JumpMeasure& mu = params.kappa[j];
        const std::string name = "kappa_" + std::to_string(j);
        Verdict big = mu.is_zero() ? Verdict::holds("", {}) : classify_moment(mu, MomentKind::big_jump_abs(i), kIntegralTol);
        outcomes.push_back(big.outcome);
        if (!big.is_holds())
            ev.push_back({name + ": " + (big.evidence.empty() ? std::string("large jumps") : big.evidence[0].description),
                          big.evidence.empty() ? 0.0 : big.evidence[0].value, kIntegralTol});

        DriftResidual r;
        r.j = j;
        const double b = params.beta[j](static_cast<Eigen::Index>(i - 1));
        if (mu.is_zero()) {
            r.value = b;
            r.resolved = true;
        } else if (big.is_holds()) {
            IntegrationOptions io;
            io.tol = kIntegralTol;
            const IntegralResult g = integrate(mu, gap.integrand(), io);
            r.value = b + g.value;
            r.error_bound = g.error_bound;
            r.resolved = g.finite();
        }
        res.push_back(r);
        const std::string lbl = "drift residual j=" + std::to_string(j);
        if (!r.resolved) {
            if (big.is_holds()) {
                outcomes.push_back(Outcome::Inconclusive);
                ev.push_back({lbl + " unresolved", r.value, tol});
            }
            continue;
        }
        if (std::abs(r.value) <= tol) {
            outcomes.push_back(Outcome::Holds);
            ev.push_back({lbl, r.value, tol});
        } else if (std::abs(r.value) - r.error_bound > tol) {
            outcomes.push_back(Outcome::Fails);
            ev.push_back({lbl + " violates the drift identity", r.value, tol});
        } else {
            outcomes.push_back(Outcome::Inconclusive);
            ev.push_back({lbl + " within its error bound of the tolerance", r.value, tol});
        }
    }
    if (residuals) *residuals = res;
    switch (combine_all(outcomes)) {
        case Outcome::Holds: return Verdict::holds(crit, ev);
        case Outcome::Fails: return Verdict::fails(crit, ev);
        case Outcome::Inconclusive: break;
    }
    return Verdict::inconclusive(crit, ev);
}

AffineParams star_transform(const AffineParams& params, std::size_t i) {
    check_component(params, i, "star_transform");
    check_dimensions(params);
    const std::size_t d = params.dim(), k = i - 1;
    AffineParams out = params;
    for (std::size_t j = 0; j <= d; ++j) {
        const JumpMeasure& mu = params.kappa[j];
        out.gamma[j] = 0.0;
        Eigen::VectorXd b = params.beta[j] + params.alpha[j].col(static_cast<Eigen::Index>(k));
        for (std::size_t c = 0; c < d; ++c) {
            auto f = [k, c](std::span<const double> xi) { return xi[k] * clamp_unit(xi[c]); };
            b(static_cast<Eigen::Index>(c)) +=
                resolved_integral(mu, f, "integral of xi_" + std::to_string(i) + " h_" + std::to_string(c + 1) +
                                             " against kappa_" + std::to_string(j));
        }
        out.beta[j] = b;

        switch (mu.kind()) {
            case JumpMeasure::Kind::FiniteAtomic: {
                std::vector<Atom> atoms;
                for (const Atom& a : mu.finite_atoms().atoms) {
                    const double f = 1.0 + a.point[k];
                    if (f < 0.0)
                        throw std::invalid_argument("star_transform: kappa_" + std::to_string(j) +
                                                    " has an atom with xi_" + std::to_string(i) + " < -1");
                    if (f == 0.0) continue;
                    atoms.push_back({a.point, a.weight * f});
                }
                out.kappa[j] = JumpMeasure::finite(d, std::move(atoms));
                break;
            }
            case JumpMeasure::Kind::SeriesAtomic: {
                const auto& s = mu.atom_series();
                const Expr& pe = s.point_exprs[k];
                double coeff = 0.0;
                const double g = series_growth([&](double n) { return 1.0 + pe.eval_index(n); }, coeff);
                TailDecay tail{s.tail.c * coeff, s.tail.p - g};
                Expr w = Expr::parse("(" + s.weight_expr.source() + ")*(1+" + coordinate_source(mu, k) + ")");
                try {
                    out.kappa[j] = JumpMeasure::series(s.point_exprs, std::move(w), tail, s.truncation_tol);
                } catch (const MeasureError& e) {
                    throw std::invalid_argument("star_transform: reweighted kappa_" + std::to_string(j) +
                                                " is not a valid series measure (" + e.what() + ")");
                }
                break;
            }
            case JumpMeasure::Kind::Density: {
                const auto& dm = mu.density_measure();
                const double g = density_growth(mu, [k](std::span<const double> xi) { return 1.0 + xi[k]; });
                Expr dens = Expr::parse("(" + dm.density_expr.source() + ")*(1+" + coordinate_source(mu, k) + ")");
                try {
                    out.kappa[j] = JumpMeasure::density(std::move(dens), dm.domain, dm.tail_exponent_at_zero,
                                                        dm.tail_exponent_at_infinity + g, dm.quadrature_tol,
                                                        dm.extra_coords);
                } catch (const MeasureError& e) {
                    throw std::invalid_argument("star_transform: reweighted kappa_" + std::to_string(j) +
                                                " has negative density (" + e.what() + ")");
                }
                break;
            }
        }
    }
    return out;
}

AffineParams exp_lift(const AffineParams& params, std::size_t i) {
    check_component(params, i, "exp_lift");
    check_dimensions(params);
    const std::size_t d = params.dim(), k = i - 1;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    v(static_cast<Eigen::Index>(k)) = 1.0;
    std::vector<double> extra_beta;
    std::vector<JumpMeasure> kappa;
    for (std::size_t j = 0; j <= d; ++j) {
        const JumpMeasure& mu = params.kappa[j];
        auto corr = [k](std::span<const double> xi) { return clamp_unit(std::expm1(xi[k])) - clamp_unit(xi[k]); };
        const double c = resolved_integral(mu, corr, "exp-lift correction for kappa_" + std::to_string(j));
        const auto ki = static_cast<Eigen::Index>(k);
        extra_beta.push_back(params.beta[j](ki) + 0.5 * params.alpha[j](ki, ki) + c);
        kappa.push_back(append_coordinate(
            mu, [k](std::span<const double> xi) { return std::expm1(xi[k]); },
            [k](const JumpMeasure& m) { return "exp(" + coordinate_source(m, k) + ")-1"; }));
    }
    return lift_frame(params, v, extra_beta, std::move(kappa));
}

AffineParams functional_lift(const AffineParams& params, double p, const std::vector<double>& P) {
    (void)p;  // A(X) and A(X) - p have the same stochastic exponential
    check_dimensions(params);
    const std::size_t d = params.dim();
    if (P.size() != d)
        throw std::invalid_argument("functional_lift: P has " + std::to_string(P.size()) + " entries, expected " +
                                    std::to_string(d));
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(P.data(), static_cast<Eigen::Index>(d));
    auto dot = [&P](std::span<const double> xi) {
        double s = 0.0;
        for (std::size_t c = 0; c < P.size(); ++c) s += P[c] * xi[c];
        return s;
    };
    std::vector<double> extra_beta;
    std::vector<JumpMeasure> kappa;
    for (std::size_t j = 0; j <= d; ++j) {
        const JumpMeasure& mu = params.kappa[j];
        auto corr = [&](std::span<const double> xi) {
            double s = 0.0;
            for (std::size_t c = 0; c < P.size(); ++c) s += P[c] * clamp_unit(xi[c]);
            return clamp_unit(dot(xi)) - s;
        };
        const double c = resolved_integral(mu, corr, "functional-lift correction for kappa_" + std::to_string(j));
        extra_beta.push_back(v.dot(params.beta[j]) + c);
        kappa.push_back(append_coordinate(mu, dot, [&P](const JumpMeasure& m) {
            std::ostringstream os;
            os.precision(17);
            os << "0";
            for (std::size_t c = 0; c < P.size(); ++c)
                if (P[c] != 0.0) os << "+(" << P[c] << ")*" << coordinate_source(m, c);
            return os.str();
        }));
    }
    return lift_frame(params, v, extra_beta, std::move(kappa));
}

MartingaleReport martingale_verdict(const AffineParams& params, const MartingaleForm& form,
                                    const MartingaleOptions& opts) {
    MartingaleReport rep;
    rep.form = form;
    const AffineParams* target = &params;
    switch (form.kind) {
        case MartingaleForm::Kind::StochasticExp:
            check_component(params, form.component, "martingale_verdict");
            rep.component = form.component;
            break;
        case MartingaleForm::Kind::OrdinaryExp:
            check_component(params, form.component, "martingale_verdict");
            rep.lifted = exp_lift(params, form.component);
            rep.component = params.dim() + 1;
            target = &*rep.lifted;
            break;
        case MartingaleForm::Kind::AffineFunctional:
            rep.lifted = functional_lift(params, form.p, form.P);
            rep.component = params.dim() + 1;
            target = &*rep.lifted;
            break;
    }
    const std::size_t i = rep.component;

    rep.positivity = positivity_check(*target, i);
    rep.local_mart = local_martingale_check(*target, i, opts.drift_tol, &rep.drift_residuals);
    if (!rep.positivity.is_holds() || !rep.local_mart.is_holds())
        rep.notes.push_back("star transform computed although its hypotheses do not hold");

    std::optional<Verdict> star_stage;
    try {
        rep.star_params = star_transform(*target, i);
        rep.star_admissibility = validate_admissibility(*rep.star_params);
        bool definite = false;
        for (const Violation& v : rep.star_admissibility) definite = definite || !v.inconclusive;
        if (definite) {
            star_stage = Verdict::inconclusive("star_conservative",
                                               {{"star parameters are not admissible: " +
                                                     rep.star_admissibility.front().message,
                                                 rep.star_admissibility.front().quantity, 0.0}});
        } else {
            rep.star_conservative = conservativeness_verdict(*rep.star_params, opts.conservativeness);
            star_stage = rep.star_conservative->overall;
        }
    } catch (const std::exception& e) {
        rep.notes.push_back(std::string("star stage: ") + e.what());
        star_stage = Verdict::inconclusive("star_conservative", {{std::string("star stage error: ") + e.what(), 0.0, 0.0}});
    }

    const Outcome o = combine_all({rep.positivity.outcome, rep.local_mart.outcome, star_stage->outcome});
    std::vector<Evidence> ev{{"positivity: " + std::string(to_string(rep.positivity.outcome)), 0.0, 0.0},
                             {"local martingale: " + std::string(to_string(rep.local_mart.outcome)), 0.0, 0.0},
                             {"star conservative: " + std::string(to_string(star_stage->outcome)), 0.0, 0.0}};
    const std::string crit = "true_martingale[" + form.describe() + "]";
    switch (o) {
        case Outcome::Holds: rep.overall = Verdict::holds(crit, ev); break;
        case Outcome::Fails: rep.overall = Verdict::fails(crit, ev); break;
        case Outcome::Inconclusive: rep.overall = Verdict::inconclusive(crit, ev); break;
    }
    return rep;
}

nlohmann::json to_json(const MartingaleReport& r) {
    using nlohmann::json;
    json out;
    out["form"] = r.form.describe();
    out["component"] = r.component;
    out["positivity"] = to_json(r.positivity);
    out["local_mart"] = to_json(r.local_mart);
    json res = json::array();
    for (const DriftResidual& d : r.drift_residuals)
        res.push_back({{"j", d.j}, {"value", d.value}, {"error_bound", d.error_bound}, {"resolved", d.resolved}});
    out["drift_residuals"] = res;
    out["star_params"] = r.star_params ? params_to_json(*r.star_params) : json(nullptr);
    json adm = json::array();
    for (const Violation& v : r.star_admissibility)
        adm.push_back({{"rule", v.rule}, {"message", v.message}, {"inconclusive", v.inconclusive}});
    out["star_admissibility"] = adm;
    out["star_conservative"] = r.star_conservative ? to_json(*r.star_conservative) : json(nullptr);
    out["overall"] = to_json(r.overall);
    if (r.overall.is_holds())
        out["verdict"] = "true martingale";
    else if (r.overall.is_fails() && r.positivity.is_holds() && r.local_mart.is_holds())
        out["verdict"] = "strict local martingale";
    else if (r.overall.is_fails())
        out["verdict"] = "not a local martingale";
    else
        out["verdict"] = "undecided";
    out["notes"] = r.notes;
    return out;
}

}  // namespace affmart
