#include "affmart/cli.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/version.hpp>

#include "CLI11.hpp"
#include "json.hpp"

#include "affmart/conservativeness.hpp"
#include "affmart/martingale.hpp"
#include "affmart/montecarlo.hpp"
#include "affmart/params.hpp"
#include "affmart/riccati.hpp"
#include "affmart/spec_io.hpp"
#include "affmart/verdict.hpp"

namespace affmart::cli {

namespace {

using nlohmann::json;

constexpr int kUsageError = 3;
constexpr const char* kVersion = "1.0.0";

json versions() {
    return {{"affine-mart", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"cli11", CLI11_VERSION}};
}

// Report document shared by every subcommand.
struct Report {
    json spec;
    json verdicts = json::object();
    json evidence = json::array();

    void verdict(const std::string& name, const Verdict& v) { verdicts[name] = to_json(v); }

    json document() const {
        return {{"spec", spec}, {"verdicts", verdicts}, {"evidence", evidence}, {"versions", versions()}};
    }
};

std::string num(double v, int prec = 6) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

void print_verdict(std::ostream& out, const std::string& name, const Verdict& v, int indent = 0) {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    out << pad << name << ": " << to_string(v.outcome);
    if (!v.criterion.empty() && v.criterion != name) out << " [" << v.criterion << "]";
    out << "\n";
    for (const Evidence& e : v.evidence) {
        out << pad << "    " << e.description << " = " << num(e.value, 10);
        if (e.tolerance != 0.0) out << " (tol " << num(e.tolerance, 3) << ")";
        out << "\n";
    }
}

Verdict admissibility_verdict(const std::vector<Violation>& violations) {
    if (violations.empty()) return Verdict::holds("admissibility");
    std::vector<Evidence> ev;
    bool hard = false;
    for (const Violation& v : violations) {
        ev.push_back({v.rule + ": " + v.message, v.quantity, 0.0});
        hard = hard || !v.inconclusive;
    }
    return hard ? Verdict::fails("admissibility", ev) : Verdict::inconclusive("admissibility", ev);
}

json violations_json(const std::vector<Violation>& violations) {
    json a = json::array();
    for (const Violation& v : violations)
        a.push_back({{"rule", v.rule},
                     {"j", v.j},
                     {"k", v.k},
                     {"l", v.l},
                     {"quantity", v.quantity},
                     {"inconclusive", v.inconclusive},
                     {"message", v.message}});
    return a;
}

void print_violations(std::ostream& out, const std::vector<Violation>& violations) {
    for (const Violation& v : violations)
        out << "  - " << v.rule << (v.inconclusive ? " (undecided)" : "") << ": " << v.message << "\n";
}

std::string martingale_phrase(const MartingaleReport& r) { return to_json(r)["verdict"].get<std::string>(); }

std::vector<double> default_state(const AffineParams& p) {
    std::vector<double> x(p.dim(), 0.0);
    for (std::size_t k = 0; k < p.m; ++k) x[k] = 1.0;
    return x;
}

void print_conservative(std::ostream& out, const ConservativenessReport& r) {
    print_verdict(out, "conservative", r.overall);
    out << "  decision path: ";
    for (std::size_t k = 0; k < r.decision_path.size(); ++k) out << (k ? " -> " : "") << r.decision_path[k];
    out << "\n";
    print_verdict(out, "gamma", r.gamma_check, 2);
    print_verdict(out, "moments", r.moment_overall, 2);
    if (r.osgood) print_verdict(out, "osgood", *r.osgood, 2);
    if (r.minimal_solution) {
        const auto& s = *r.minimal_solution;
        out << "  minimal solution: method " << s.method << ", sup|psi_I(t,0)| on [0," << num(s.horizon) << "] = "
            << num(s.sup_abs, 8) << ", convergence error " << num(s.convergence_error, 3) << "\n";
        if (!s.note.empty()) out << "    " << s.note << "\n";
    }
}

// Survival table on roughly `rows` grid times of the minimal solution.
json survival_table(std::ostream& out, const ConservativenessReport& r, const std::vector<double>& x,
                    std::size_t rows = 11) {
    json table = json::array();
    if (!r.minimal || !r.minimal->converged()) return table;
    const std::vector<double> s = survival_curve(*r.minimal, x);
    const auto& times = r.minimal->limit.times;
    out << "  survival probability P_x(X_t in D), x = (";
    for (std::size_t k = 0; k < x.size(); ++k) out << (k ? ", " : "") << num(x[k]);
    out << "):\n      t          p_t(x, D)\n";
    const std::size_t stride = std::max<std::size_t>(1, (times.size() - 1) / (rows - 1));
    for (std::size_t k = 0; k < times.size(); k += stride) {
        out << "    " << std::setw(8) << num(times[k], 4) << "   " << num(s[k], 10) << "\n";
        table.push_back({{"t", times[k]}, {"survival", s[k]}});
    }
    return table;
}

struct Common {
    std::string spec_path;
    std::string json_path;
    long truncate = -1;
};

// Loaded params plus the spec section of the report.
AffineParams load(const Common& c, Report& rep, std::ostream& out) {
    AffineParams p = load_spec(c.spec_path);
    rep.spec = {{"path", c.spec_path}, {"params", params_to_json(p)}};
    if (c.truncate >= 0) {
        std::vector<std::size_t> resolved;
        p = truncate_model(p, static_cast<std::size_t>(c.truncate), &resolved);
        rep.spec["truncated_atoms"] = c.truncate;
        rep.spec["resolved_drift_components"] = resolved;
        rep.spec["params_truncated"] = params_to_json(p);
        out << "truncated series measures to " << c.truncate << " atoms";
        if (!resolved.empty()) {
            out << "; re-solved drift of component(s)";
            for (std::size_t i : resolved) out << " " << i;
        }
        out << "\n";
    }
    return p;
}

int finish(const Common& c, const Report& rep, int code, std::ostream& err) {
    if (!c.json_path.empty()) {
        std::ofstream f(c.json_path);
        if (!f) {
            err << "error: cannot write " << c.json_path << "\n";
            return kUsageError;
        }
        f << rep.document().dump(2) << "\n";
    }
    return code;
}

std::vector<std::complex<double>> complex_point(const std::vector<double>& re, const std::vector<double>& im,
                                                std::size_t d) {
    if ((!re.empty() && re.size() != d) || (!im.empty() && im.size() != d))
        throw std::invalid_argument("--u/--ui need " + std::to_string(d) + " entries each");
    std::vector<std::complex<double>> u(d);
    for (std::size_t k = 0; k < d; ++k) u[k] = {re.empty() ? 0.0 : re[k], im.empty() ? 0.0 : im[k]};
    return u;
}

// Grid {-2, 0, 2}^d on the imaginary axis, capped at 81 points.
std::vector<std::vector<std::complex<double>>> default_cf_grid(std::size_t d) {
    std::vector<std::vector<std::complex<double>>> g{{}};
    for (std::size_t k = 0; k < d; ++k) {
        std::vector<std::vector<std::complex<double>>> next;
        for (const auto& u : g)
            for (double a : {-2.0, 0.0, 2.0}) {
                auto v = u;
                v.emplace_back(0.0, a);
                next.push_back(std::move(v));
            }
        g = std::move(next);
        if (g.size() > 81) break;
    }
    if (g.front().size() != d) {
        g.clear();
        for (std::size_t k = 0; k < d; ++k)
            for (double a : {-2.0, 2.0}) {
                std::vector<std::complex<double>> u(d);
                u[k] = {0.0, a};
                g.push_back(u);
            }
        g.push_back(std::vector<std::complex<double>>(d));
    }
    return g;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Conservativeness and martingale checks for affine processes", "affine-mart"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", kVersion);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("spec", common.spec_path, "Process spec file (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--json", common.json_path, "Write the JSON report to this file");
        sub->add_option("--truncate", common.truncate, "Keep only the first N atoms of every series measure")
            ->check(CLI::NonNegativeNumber);
    };

    auto* validate = app.add_subcommand("validate", "Check admissibility of the parameters");
    add_common(validate);

    auto* riccati = app.add_subcommand("riccati", "Solve the generalized Riccati equations from u");
    add_common(riccati);
    std::vector<double> u_re, u_im;
    double ric_T = 1.0, ric_tol = 1e-9;
    std::size_t ric_points = 11;
    riccati->add_option("--u", u_re, "Real parts of u (one per coordinate)");
    riccati->add_option("--ui", u_im, "Imaginary parts of u (one per coordinate)");
    riccati->add_option("--T", ric_T, "Horizon")->check(CLI::PositiveNumber);
    riccati->add_option("--tol", ric_tol, "Relative tolerance")->check(CLI::PositiveNumber);
    riccati->add_option("--points", ric_points, "Output grid size")->check(CLI::Range(2, 100000));

    auto* conservative = app.add_subcommand("conservative", "Decide conservativeness and tabulate survival");
    add_common(conservative);
    double horizon = 10.0;
    std::vector<double> x_state;
    conservative->add_option("--horizon", horizon, "Horizon of the minimal solution")->check(CLI::PositiveNumber);
    conservative->add_option("--x", x_state, "Starting state for the survival table (default 1 on R_+ coordinates)");

    auto* martingale = app.add_subcommand("martingale", "Decide the true-martingale property of an exponential");
    add_common(martingale);
    std::size_t component = 1;
    std::string form = "stoch-exp";
    double fp = 0.0;
    std::vector<double> fP;
    martingale->add_option("--component", component, "Component i (1-based)")->check(CLI::PositiveNumber);
    martingale->add_option("--form", form, "Exponential form")
        ->check(CLI::IsMember({"stoch-exp", "exp", "functional"}));
    martingale->add_option("--p", fp, "Constant p of the functional form");
    martingale->add_option("--P", fP, "Vector P of the functional form");

    auto* transform = app.add_subcommand("transform", "Print the star parameters for component i");
    add_common(transform);
    transform->add_option("--component", component, "Component i (1-based)")->check(CLI::PositiveNumber);

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo probes (finite activity only)");
    add_common(simulate);
    SimConfig cfg;
    cfg.paths = 10000;
    std::string estimate;
    double cap = 1e6;
    bool cap_given = false;
    simulate->add_option("--x0", cfg.x0, "Initial state (default 1 on R_+ coordinates, 0 elsewhere)");
    simulate->add_option("--T", cfg.T, "Horizon")->check(CLI::PositiveNumber);
    simulate->add_option("--steps", cfg.steps_per_unit, "Euler steps per unit time")->check(CLI::PositiveNumber);
    simulate->add_option("--paths", cfg.paths, "Number of paths")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", cfg.seed, "Seed");
    simulate->add_option("--threads", cfg.threads, "Worker threads (0 = hardware)");
    simulate->add_option_function<double>(
        "--cap", [&](const double& v) { cap = v, cap_given = true; }, "Explosion cap on max |X^k|");
    simulate->add_option("--estimate", estimate, "Estimator")->check(CLI::IsMember({"mean-exp", "cf", "explosion"}));
    simulate->add_option("--component", component, "Component for mean-exp (1-based)")->check(CLI::PositiveNumber);

    auto* report_all = app.add_subcommand("report-all", "validate, conservative, then martingale per component");
    add_common(report_all);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : kUsageError;
    }

    Report rep;
    try {
        // ---- validate
        if (*validate) {
            const AffineParams p = load(common, rep, out);
            const auto viol = validate_admissibility(p);
            const Verdict v = admissibility_verdict(viol);
            rep.verdict("admissibility", v);
            rep.evidence.push_back({{"violations", violations_json(viol)}});
            out << "admissibility: " << to_string(v.outcome) << "\n";
            print_violations(out, viol);
            return finish(common, rep, exit_code(v.outcome), err);
        }

        // ---- riccati
        if (*riccati) {
            const AffineParams p = load(common, rep, out);
            RContext ctx(p);
            const auto u = complex_point(u_re, u_im, p.dim());
            FlowOptions fo;
            fo.points = ric_points;
            Verdict v = Verdict::holds("riccati_flow");
            FlowResult f;
            try {
                f = solve_flow(ctx, std::span<const cplx>(u), ric_T, ric_tol, fo);
            } catch (const FlowError& e) {
                f = e.partial();
                v = Verdict::inconclusive("riccati_flow", {{std::string("solver stopped: ") + e.what(), e.last_time(), ric_T}});
            }
            rep.verdict("riccati_flow", v);
            rep.evidence.push_back({{"flow", flow_to_json(f)}});
            out << "t";
            out << "    psi_0";
            for (std::size_t k = 1; k <= p.dim(); ++k) out << "    psi_" << k;
            out << "\n";
            auto c = [](cplx z) {
                std::ostringstream s;
                s << std::setprecision(10) << z.real();
                if (z.imag() != 0.0) s << (z.imag() < 0 ? "-" : "+") << std::setprecision(10) << std::abs(z.imag()) << "i";
                return s.str();
            };
            for (std::size_t t = 0; t < f.times.size(); ++t) {
                out << num(f.times[t], 6) << "  " << c(f.psi0[t]);
                for (const cplx& z : f.psi[t]) out << "  " << c(z);
                out << "\n";
            }
            if (!v.is_holds()) print_verdict(out, "riccati_flow", v);
            return finish(common, rep, exit_code(v.outcome), err);
        }

        // ---- conservative
        if (*conservative) {
            const AffineParams p = load(common, rep, out);
            ConservativenessOptions co;
            co.horizon = horizon;
            const ConservativenessReport r = conservativeness_verdict(p, co);
            rep.verdict("conservative", r.overall);
            json ev = to_json(r);
            print_conservative(out, r);
            const std::vector<double> x = x_state.empty() ? default_state(p) : x_state;
            if (x.size() != p.dim()) throw std::invalid_argument("--x needs " + std::to_string(p.dim()) + " entries");
            ev["survival_table"] = survival_table(out, r, x);
            rep.evidence.push_back({{"conservativeness", ev}});
            return finish(common, rep, exit_code(r.overall.outcome), err);
        }

        // ---- martingale
        if (*martingale) {
            const AffineParams p = load(common, rep, out);
            MartingaleForm f = form == "stoch-exp" ? MartingaleForm::stochastic_exp(component)
                               : form == "exp"     ? MartingaleForm::ordinary_exp(component)
                                                   : MartingaleForm::affine_functional(fp, fP);
            const MartingaleReport r = martingale_verdict(p, f);
            rep.verdict("martingale", r.overall);
            rep.evidence.push_back({{"martingale", to_json(r)}});
            out << f.describe() << ": " << martingale_phrase(r) << "\n";
            print_verdict(out, "positivity", r.positivity, 2);
            print_verdict(out, "local martingale", r.local_mart, 2);
            if (r.star_conservative) print_conservative(out, *r.star_conservative);
            for (const std::string& n : r.notes) out << "  note: " << n << "\n";
            print_verdict(out, "overall", r.overall);
            return finish(common, rep, exit_code(r.overall.outcome), err);
        }

        // ---- transform
        if (*transform) {
            const AffineParams p = load(common, rep, out);
            const Verdict pos = positivity_check(p, component);
            rep.verdict("positivity", pos);
            if (!pos.is_holds()) {
                print_verdict(out, "positivity", pos);
                out << "star transform needs 1 + xi_" << component << " >= 0 on every support\n";
                return finish(common, rep, exit_code(pos.outcome), err);
            }
            const AffineParams star = star_transform(p, component);
            const auto viol = validate_admissibility(star);
            const Verdict adm = admissibility_verdict(viol);
            rep.verdict("star_admissibility", adm);
            rep.evidence.push_back({{"star_params", params_to_json(star)}, {"violations", violations_json(viol)}});
            out << params_to_json(star).dump(2) << "\n";
            out << "star admissibility: " << to_string(adm.outcome) << "\n";
            print_violations(out, viol);
            return finish(common, rep, exit_code(adm.outcome), err);
        }

        // ---- simulate
        if (*simulate) {
            const AffineParams p = load(common, rep, out);
            if (cfg.x0.empty()) cfg.x0 = default_state(p);
            if (cap_given) cfg.cap = cap;
            Verdict v = Verdict::holds("simulation");
            if (estimate.empty()) {
                const PathEnsemble e = simulate_paths(p, cfg);
                rep.evidence.push_back({{"ensemble", to_json(e)}});
                out << "paths " << cfg.paths << ", T " << num(cfg.T) << ", steps/unit " << cfg.steps_per_unit << "\n";
                for (std::size_t k = 0; k < e.d; ++k)
                    out << "  E[X^" << k + 1 << "_T] = " << num(e.mean[k], 8) << " +- " << num(e.std_error[k], 3) << "\n";
                out << "  explosions " << e.explosions << ", clipped steps " << e.clipped << "\n";
                if (e.clip_warning) out << "  warning: clipped negative excursions exceed 1% of steps\n";
            } else if (estimate == "mean-exp") {
                const SampleStats s = estimate_stoch_exp_mean(p, component, cfg);
                const double z = s.std_error > 0 ? std::abs(s.mean - 1.0) / s.std_error : (s.mean == 1.0 ? 0.0 : INFINITY);
                std::vector<Evidence> ev{{"sample mean of E(X^" + std::to_string(component) + ")_T", s.mean, 0.0},
                                         {"standard error", s.std_error, 0.0},
                                         {"median of 16 block means", s.median_of_means, 0.0},
                                         {"|mean - 1| / stderr", z, 3.0}};
                v = z <= 3.0 ? Verdict::holds("mean_one_within_3_stderr", ev)
                             : Verdict::fails("mean_one_within_3_stderr", ev);
                rep.evidence.push_back({{"mean_exp", {{"mean", s.mean},
                                                      {"std_error", s.std_error},
                                                      {"median_of_means", s.median_of_means},
                                                      {"paths", s.count}}}});
                out << "E[E(X^" << component << ")_T] = " << num(s.mean, 8) << " +- " << num(s.std_error, 3)
                    << " (median of means " << num(s.median_of_means, 8) << ")\n";
            } else if (estimate == "cf") {
                const CFCheck c = empirical_cf_check(p, cfg, default_cf_grid(p.dim()));
                json pts = json::array();
                out << "u (imag parts)    empirical    model    stderr\n";
                for (const CFPoint& q : c.points) {
                    json ui = json::array();
                    for (const auto& z : q.u) ui.push_back({z.real(), z.imag()});
                    pts.push_back({{"u", ui},
                                   {"empirical", {q.empirical.real(), q.empirical.imag()}},
                                   {"model", {q.model.real(), q.model.imag()}},
                                   {"std_error", q.std_error}});
                    out << "  (";
                    for (std::size_t k = 0; k < q.u.size(); ++k) out << (k ? ", " : "") << num(q.u[k].imag());
                    out << ")  " << num(q.empirical.real()) << (q.empirical.imag() < 0 ? "" : "+") << num(q.empirical.imag())
                        << "i  " << num(q.model.real()) << (q.model.imag() < 0 ? "" : "+") << num(q.model.imag()) << "i  "
                        << num(q.std_error, 3) << "\n";
                }
                std::vector<Evidence> ev{{"max |phi_emp - phi_model|", c.max_abs_diff, 0.0},
                                         {"max z-score over the grid", c.max_z, 3.0}};
                v = c.max_z <= 3.0 ? Verdict::holds("cf_within_3_stderr", ev) : Verdict::fails("cf_within_3_stderr", ev);
                rep.evidence.push_back({{"cf", {{"points", pts}, {"worst", c.worst}, {"max_z", c.max_z}}}});
            } else {
                const ExplosionEstimate e = detect_explosion(p, cfg, cap);
                out << "explosion frequency (cap " << num(cap) << ") = " << num(e.frequency, 6) << " +- "
                    << num(e.std_error, 3) << "\n";
                json ev{{"frequency", e.frequency}, {"std_error", e.std_error}, {"exploded", e.exploded}, {"cap", cap}};
                try {
                    const double surv = survival_probability(p, cfg.x0, cfg.T);
                    const double se = std::max(e.std_error, 1.0 / static_cast<double>(e.paths));
                    const double z = std::abs(e.frequency - (1.0 - surv)) / se;
                    out << "model 1 - p_T(x0, D) = " << num(1.0 - surv, 6) << "\n";
                    std::vector<Evidence> evv{{"frequency", e.frequency, 0.0},
                                              {"1 - survival probability", 1.0 - surv, 0.0},
                                              {"z-score", z, 5.0}};
                    v = z <= 5.0 ? Verdict::holds("explosion_matches_survival", evv)
                                 : Verdict::fails("explosion_matches_survival", evv);
                    ev["model_explosion_probability"] = 1.0 - surv;
                } catch (const std::exception& ex) {
                    v = Verdict::inconclusive("explosion_matches_survival",
                                              {{std::string("survival probability unavailable: ") + ex.what(), e.frequency, 0.0}});
                }
                rep.evidence.push_back({{"explosion", ev}});
            }
            rep.verdict("simulation", v);
            if (!estimate.empty()) print_verdict(out, "result", v);
            return finish(common, rep, exit_code(v.outcome), err);
        }

        // ---- report-all
        if (*report_all) {
            const AffineParams p = load(common, rep, out);
            const auto viol = validate_admissibility(p);
            const Verdict adm = admissibility_verdict(viol);
            rep.verdict("admissibility", adm);
            rep.evidence.push_back({{"violations", violations_json(viol)}});
            out << "== validate\nadmissibility: " << to_string(adm.outcome) << "\n";
            print_violations(out, viol);
            if (adm.is_fails()) return finish(common, rep, 1, err);

            out << "== conservative\n";
            const ConservativenessReport cr = conservativeness_verdict(p);
            rep.verdict("conservative", cr.overall);
            print_conservative(out, cr);
            rep.evidence.push_back({{"conservativeness", to_json(cr)}});

            out << "== martingale\n";
            for (std::size_t i = 1; i <= p.dim(); ++i) {
                const Verdict pos = positivity_check(p, i);
                if (!pos.is_holds()) {
                    out << "stochastic_exp(" << i << "): skipped, positivity " << to_string(pos.outcome) << "\n";
                    continue;
                }
                const MartingaleReport mr = martingale_verdict(p, MartingaleForm::stochastic_exp(i));
                rep.verdict("martingale_stoch_exp_" + std::to_string(i), mr.overall);
                rep.evidence.push_back({{"martingale", to_json(mr)}});
                out << "stochastic_exp(" << i << "): " << martingale_phrase(mr) << "\n";
            }
            // Martingale verdicts are per-component findings; the exit status
            // reflects the model-level checks only.
            return finish(common, rep, exit_code(combine_all({adm.outcome, cr.overall.outcome})), err);
        }
    } catch (const SpecError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const SimulationError& e) {
        // Unmet simulation precondition such as infinite activity.
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        rep.verdict("error", Verdict::inconclusive("error", {{e.what(), 0.0, 0.0}}));
        finish(common, rep, 2, err);
        return 2;
    }
    return kUsageError;
}

}  // namespace affmart::cli
