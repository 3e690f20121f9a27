#include "affmart/measure.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "numerics.hpp"

namespace affmart {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Hard cap on summed series terms.
constexpr std::size_t kMaxSeriesTerms = std::size_t{1} << 19;
// Tail probes at y = 2^k for these k.
constexpr int kProbeFirst = 10;
constexpr int kProbeLast = 20;
constexpr double kExponentSlack = 0.05;

double clamp_unit(double x) { return std::max(-1.0, std::min(1.0, x)); }

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

// Outcome of comparing an equivalent series term t(y) ~ y^{-q} against 1/y.
struct TailAnalysis {
    enum class Kind { Converges, Diverges, Unknown } kind = Kind::Unknown;
    double rate = 0.0;
    std::string note;
};

// `term(y)` is the integrand of an equivalent tail sum over y -> infinity.
// `declared_rate` is what the declared exponents predict (NaN if none).
TailAnalysis analyze_tail(const std::function<double(double)>& term, double declared_rate) {
    TailAnalysis out;
    std::vector<double> t;
    for (int k = kProbeFirst; k <= kProbeLast; ++k) t.push_back(term(std::ldexp(1.0, k)));

    bool all_zero = true;
    for (double v : t) {
        if (std::isnan(v)) {
            out.note = "integrand undefined far in the tail";
            return out;
        }
        if (v != 0.0) all_zero = false;
    }
    if (all_zero) {
        out.kind = TailAnalysis::Kind::Converges;
        out.rate = kInf;
        out.note = "tail vanishes";
        return out;
    }
    const double sign = t.back() > 0 ? 1.0 : (t.back() < 0 ? -1.0 : 0.0);
    bool same_sign = true;
    for (double v : t)
        if (v * sign < 0.0) same_sign = false;

    if (std::isinf(t.back())) {
        if (same_sign) {
            out.kind = TailAnalysis::Kind::Diverges;
            out.rate = -kInf;
            out.note = "tail grows superpolynomially";
        } else {
            out.note = "tail overflows with alternating sign";
        }
        return out;
    }

    std::vector<double> rates;
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        const double a = std::abs(t[k]), b = std::abs(t[k + 1]);
        if (a == 0.0 && b == 0.0) rates.push_back(kInf);
        else if (b == 0.0) rates.push_back(kInf);
        else if (a == 0.0) rates.push_back(-kInf);
        else rates.push_back(std::log2(a / b));
    }
    const std::size_t tail_n = std::min<std::size_t>(3, rates.size());
    double lo = kInf, hi = -kInf;
    for (std::size_t k = rates.size() - tail_n; k < rates.size(); ++k) {
        lo = std::min(lo, rates[k]);
        hi = std::max(hi, rates[k]);
    }
    out.rate = lo;

    if (std::isfinite(declared_rate) && lo < declared_rate - kExponentSlack) {
        out.note = "observed tail exponent " + fmt(lo) + " is heavier than declared " +
                   fmt(declared_rate);
        return out;
    }
    if (lo >= 1.0 + kExponentSlack) {
        out.kind = TailAnalysis::Kind::Converges;
        out.note = "tail exponent " + fmt(lo) + " > 1";
        return out;
    }
    if (!same_sign) {
        out.note = "tail changes sign; comparison test not applicable";
        return out;
    }
    if (hi <= 1.0 - kExponentSlack) {
        out.kind = TailAnalysis::Kind::Diverges;
        out.note = "tail exponent " + fmt(hi) + " < 1";
        return out;
    }
    // Borderline exponent: y * t(y) bounded away from 0 means harmonic divergence.
    const double y0 = std::ldexp(1.0, kProbeFirst), y1 = std::ldexp(1.0, kProbeLast);
    const double a = y0 * std::abs(t.front()), b = y1 * std::abs(t.back());
    if (b > 0.0 && std::abs(a - b) <= 0.02 * std::max(a, b)) {
        out.kind = TailAnalysis::Kind::Diverges;
        out.note = "harmonic tail: y*t(y) ~ " + fmt(b);
        return out;
    }
    out.note = "borderline tail exponent " + fmt(lo) + "; comparison inconclusive";
    return out;
}

// Local growth exponent of |f| along y = 2^k (f ~ y^g), NaN if undefined.
double growth_exponent(const std::function<double(double)>& f) {
    const double a = std::abs(f(std::ldexp(1.0, kProbeLast - 1)));
    const double b = std::abs(f(std::ldexp(1.0, kProbeLast)));
    if (!(std::isfinite(a) && std::isfinite(b)) || a == 0.0 || b == 0.0)
        return std::numeric_limits<double>::quiet_NaN();
    return std::log2(b / a);
}

IntegralResult divergent(std::string note) {
    IntegralResult r;
    r.status = IntegralResult::Status::Divergent;
    r.note = std::move(note);
    return r;
}

IntegralResult inconclusive(std::string note, double tol) {
    IntegralResult r;
    r.status = IntegralResult::Status::Inconclusive;
    r.tolerance = tol;
    r.note = std::move(note);
    return r;
}

std::string point_string(std::span<const double> p) {
    std::string s = "(";
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (k) s += ", ";
        s += fmt(p[k]);
    }
    return s + ")";
}

double series_term(const JumpMeasure& m, const PointFunction& f, double n, std::vector<double>& pt) {
    const double w = m.series_weight(n);
    if (w == 0.0) {
        const auto& s = m.atom_series();
        for (std::size_t k = 0; k < s.point_exprs.size(); ++k) pt[k] = s.point_exprs[k].eval_index(n);
        const double v = f(pt);
        return std::isfinite(v) ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    }
    const auto& s = m.atom_series();
    for (std::size_t k = 0; k < s.point_exprs.size(); ++k) pt[k] = s.point_exprs[k].eval_index(n);
    return w * f(pt);
}

IntegralResult integrate_series(const JumpMeasure& m, const PointFunction& f,
                                const IntegrationOptions& opts) {
    const auto& s = m.atom_series();
    std::vector<double> pt(m.dim());
    if (opts.classify) {
        auto term = [&](double y) { return series_term(m, f, y, pt); };
        auto f_along = [&](double y) {
            for (std::size_t k = 0; k < s.point_exprs.size(); ++k)
                pt[k] = s.point_exprs[k].eval_index(y);
            return f(pt);
        };
        const double g = growth_exponent(f_along);
        const double declared = std::isnan(g) ? std::numeric_limits<double>::quiet_NaN() : s.tail.p - g;
        TailAnalysis ta = analyze_tail(term, declared);
        if (ta.kind == TailAnalysis::Kind::Diverges) return divergent(ta.note);
        if (ta.kind == TailAnalysis::Kind::Unknown) return inconclusive(ta.note, opts.tol);
    }

    std::vector<double> pd(m.dim());
    std::function<double(std::size_t)> direct = [&](std::size_t n) {
        const double v = series_term(m, f, static_cast<double>(n), pd);
        if (!std::isfinite(v))
            throw MeasureError("integrand undefined at series atom n=" + std::to_string(n) +
                               " point " + point_string(pd));
        return v;
    };
    std::vector<double> ps(m.dim());
    std::function<double(double)> smooth = [&](double x) { return series_term(m, f, x, ps); };

    detail::SeriesSumOptions so;
    so.abs_tol = opts.tol;
    so.max_terms = kMaxSeriesTerms;
    const auto sum = detail::sum_series<double>(direct, smooth, so);

    IntegralResult r;
    r.value = sum.value;
    r.error_bound = sum.error;
    r.tolerance = opts.tol;
    r.terms_used = sum.terms;
    if (sum.ok && sum.error <= opts.tol) {
        r.status = IntegralResult::Status::Finite;
    } else {
        r.status = IntegralResult::Status::Inconclusive;
        r.note = "series did not reach tolerance within " + std::to_string(sum.terms) +
                 " terms (error " + fmt(sum.error) + ")";
    }
    return r;
}

struct DensityEdges {
    bool zero_lo = false;   // approaches 0 from above
    bool zero_hi = false;   // approaches 0 from below
    bool inf_hi = false;
    bool inf_lo = false;
};

DensityEdges density_edges(const Interval& iv) {
    DensityEdges e;
    e.inf_hi = std::isinf(iv.hi);
    e.inf_lo = std::isinf(iv.lo);
    e.zero_lo = iv.lo <= 0.0 && iv.hi > 0.0;
    e.zero_hi = iv.lo < 0.0 && iv.hi >= 0.0;
    return e;
}

IntegralResult integrate_density(const JumpMeasure& m, const PointFunction& f,
                                 const IntegrationOptions& opts) {
    const auto& dm = m.density_measure();
    const std::size_t free = dm.free_coordinate();
    const Interval iv = dm.domain[free];
    std::vector<double> base, full;

    auto integrand = [&](double x) {
        m.density_point(x, base, full);
        const double dens = dm.density_expr.eval_point(base);
        if (dens == 0.0) return 0.0;
        return dens * f(full);
    };
    auto f_at = [&](double x) {
        m.density_point(x, base, full);
        return f(full);
    };

    if (opts.classify) {
        const DensityEdges e = density_edges(iv);
        auto check = [&](TailAnalysis ta) -> std::optional<IntegralResult> {
            if (ta.kind == TailAnalysis::Kind::Diverges) return divergent(ta.note);
            if (ta.kind == TailAnalysis::Kind::Unknown) return inconclusive(ta.note, opts.tol);
            return std::nullopt;
        };
        for (double dir : {1.0, -1.0}) {
            if ((dir > 0 && e.inf_hi) || (dir < 0 && e.inf_lo)) {
                const double g = growth_exponent([&](double y) { return f_at(dir * y); });
                const double declared = -(dm.tail_exponent_at_infinity + g);
                if (auto r = check(analyze_tail([&](double y) { return integrand(dir * y); }, declared)))
                    return *r;
            }
            if ((dir > 0 && e.zero_lo) || (dir < 0 && e.zero_hi)) {
                // x = 1/y maps the edge at 0 to a tail with term t(1/y)/y^2.
                const double g = -growth_exponent([&](double y) { return f_at(dir / y); });
                const double declared = dm.tail_exponent_at_zero + g + 2.0;
                auto eq = [&](double y) { return integrand(dir / y) / (y * y); };
                if (auto r = check(analyze_tail(eq, declared))) return *r;
            }
        }
    }

    const double rel = std::max(dm.quadrature_tol, 1e-13);
    const auto q = detail::integrate_line(integrand, iv.lo, iv.hi, rel, 0.1 * opts.tol);
    IntegralResult r;
    r.value = q.value;
    r.error_bound = q.error;
    r.tolerance = std::max(opts.tol, rel * std::abs(q.value));
    r.terms_used = q.evaluations;
    if (q.ok && std::isfinite(q.value) && q.error <= r.tolerance) {
        r.status = IntegralResult::Status::Finite;
    } else {
        r.status = IntegralResult::Status::Inconclusive;
        r.note = "quadrature did not reach tolerance (error " + fmt(q.error) + ")";
    }
    return r;
}

void check_expr_dim(const Expr& e, std::size_t dim, const char* what) {
    if (e.max_coordinate() > dim)
        throw MeasureError(std::string(what) + " '" + e.source() + "' refers to xi" +
                           std::to_string(e.max_coordinate()) + " but dimension is " +
                           std::to_string(dim));
}

}  // namespace

const char* to_string(IntegralResult::Status s) {
    switch (s) {
        case IntegralResult::Status::Finite: return "Finite";
        case IntegralResult::Status::Divergent: return "Divergent";
        case IntegralResult::Status::Inconclusive: return "Inconclusive";
    }
    return "?";
}

std::size_t DensityMeasure::free_coordinate() const {
    for (std::size_t k = 0; k < domain.size(); ++k)
        if (domain[k].lo != domain[k].hi) return k;
    throw MeasureError("density domain has no free coordinate");
}

JumpMeasure JumpMeasure::zero(std::size_t dim) { return JumpMeasure(dim, FiniteAtoms{}); }

JumpMeasure JumpMeasure::finite(std::size_t dim, std::vector<Atom> atoms) {
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        if (atoms[a].point.size() != dim)
            throw MeasureError("atom " + std::to_string(a) + " has dimension " +
                               std::to_string(atoms[a].point.size()) + ", expected " +
                               std::to_string(dim));
        if (!(atoms[a].weight > 0.0) || !std::isfinite(atoms[a].weight))
            throw MeasureError("atom " + std::to_string(a) + " has non-positive weight " +
                               fmt(atoms[a].weight));
        for (double v : atoms[a].point)
            if (!std::isfinite(v))
                throw MeasureError("atom " + std::to_string(a) + " has a non-finite coordinate");
    }
    return JumpMeasure(dim, FiniteAtoms{std::move(atoms)});
}

JumpMeasure JumpMeasure::series(std::vector<Expr> point_exprs, Expr weight_expr, TailDecay tail,
                                double truncation_tol) {
    if (point_exprs.empty()) throw MeasureError("series measure needs point expressions");
    for (const auto& e : point_exprs)
        if (e.max_coordinate() > 0)
            throw MeasureError("series point expression '" + e.source() + "' may only use n");
    if (weight_expr.max_coordinate() > 0)
        throw MeasureError("series weight expression '" + weight_expr.source() + "' may only use n");
    if (!(tail.p > 1.0))
        throw MeasureError("series tail exponent p must exceed 1, got " + fmt(tail.p));
    if (!(truncation_tol > 0.0)) throw MeasureError("series tolerance must be positive");
    for (double n : {1.0, 2.0, 3.0, 10.0, 100.0}) {
        const double w = weight_expr.eval_index(n);
        if (!(w > 0.0))
            throw MeasureError("series weight '" + weight_expr.source() + "' is not positive at n=" +
                               fmt(n));
    }
    const std::size_t dim = point_exprs.size();
    return JumpMeasure(dim, AtomSeries{std::move(point_exprs), std::move(weight_expr), tail,
                                       truncation_tol});
}

JumpMeasure JumpMeasure::density(Expr density_expr, std::vector<Interval> domain,
                                 double tail_exponent_at_zero, double tail_exponent_at_infinity,
                                 double quadrature_tol, std::vector<Expr> extra_coords) {
    if (domain.empty()) throw MeasureError("density domain is empty");
    std::size_t free_count = 0;
    for (std::size_t k = 0; k < domain.size(); ++k) {
        const Interval& iv = domain[k];
        if (std::isnan(iv.lo) || std::isnan(iv.hi) || iv.lo > iv.hi)
            throw MeasureError("density domain interval " + std::to_string(k + 1) + " is invalid");
        if (iv.lo == iv.hi) {
            if (!std::isfinite(iv.lo))
                throw MeasureError("degenerate density coordinate " + std::to_string(k + 1) +
                                   " must be finite");
        } else {
            ++free_count;
        }
    }
    if (free_count != 1)
        throw MeasureError("density measures must have exactly one free coordinate, got " +
                           std::to_string(free_count));
    if (!(quadrature_tol > 0.0)) throw MeasureError("density tolerance must be positive");
    check_expr_dim(density_expr, domain.size(), "density expression");
    for (const auto& e : extra_coords) check_expr_dim(e, domain.size(), "extra coordinate");

    const std::size_t dim = domain.size() + extra_coords.size();
    JumpMeasure m(dim, DensityMeasure{std::move(density_expr), std::move(domain),
                                      std::move(extra_coords), tail_exponent_at_zero,
                                      tail_exponent_at_infinity, quadrature_tol});
    // Nonnegativity on a geometric probe grid of the free coordinate.
    const auto& dm = m.density_measure();
    const Interval iv = dm.domain[dm.free_coordinate()];
    std::vector<double> base, full;
    for (int k = -20; k <= 20; ++k) {
        for (double sgn : {1.0, -1.0}) {
            const double x = sgn * std::ldexp(1.0, k);
            if (x <= iv.lo || x >= iv.hi) continue;
            m.density_point(x, base, full);
            const double v = dm.density_expr.eval_point(base);
            if (v < 0.0)
                throw MeasureError("density '" + dm.density_expr.source() + "' is negative at " +
                                   point_string(base));
        }
    }
    return m;
}

JumpMeasure::Kind JumpMeasure::kind() const {
    switch (repr_.index()) {
        case 0: return Kind::FiniteAtomic;
        case 1: return Kind::SeriesAtomic;
        default: return Kind::Density;
    }
}

bool JumpMeasure::is_zero() const {
    return kind() == Kind::FiniteAtomic && finite_atoms().atoms.empty();
}

std::vector<double> JumpMeasure::series_point(double n) const {
    const auto& s = atom_series();
    std::vector<double> p(s.point_exprs.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = s.point_exprs[k].eval_index(n);
    return p;
}

double JumpMeasure::series_weight(double n) const { return atom_series().weight_expr.eval_index(n); }

void JumpMeasure::density_point(double x, std::vector<double>& base, std::vector<double>& full) const {
    const auto& dm = density_measure();
    base.resize(dm.domain.size());
    for (std::size_t k = 0; k < dm.domain.size(); ++k) base[k] = dm.domain[k].lo;
    base[dm.free_coordinate()] = x;
    full.assign(base.begin(), base.end());
    for (const auto& e : dm.extra_coords) full.push_back(e.eval_point(base));
}

IntegralResult integrate(const JumpMeasure& measure, const PointFunction& f,
                         const IntegrationOptions& opts) {
    switch (measure.kind()) {
        case JumpMeasure::Kind::FiniteAtomic: {
            detail::CompensatedSum<double> acc;
            for (const Atom& a : measure.finite_atoms().atoms) {
                const double v = f(a.point);
                if (!std::isfinite(v))
                    throw MeasureError("integrand undefined at atom " + point_string(a.point));
                acc.add(a.weight * v);
            }
            IntegralResult r;
            r.status = IntegralResult::Status::Finite;
            r.value = acc.value();
            r.tolerance = opts.tol;
            r.terms_used = measure.finite_atoms().atoms.size();
            return r;
        }
        case JumpMeasure::Kind::SeriesAtomic: return integrate_series(measure, f, opts);
        case JumpMeasure::Kind::Density: return integrate_density(measure, f, opts);
    }
    return {};
}

IntegralResult measure_integral(const JumpMeasure& measure, const Expr& integrand, double tol) {
    check_expr_dim(integrand, measure.dim(), "integrand");
    PointFunction f = [&](std::span<const double> xi) { return integrand.eval_point(xi); };
    IntegrationOptions opts;
    opts.tol = tol;
    return integrate(measure, f, opts);
}

ComplexIntegral integrate_complex(const JumpMeasure& measure, const ComplexPointFunction& f,
                                  double abs_tol, double rel_tol) {
    ComplexIntegral out;
    switch (measure.kind()) {
        case JumpMeasure::Kind::FiniteAtomic: {
            detail::CompensatedSum<std::complex<double>> acc;
            for (const Atom& a : measure.finite_atoms().atoms) acc.add(a.weight * f(a.point));
            out.value = acc.value();
            out.ok = std::isfinite(out.value.real()) && std::isfinite(out.value.imag());
            return out;
        }
        case JumpMeasure::Kind::SeriesAtomic: {
            std::vector<double> pd(measure.dim()), ps(measure.dim());
            auto term = [&](double n, std::vector<double>& pt) -> std::complex<double> {
                const double w = measure.series_weight(n);
                if (w == 0.0) return 0.0;
                const auto& s = measure.atom_series();
                for (std::size_t k = 0; k < pt.size(); ++k) pt[k] = s.point_exprs[k].eval_index(n);
                return w * f(pt);
            };
            std::function<std::complex<double>(std::size_t)> direct = [&](std::size_t n) {
                return term(static_cast<double>(n), pd);
            };
            std::function<std::complex<double>(double)> smooth = [&](double x) { return term(x, ps); };
            detail::SeriesSumOptions so;
            so.abs_tol = abs_tol;
            so.rel_tol = rel_tol;
            so.max_terms = kMaxSeriesTerms;
            const auto sum = detail::sum_series<std::complex<double>>(direct, smooth, so);
            out.value = sum.value;
            out.error_bound = sum.error;
            out.ok = sum.ok;
            if (!sum.ok) out.note = "complex series did not converge to tolerance";
            return out;
        }
        case JumpMeasure::Kind::Density: {
            const auto& dm = measure.density_measure();
            const Interval iv = dm.domain[dm.free_coordinate()];
            std::vector<double> base, full;
            std::complex<double> last_x{};
            double last_at = std::numeric_limits<double>::quiet_NaN();
            auto value_at = [&](double x) {
                if (x != last_at) {
                    measure.density_point(x, base, full);
                    const double dens = dm.density_expr.eval_point(base);
                    last_x = dens == 0.0 ? std::complex<double>{} : dens * f(full);
                    last_at = x;
                }
                return last_x;
            };
            const double rel = std::max({dm.quadrature_tol, rel_tol, 1e-13});
            const auto re = detail::integrate_line([&](double x) { return value_at(x).real(); },
                                                   iv.lo, iv.hi, rel, abs_tol);
            const auto im = detail::integrate_line([&](double x) { return value_at(x).imag(); },
                                                   iv.lo, iv.hi, rel, abs_tol);
            out.value = {re.value, im.value};
            out.error_bound = re.error + im.error;
            out.ok = re.ok && im.ok;
            if (!out.ok) out.note = "complex quadrature did not converge";
            return out;
        }
    }
    return out;
}

std::string MomentKind::name() const {
    switch (type) {
        case Type::HSquare: return "h_square";
        case Type::HAbs: return "h_abs(" + std::to_string(index) + ")";
        case Type::BigJumpAbs: return "big_jump_abs(" + std::to_string(index) + ")";
        case Type::CompensatorGap: return "compensator_gap(" + std::to_string(index) + ")";
        case Type::Wedge: return "wedge(" + std::to_string(index) + ")";
    }
    return "?";
}

PointFunction MomentKind::integrand() const {
    const std::size_t k = index - 1;
    switch (type) {
        case Type::HSquare:
            return [](std::span<const double> xi) {
                double s = 0.0;
                for (double v : xi) s += clamp_unit(v) * clamp_unit(v);
                return s;
            };
        case Type::HAbs:
            return [k](std::span<const double> xi) { return std::abs(clamp_unit(xi[k])); };
        case Type::BigJumpAbs:
            return [k](std::span<const double> xi) {
                return std::abs(xi[k]) > 1.0 ? std::abs(xi[k]) : 0.0;
            };
        case Type::CompensatorGap:
            return [k](std::span<const double> xi) { return xi[k] - clamp_unit(xi[k]); };
        case Type::Wedge:
            return [k](std::span<const double> xi) {
                const double a = std::abs(xi[k]);
                return std::min(a, a * a);
            };
    }
    return {};
}

Verdict classify_moment(const JumpMeasure& measure, const MomentKind& kind, double tol) {
    if (kind.type != MomentKind::Type::HSquare && (kind.index < 1 || kind.index > measure.dim()))
        throw MeasureError("moment index " + std::to_string(kind.index) + " outside 1.." +
                           std::to_string(measure.dim()));
    IntegrationOptions opts;
    opts.tol = tol;
    const IntegralResult r = integrate(measure, kind.integrand(), opts);
    const std::string crit = "moment:" + kind.name();
    switch (r.status) {
        case IntegralResult::Status::Finite:
            return Verdict::holds(crit, {{kind.name() + " integral", r.value, r.error_bound}});
        case IntegralResult::Status::Divergent:
            return Verdict::fails(crit, {{kind.name() + " diverges: " + r.note, kInf, 0.0}});
        case IntegralResult::Status::Inconclusive: break;
    }
    return Verdict::inconclusive(crit, {{kind.name() + ": " + r.note, r.value, r.tolerance}});
}

IntegralResult total_mass(const JumpMeasure& measure, double tol) {
    IntegrationOptions opts;
    opts.tol = tol;
    return integrate(measure, [](std::span<const double>) { return 1.0; }, opts);
}

}  // namespace affmart
