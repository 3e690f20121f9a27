#include "numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace affmart::detail {

namespace {

constexpr unsigned kMaxDepth = 12;
// Log-variable panels are never stopped before this many e-folds.
constexpr double kMinLogSpan = 24.0;

QuadResult gk(const RealFn& f, double a, double b, double rel_tol) {
    QuadResult r;
    auto counted = [&](double x) {
        ++r.evaluations;
        return f(x);
    };
    double err = 0.0, l1 = 0.0;
    r.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        counted, a, b, kMaxDepth, std::max(rel_tol, 1e-14), &err, &l1);
    r.error = err;
    r.ok = std::isfinite(r.value) && std::isfinite(err);
    return r;
}

// Integral over s in [0, s_cap] of g(s) where g decays at large s.
QuadResult log_panels(const RealFn& g, double s_cap, double rel_tol, double abs_tol) {
    QuadResult total;
    CompensatedSum<double> acc;
    double s0 = 0.0;
    double width = 1.0;
    for (;;) {
        const double s1 = std::min(s0 + width, s_cap);
        QuadResult panel = gk(g, s0, s1, rel_tol);
        total.evaluations += panel.evaluations;
        if (!panel.ok) {
            total.ok = false;
            total.value = acc.value();
            return total;
        }
        acc.add(panel.value);
        total.error += panel.error;

        const double tol_eff = std::max(abs_tol, rel_tol * std::abs(acc.value()));
        const double g1 = std::abs(g(s1));
        const double g0 = std::abs(g(s1 - 0.5));
        total.evaluations += 2;
        double remainder = std::numeric_limits<double>::infinity();
        if (g1 == 0.0 && g0 == 0.0) {
            remainder = 0.0;
        } else if (g1 < g0) {
            const double rate = std::log(g0 / g1) / 0.5;
            remainder = g1 / rate;
        }
        if (s1 >= s_cap) {
            if (!(remainder <= tol_eff)) total.ok = false;
            total.error += std::isfinite(remainder) ? remainder : 0.0;
            break;
        }
        if (s1 >= kMinLogSpan && remainder <= 0.5 * tol_eff) {
            total.error += remainder;
            break;
        }
        s0 = s1;
        width = std::max(1.0, s1);
    }
    total.value = acc.value();
    return total;
}

}  // namespace

QuadResult integrate_finite(const RealFn& f, double a, double b, double rel_tol, double abs_tol) {
    if (a == b) return {};
    QuadResult r = gk(f, a, b, rel_tol);
    (void)abs_tol;
    return r;
}

QuadResult integrate_to_infinity(const RealFn& f, double a, double rel_tol, double abs_tol) {
    const double scale = std::abs(a);
    const double s_cap = std::log(1e300 / scale);
    RealFn g = [&](double s) {
        const double x = a * std::exp(s);
        const double v = f(x);
        return v == 0.0 ? 0.0 : v * scale * std::exp(s);
    };
    return log_panels(g, s_cap, rel_tol, abs_tol);
}

QuadResult integrate_from_zero(const RealFn& f, double b, double rel_tol, double abs_tol) {
    const double scale = std::abs(b);
    const double s_cap = std::log(scale / 1e-300);
    RealFn g = [&](double s) {
        const double x = b * std::exp(-s);
        const double v = f(x);
        return v == 0.0 ? 0.0 : v * scale * std::exp(-s);
    };
    return log_panels(g, s_cap, rel_tol, abs_tol);
}

QuadResult integrate_line(const RealFn& f, double lo, double hi, double rel_tol, double abs_tol) {
    QuadResult total;
    if (!(lo < hi)) return total;
    std::vector<double> cuts{lo};
    for (double c : {-1.0, 0.0, 1.0})
        if (c > lo && c < hi) cuts.push_back(c);
    cuts.push_back(hi);

    CompensatedSum<double> acc;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = cuts[k], b = cuts[k + 1];
        QuadResult piece;
        if (std::isinf(a) && std::isinf(b)) {
            total.ok = false;
            return total;
        } else if (std::isinf(b)) {
            piece = integrate_to_infinity(f, a, rel_tol, abs_tol);
        } else if (std::isinf(a)) {
            piece = integrate_to_infinity(f, b, rel_tol, abs_tol);
        } else if (a == 0.0) {
            piece = integrate_from_zero(f, b, rel_tol, abs_tol);
        } else if (b == 0.0) {
            piece = integrate_from_zero(f, a, rel_tol, abs_tol);
        } else {
            piece = integrate_finite(f, a, b, rel_tol, abs_tol);
        }
        acc.add(piece.value);
        total.error += piece.error;
        total.evaluations += piece.evaluations;
        total.ok = total.ok && piece.ok;
    }
    total.value = acc.value();
    return total;
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
double magnitude(const T& v) {
    return std::abs(v);
}

template <class T>
QuadResult integrate_tail(const std::function<T(double)>& f, double from, double rel_tol,
                          double abs_tol, T& out);

template <>
QuadResult integrate_tail<double>(const std::function<double(double)>& f, double from,
                                  double rel_tol, double abs_tol, double& out) {
    QuadResult r = integrate_to_infinity(f, from, rel_tol, abs_tol);
    out = r.value;
    return r;
}

template <>
QuadResult integrate_tail<std::complex<double>>(
    const std::function<std::complex<double>(double)>& f, double from, double rel_tol,
    double abs_tol, std::complex<double>& out) {
    RealFn re = [&](double x) { return f(x).real(); };
    RealFn im = [&](double x) { return f(x).imag(); };
    QuadResult a = integrate_to_infinity(re, from, rel_tol, abs_tol);
    QuadResult b = integrate_to_infinity(im, from, rel_tol, abs_tol);
    out = {a.value, b.value};
    a.error += b.error;
    a.evaluations += b.evaluations;
    a.ok = a.ok && b.ok;
    return a;
}

// Sum_{n > N} f(n) ~ int_N^inf f - f(N)/2 - f'(N)/12 + f'''(N)/720.
template <class T>
struct TailEstimate {
    T value{};
    double error = 0.0;
    std::size_t evaluations = 0;
    bool ok = false;
};

template <class T>
TailEstimate<T> em_tail(const std::function<T(double)>& f, double N, double rel_tol,
                        double abs_tol) {
    TailEstimate<T> t;
    const T f0 = f(N);
    const T fp1 = f(N + 1), fm1 = f(N - 1), fp2 = f(N + 2), fm2 = f(N - 2);
    const T d1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / 12.0;
    const T d3 = (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) / 2.0;
    t.evaluations = 5;

    // Superpolynomial decay: bound the tail directly and skip the integral.
    const T f_far = f(2 * N);
    ++t.evaluations;
    const double a0 = magnitude(f0), a1 = magnitude(f_far);
    if (a0 == 0.0 && a1 == 0.0 && magnitude(d1) == 0.0) {
        t.ok = true;
        return t;
    }
    if (a1 > 0.0 && a0 > 0.0) {
        const double q = std::log2(a0 / a1);
        if (q > 24.0) {
            const double bound = a0 * N / (q - 1.0);
            if (bound <= 1e-3 * std::max(abs_tol, 1e-300)) {
                t.error = bound;
                t.ok = std::isfinite(a0);
                return t;
            }
        }
    }

    T integral{};
    QuadResult q = integrate_tail<T>(f, N, rel_tol, 0.1 * abs_tol, integral);
    t.evaluations += q.evaluations;
    t.value = integral - 0.5 * f0 - d1 / 12.0 + d3 / 720.0;
    t.error = q.error + magnitude(d3) / 720.0;
    t.ok = q.ok && std::isfinite(magnitude(t.value));
    return t;
}

}  // namespace

template <class T>
SeriesSum<T> sum_series(const std::function<T(std::size_t)>& direct,
                        const std::function<T(double)>& smooth, const SeriesSumOptions& opts) {
    SeriesSum<T> out;
    std::size_t N = std::max<std::size_t>(opts.start_terms, 8);
    CompensatedSum<T> partial;
    std::size_t summed = 0;
    auto extend_to = [&](std::size_t upto) {
        for (std::size_t n = summed + 1; n <= upto; ++n) partial.add(direct(n));
        summed = upto;
    };
    const double quad_rel = std::max(opts.rel_tol, 1e-13);

    extend_to(N);
    TailEstimate<T> tail = em_tail<T>(smooth, static_cast<double>(N), quad_rel, opts.abs_tol);
    T estimate = partial.value() + tail.value;
    out.terms = N;
    if (!opts.verify) {
        out.value = estimate;
        out.error = tail.error;
        const double tol_eff = std::max(opts.abs_tol, opts.rel_tol * magnitude(estimate));
        out.ok = tail.ok && out.error <= tol_eff;
        return out;
    }
    while (2 * N <= opts.max_terms) {
        extend_to(2 * N);
        TailEstimate<T> tail2 =
            em_tail<T>(smooth, static_cast<double>(2 * N), quad_rel, opts.abs_tol);
        const T estimate2 = partial.value() + tail2.value;
        const double err = magnitude(estimate2 - estimate) + tail2.error;
        out.value = estimate2;
        out.error = err;
        out.terms = 2 * N;
        const double tol_eff = std::max(opts.abs_tol, opts.rel_tol * magnitude(estimate2));
        if (tail.ok && tail2.ok && err <= tol_eff) {
            out.ok = true;
            return out;
        }
        estimate = estimate2;
        tail = tail2;
        N *= 2;
    }
    out.ok = false;
    return out;
}

template SeriesSum<double> sum_series<double>(const std::function<double(std::size_t)>&,
                                              const std::function<double(double)>&,
                                              const SeriesSumOptions&);
template SeriesSum<std::complex<double>> sum_series<std::complex<double>>(
    const std::function<std::complex<double>(std::size_t)>&,
    const std::function<std::complex<double>(double)>&, const SeriesSumOptions&);

double expm1_safe(double z) { return std::expm1(z); }

std::complex<double> expm1_safe(std::complex<double> z) {
    const double x = z.real(), y = z.imag();
    if (y == 0.0) return {std::expm1(x), 0.0};
    const double s = std::sin(0.5 * y);
    const double re = std::expm1(x) * std::cos(y) - 2.0 * s * s;
    const double im = std::exp(x) * std::sin(y);
    return {re, im};
}

}  // namespace affmart::detail
