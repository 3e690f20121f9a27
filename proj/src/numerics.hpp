// Internal quadrature and series-summation kernels shared by the measure
// engine and the Riccati evaluator.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>

namespace affmart::detail {

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    std::size_t evaluations = 0;
    bool ok = true;
};

using RealFn = std::function<double(double)>;

/// Adaptive Gauss-Kronrod on a bounded interval with no endpoint singularity.
QuadResult integrate_finite(const RealFn& f, double a, double b, double rel_tol, double abs_tol);

/// Integral from `a` to sign(a)*infinity via x = a*exp(s), |a| > 0.
QuadResult integrate_to_infinity(const RealFn& f, double a, double rel_tol, double abs_tol);

/// Integral between 0 and `b` (either sign) via x = b*exp(-s); tolerates
/// integrable power singularities at 0.
QuadResult integrate_from_zero(const RealFn& f, double b, double rel_tol, double abs_tol);

/// Integral over [lo, hi] split at -1, 0, 1 (the kinks of the truncation
/// function), with infinite bounds allowed.
QuadResult integrate_line(const RealFn& f, double lo, double hi, double rel_tol, double abs_tol);

template <class T>
struct SeriesSum {
    T value{};
    double error = 0.0;
    std::size_t terms = 0;
    bool ok = false;
};

struct SeriesSumOptions {
    double abs_tol = 1e-10;
    double rel_tol = 0.0;
    std::size_t start_terms = 64;
    std::size_t max_terms = std::size_t{1} << 20;
    /// Compare the estimate at N and 2N; otherwise a single Euler-Maclaurin
    /// evaluation at start_terms is returned with its correction-size error.
    bool verify = true;
};

/// Sum_{n>=1} term(n) where `term` is smooth for real arguments beyond
/// start_terms. Partial sums plus an Euler-Maclaurin tail; `direct(n)` is
/// used for the integer terms (it may read a cache).
template <class T>
SeriesSum<T> sum_series(const std::function<T(std::size_t)>& direct,
                        const std::function<T(double)>& smooth,
                        const SeriesSumOptions& opts);

/// Neumaier compensated accumulator (componentwise for complex values).
template <class T>
class CompensatedSum;

template <>
class CompensatedSum<double> {
public:
    void add(double x) {
        const double t = sum_ + x;
        comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

template <>
class CompensatedSum<std::complex<double>> {
public:
    void add(std::complex<double> x) {
        re_.add(x.real());
        im_.add(x.imag());
    }
    std::complex<double> value() const { return {re_.value(), im_.value()}; }

private:
    CompensatedSum<double> re_, im_;
};

/// exp(z) - 1 without cancellation for small |z|.
double expm1_safe(double z);
std::complex<double> expm1_safe(std::complex<double> z);

}  // namespace affmart::detail
