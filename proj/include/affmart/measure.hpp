#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "affmart/expr.hpp"
#include "affmart/verdict.hpp"

namespace affmart {

class MeasureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Atom {
    std::vector<double> point;
    double weight = 0.0;
};

/// Declared asymptotics weight(n) ~ c * n^{-p}.
struct TailDecay {
    double c = 1.0;
    double p = 2.0;
};

struct Interval {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
};

struct FiniteAtoms {
    std::vector<Atom> atoms;
};

/// Atoms at point(n) with weight(n), n = 1, 2, ...
struct AtomSeries {
    std::vector<Expr> point_exprs;
    Expr weight_expr;
    TailDecay tail;
    double truncation_tol = 1e-10;
};

/// Density over a coordinate box with exactly one free coordinate. Optional
/// `extra_coords` append derived coordinates (expressions in xi1..xik of the
/// base box), which is how lifted measures are carried.
struct DensityMeasure {
    Expr density_expr;
    std::vector<Interval> domain;
    std::vector<Expr> extra_coords;
    double tail_exponent_at_zero = 0.0;
    double tail_exponent_at_infinity = -2.0;
    double quadrature_tol = 1e-8;

    std::size_t free_coordinate() const;
};

/// Levy-type measure on D \ {0}.
class JumpMeasure {
public:
    enum class Kind { FiniteAtomic, SeriesAtomic, Density };

    static JumpMeasure zero(std::size_t dim);
    static JumpMeasure finite(std::size_t dim, std::vector<Atom> atoms);
    static JumpMeasure series(std::vector<Expr> point_exprs, Expr weight_expr, TailDecay tail,
                              double truncation_tol = 1e-10);
    static JumpMeasure density(Expr density_expr, std::vector<Interval> domain,
                               double tail_exponent_at_zero, double tail_exponent_at_infinity,
                               double quadrature_tol = 1e-8, std::vector<Expr> extra_coords = {});

    Kind kind() const;
    std::size_t dim() const { return dim_; }
    /// True for a finite measure without atoms.
    bool is_zero() const;

    const FiniteAtoms& finite_atoms() const { return std::get<FiniteAtoms>(repr_); }
    const AtomSeries& atom_series() const { return std::get<AtomSeries>(repr_); }
    const DensityMeasure& density_measure() const { return std::get<DensityMeasure>(repr_); }

    /// Point of the n-th series atom (n >= 1, real n allowed for smooth extension).
    std::vector<double> series_point(double n) const;
    double series_weight(double n) const;
    /// Full-dimensional point of a density measure at free coordinate value x.
    void density_point(double x, std::vector<double>& base, std::vector<double>& full) const;

private:
    JumpMeasure(std::size_t dim, std::variant<FiniteAtoms, AtomSeries, DensityMeasure> repr)
        : dim_(dim), repr_(std::move(repr)) {}

    std::size_t dim_ = 0;
    std::variant<FiniteAtoms, AtomSeries, DensityMeasure> repr_;
};

struct IntegralResult {
    enum class Status { Finite, Divergent, Inconclusive };

    Status status = Status::Inconclusive;
    double value = 0.0;
    double error_bound = 0.0;
    /// Absolute tolerance the result was checked against.
    double tolerance = 0.0;
    /// Series terms or quadrature nodes consumed.
    std::size_t terms_used = 0;
    std::string note;

    bool finite() const { return status == Status::Finite; }
};

const char* to_string(IntegralResult::Status s);

using PointFunction = std::function<double(std::span<const double>)>;
using ComplexPointFunction = std::function<std::complex<double>(std::span<const double>)>;

struct IntegrationOptions {
    /// Absolute tolerance for atoms and series; relative for densities.
    double tol = 1e-10;
    /// Decide convergence from declared tails before summing. Callers that
    /// know the integral converges (admissible Riccati integrands) skip it.
    bool classify = true;
};

/// Integral of `integrand` (an expression in xi1..xid) against the measure.
IntegralResult measure_integral(const JumpMeasure& measure, const Expr& integrand, double tol);

IntegralResult integrate(const JumpMeasure& measure, const PointFunction& f,
                         const IntegrationOptions& opts = {});

struct ComplexIntegral {
    std::complex<double> value;
    double error_bound = 0.0;
    bool ok = false;
    std::string note;
};

/// Integral of a complex integrand known to be integrable.
ComplexIntegral integrate_complex(const JumpMeasure& measure, const ComplexPointFunction& f,
                                  double abs_tol, double rel_tol = 0.0);

/// Integrands used by the moment checks. Indices are 1-based coordinates.
struct MomentKind {
    enum class Type { HSquare, HAbs, BigJumpAbs, CompensatorGap, Wedge };
    Type type = Type::HSquare;
    std::size_t index = 0;

    static MomentKind h_square() { return {Type::HSquare, 0}; }
    static MomentKind h_abs(std::size_t k) { return {Type::HAbs, k}; }
    static MomentKind big_jump_abs(std::size_t i) { return {Type::BigJumpAbs, i}; }
    static MomentKind compensator_gap(std::size_t i) { return {Type::CompensatorGap, i}; }
    static MomentKind wedge(std::size_t k) { return {Type::Wedge, k}; }

    std::string name() const;
    PointFunction integrand() const;
};

/// Holds when the moment is finite, Fails when it provably diverges.
Verdict classify_moment(const JumpMeasure& measure, const MomentKind& kind, double tol = 1e-10);

/// Total mass, or an error when it is infinite or cannot be bounded.
IntegralResult total_mass(const JumpMeasure& measure, double tol = 1e-10);

}  // namespace affmart
