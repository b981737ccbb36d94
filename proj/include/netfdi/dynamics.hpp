#ifndef NETFDI_DYNAMICS_HPP
#define NETFDI_DYNAMICS_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "netfdi/common.hpp"
#include "netfdi/quadrature.hpp"

namespace netfdi {

// Closed-form scalar agent x' = -f(x) + q(x) u, y = h(x), with analytic
// derivatives. Where the family admits them, antiderivatives of h/q and 1/q
// are carried as well so storage evaluations avoid quadrature in hot loops.
class AgentModel {
  public:
    enum class Family { VehicleDrag, LinearLeak, Cubic, CubeRootOut, ExpOut, Saturating, CustomPoly };
    enum class Output { Identity, CubeRoot };

    static AgentModel vehicle_drag(double drag) { return AgentModel(Family::VehicleDrag, drag); }
    static AgentModel linear_leak(double a) { return AgentModel(Family::LinearLeak, a); }
    static AgentModel cubic(double c = 1.0) { return AgentModel(Family::Cubic, c); }
    static AgentModel cube_root_out() { return AgentModel(Family::CubeRootOut, 1.0); }
    static AgentModel exp_out() { return AgentModel(Family::ExpOut, 1.0); }
    static AgentModel saturating() { return AgentModel(Family::Saturating, 1.0); }
    static AgentModel custom_poly(Vec coeffs, Output out = Output::Identity) {
        AgentModel a(Family::CustomPoly, 0.0);
        a.coeffs_ = std::move(coeffs);
        a.output_ = out;
        return a;
    }

    Family family() const { return family_; }
    double param() const { return param_; }
    const Vec& coeffs() const { return coeffs_; }

    double f(double x) const {
        switch (family_) {
            case Family::VehicleDrag: return param_ * x * std::abs(x);
            case Family::LinearLeak: return param_ * x;
            case Family::Cubic: return param_ * x * x * x;
            case Family::CubeRootOut: return x;
            case Family::ExpOut: return x;
            case Family::Saturating: return std::tanh(x);
            case Family::CustomPoly: return poly(x);
        }
        return 0.0;
    }

    double df(double x) const {
        switch (family_) {
            case Family::VehicleDrag: return 2.0 * param_ * std::abs(x);
            case Family::LinearLeak: return param_;
            case Family::Cubic: return 3.0 * param_ * x * x;
            case Family::CubeRootOut: return 1.0;
            case Family::ExpOut: return 1.0;
            case Family::Saturating: {
                double c = std::cosh(x);
                return 1.0 / (c * c);
            }
            case Family::CustomPoly: return dpoly(x);
        }
        return 0.0;
    }

    double q(double) const { return 1.0; }
    double dq(double) const { return 0.0; }

    double h(double x) const {
        switch (family_) {
            case Family::CubeRootOut: return std::cbrt(x);
            case Family::ExpOut: return 1.0 - std::exp(-x);
            case Family::Saturating: return std::tanh(x);
            case Family::CustomPoly:
                return output_ == Output::CubeRoot ? std::cbrt(x) : x;
            default: return x;
        }
    }

    double dh(double x) const {
        switch (family_) {
            case Family::CubeRootOut: break;
            case Family::ExpOut: return std::exp(-x);
            case Family::Saturating: {
                double c = std::cosh(x);
                return 1.0 / (c * c);
            }
            case Family::CustomPoly:
                if (output_ == Output::Identity) return 1.0;
                break;
            default: return 1.0;
        }
        // cube-root output
        if (x == 0.0) return std::numeric_limits<double>::infinity();
        double c = std::cbrt(x);
        return 1.0 / (3.0 * c * c);
    }

    double f_over_q(double x) const { return f(x) / q(x); }

    double d_f_over_q(double x) const {
        double qx = q(x);
        return (df(x) * qx - f(x) * dq(x)) / (qx * qx);
    }

    // Antiderivative of h (q == 1 for every family here); used for exact
    // storage evaluation. Cross-checked against quadrature in the tests.
    double h_antiderivative(double x) const {
        switch (family_) {
            case Family::CubeRootOut: return 0.75 * std::cbrt(x) * x;  // (3/4) x^{4/3}
            case Family::ExpOut: return x + std::exp(-x);
            case Family::Saturating: return std::log(std::cosh(x));
            case Family::CustomPoly:
                return output_ == Output::CubeRoot ? 0.75 * std::cbrt(x) * x : 0.5 * x * x;
            default: return 0.5 * x * x;
        }
    }

    bool has_closed_form_storage() const { return true; }

    // h == identity makes the storage exactly (x - xbar)^2 / 2, which is the
    // cancellation-free form to use near the equilibrium.
    bool identity_output() const {
        switch (family_) {
            case Family::CubeRootOut:
            case Family::ExpOut:
            case Family::Saturating: return false;
            case Family::CustomPoly: return output_ == Output::Identity;
            default: return true;
        }
    }

    // Closed-form h^{-1}; NaN when y is outside the output range.
    double h_inverse(double y) const {
        switch (family_) {
            case Family::CubeRootOut: return y * y * y;
            case Family::ExpOut:
                return y < 1.0 ? -std::log1p(-y) : std::numeric_limits<double>::quiet_NaN();
            case Family::Saturating:
                return std::abs(y) < 1.0 ? std::atanh(y)
                                         : std::numeric_limits<double>::quiet_NaN();
            case Family::CustomPoly:
                return output_ == Output::CubeRoot ? y * y * y : y;
            default: return y;
        }
    }

  private:
    AgentModel(Family fam, double p) : family_(fam), param_(p) {}

    double poly(double x) const {
        double acc = 0.0;
        for (std::size_t k = coeffs_.size(); k-- > 0;) acc = acc * x + coeffs_[k];
        return acc;
    }
    double dpoly(double x) const {
        double acc = 0.0;
        for (std::size_t k = coeffs_.size(); k-- > 1;)
            acc = acc * x + coeffs_[k] * static_cast<double>(k);
        return acc;
    }

    Family family_;
    double param_;
    Output output_ = Output::Identity;
    Vec coeffs_;
};

// Static monotone edge nonlinearity with synthesis offsets: the evaluated
// output is mu = g(zeta - zeta_star) + mu_star.
class ControllerModel {
  public:
    enum class Family { Tanh, Linear };

    static ControllerModel tanh_ctrl() { return ControllerModel(Family::Tanh, 1.0); }
    static ControllerModel linear(double gain) { return ControllerModel(Family::Linear, gain); }

    Family family() const { return family_; }
    double gain() const { return gain_; }

    double g(double z) const {
        return family_ == Family::Tanh ? std::tanh(z) : gain_ * z;
    }
    double dg(double z) const {
        if (family_ == Family::Linear) return gain_;
        double c = std::cosh(z);
        return 1.0 / (c * c);
    }

    double evaluate(double zeta) const { return g(zeta - zeta_star) + mu_star; }
    double derivative(double zeta) const { return dg(zeta - zeta_star); }

    double zeta_star = 0.0;
    double mu_star = 0.0;

  private:
    ControllerModel(Family fam, double gn) : family_(fam), gain_(gn) {}

    Family family_;
    double gain_;
};

struct Interval {
    double lo = -1e3;
    double hi = 1e3;
    bool contains(double x) const { return x >= lo && x <= hi; }
};

struct SteadyStatePair {
    double u;
    double y;
    double x;
};

// Solves h(x) = y within bounds. The families carry closed-form inverses;
// the bisection-plus-Newton path below stays as the general route (to
// |h(x) - y| <= 1e-12 * max(1, |y|)) and as the cross-check oracle in the
// tests. Throws on y outside h's range over the bounds.
inline double invert_h(const AgentModel& a, double y, Interval bounds,
                       bool force_bisection = false) {
    const double tol = 1e-12 * std::max(1.0, std::abs(y));
    if (!force_bisection) {
        double x = a.h_inverse(y);
        if (std::isfinite(x) && bounds.contains(x)) return x;
        // Otherwise fall through: the bracketed path carries the range
        // diagnostics.
    }
    double lo = bounds.lo, hi = bounds.hi;
    double flo = a.h(lo) - y, fhi = a.h(hi) - y;
    if (flo > tol && fhi > tol)
        throw ValidationError("invert_h: output below range on bounds");
    if (flo < -tol && fhi < -tol)
        throw ValidationError("invert_h: output above range on bounds");
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = a.h(mid) - y;
        if (std::abs(fm) <= tol) {
            lo = hi = mid;
            break;
        }
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 8; ++it) {
        double r = a.h(x) - y;
        if (std::abs(r) <= tol) break;
        double d = a.dh(x);
        if (!(d > 0.0) || !std::isfinite(d)) break;
        double step = r / d;
        double nx = x - step;
        if (nx < bounds.lo || nx > bounds.hi) break;
        x = nx;
    }
    return x;
}

inline double steady_state_x(const AgentModel& a, double y, Interval bounds) {
    return invert_h(a, y, bounds);
}

// k^{-1}(y) = f(h^{-1}(y)) / q(h^{-1}(y)).
inline double k_inverse(const AgentModel& a, double y, Interval bounds) {
    double x = invert_h(a, y, bounds);
    return a.f_over_q(x);
}

// d k^{-1} / dy = (f/q)'(x) / h'(x) at x = h^{-1}(y).
inline double k_inverse_derivative_at_x(const AgentModel& a, double x) {
    double dhx = a.dh(x);
    return a.d_f_over_q(x) / dhx;
}

// Storage S(x) = integral_{xbar}^{x} (h(s) - h(xbar)) / q(s) ds, adaptive
// Gauss-Legendre; the closed-form antiderivative is used when the family
// provides one (all built-ins do). Antiderivative differencing cancels
// catastrophically near the equilibrium, so small offsets integrate the
// difference form directly instead.
inline double storage_value(const AgentModel& a, double x, double x_eq, bool force_quadrature = false) {
    if (x == x_eq) return 0.0;
    const double h_eq = a.h(x_eq);
    if (a.has_closed_form_storage() && !force_quadrature) {
        if (a.identity_output()) {
            double d = x - x_eq;
            return 0.5 * d * d;
        }
        // Antiderivative differencing unless the predicted rounding swamps the
        // value; in that regime a single Gauss panel on the difference
        // integrand is accurate (the integrand is smooth wherever the
        // antiderivative route actually cancels).
        double upper = a.h_antiderivative(x), lower = a.h_antiderivative(x_eq);
        double lin = h_eq * (x - x_eq);
        double s = (upper - lower) - lin;
        double rounding = 4e-16 * (std::abs(upper) + std::abs(lower) + std::abs(lin));
        if (s > 1e3 * rounding) return s;
        s = detail::gl_panel([&](double sig) { return (a.h(sig) - h_eq) / a.q(sig); },
                             x_eq, x, detail::kGl15Nodes, detail::kGl15Weights, 15);
        return std::max(0.0, s);
    }
    double s = integrate_adaptive([&](double sig) { return (a.h(sig) - h_eq) / a.q(sig); },
                                  x_eq, x, 1e-10);
    return std::max(0.0, s);
}

// d/dt S along x' = -f + q u, evaluated analytically via the chain rule.
inline double storage_rate(const AgentModel& a, double x, double x_eq, double u) {
    double xdot = -a.f(x) + a.q(x) * u;
    return (a.h(x) - a.h(x_eq)) / a.q(x) * xdot;
}

struct PassivityEstimate {
    double rho;
    Interval bounds;
};

// Grid infimum (with local golden-section refinement) of the secant ratio
// ((f/q)(x) - (f/q)(xbar)) / (h(x) - h(xbar)) over bounds. An over-state-bounds
// estimate, clamped at >= 0; not a global infimum.
inline PassivityEstimate passivity_index(const AgentModel& a, double x_eq, Interval bounds,
                                         std::size_t grid = 10000) {
    if (!bounds.contains(x_eq)) throw ValidationError("passivity_index: bounds must contain x_eq");
    const double u_eq = a.f_over_q(x_eq), y_eq = a.h(x_eq);
    auto ratio = [&](double x) {
        double dy = a.h(x) - y_eq;
        if (std::abs(dy) < 1e-14) {
            // Removable point: limit (f/q)'(xbar)/h'(xbar).
            double dhx = a.dh(x_eq);
            return std::isfinite(dhx) && dhx > 0 ? a.d_f_over_q(x_eq) / dhx
                                                 : std::numeric_limits<double>::infinity();
        }
        return (a.f_over_q(x) - u_eq) / dy;
    };

    double best = std::numeric_limits<double>::infinity();
    double best_x = x_eq;
    const double step = (bounds.hi - bounds.lo) / static_cast<double>(grid);
    for (std::size_t i = 0; i <= grid; ++i) {
        double x = bounds.lo + step * static_cast<double>(i);
        double r = ratio(x);
        if (r < best) {
            best = r;
            best_x = x;
        }
    }
    // Golden-section refinement around the grid argmin.
    double lo = std::max(bounds.lo, best_x - step), hi = std::min(bounds.hi, best_x + step);
    const double gr = 0.6180339887498949;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = ratio(x1), f2 = ratio(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = ratio(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = ratio(x2);
        }
    }
    best = std::min(best, std::min(f1, f2));
    return {std::max(0.0, best), bounds};
}

// Output passivity index of a static monotone controller on a zeta-range:
// nu = 1 / max g'. Conservative (secant slope <= max tangent slope).
inline double controller_passivity_index(const ControllerModel& c, double z_lo, double z_hi,
                                         std::size_t grid = 2000) {
    double max_slope = 0.0;
    const double step = (z_hi - z_lo) / static_cast<double>(grid);
    for (std::size_t i = 0; i <= grid; ++i)
        max_slope = std::max(max_slope, c.dg(z_lo + step * static_cast<double>(i) - c.zeta_star));
    if (max_slope <= 0.0) return 0.0;
    return 1.0 / max_slope;
}

struct MeipReport {
    bool q_positive = false;
    bool h_strictly_increasing = false;
    bool f_over_q_nondecreasing = false;
    bool coercive = false;
    bool pass() const {
        return q_positive && h_strictly_increasing && f_over_q_nondecreasing && coercive;
    }
};

// Grid checks for the control-affine MEIP sufficient conditions plus a
// coercivity proxy (|f/q| or |h| grows toward the bound endpoints).
inline MeipReport verify_meip(const AgentModel& a, Interval bounds, std::size_t grid = 2000) {
    MeipReport rep;
    rep.q_positive = true;
    rep.h_strictly_increasing = true;
    rep.f_over_q_nondecreasing = true;
    const double step = (bounds.hi - bounds.lo) / static_cast<double>(grid);
    double prev_k = a.f_over_q(bounds.lo);
    for (std::size_t i = 0; i <= grid; ++i) {
        double x = bounds.lo + step * static_cast<double>(i);
        if (!(a.q(x) > 0.0)) rep.q_positive = false;
        if (!(a.dh(x) > 0.0)) rep.h_strictly_increasing = false;
        if (i > 0) {
            double kx = a.f_over_q(x);
            if (kx < prev_k - 1e-12 * std::max(1.0, std::abs(prev_k)))
                rep.f_over_q_nondecreasing = false;
            prev_k = kx;
        }
    }
    // Coercivity proxy: endpoint magnitudes must clear the midpoint by a unit
    // margin in |f/q| or in |h|.
    double mid = 0.5 * (bounds.lo + bounds.hi);
    double growth_k = std::min(std::abs(a.f_over_q(bounds.lo)), std::abs(a.f_over_q(bounds.hi)));
    double growth_h = std::min(std::abs(a.h(bounds.lo)), std::abs(a.h(bounds.hi)));
    rep.coercive = growth_k > std::abs(a.f_over_q(mid)) + 1.0 ||
                   growth_h > std::abs(a.h(mid)) + 1.0;
    return rep;
}

// Exponent alpha of h near x_eq (|h(x)-h(x_eq)| ~ |x-x_eq|^alpha), probed from
// two shrinking offsets; feeds the power-law tail of convergence profiles.
inline double output_power_law_alpha(const AgentModel& a, double x_eq) {
    const double h0 = a.h(x_eq);
    const double d1 = 1e-4, d2 = 1e-6;
    double g1 = std::abs(a.h(x_eq + d1) - h0);
    double g2 = std::abs(a.h(x_eq + d2) - h0);
    if (g1 <= 0.0 || g2 <= 0.0) return 1.0;
    double alpha = std::log(g1 / g2) / std::log(d1 / d2);
    if (!std::isfinite(alpha) || alpha <= 0.0) return 1.0;
    return alpha;
}

}  // namespace netfdi

#endif
