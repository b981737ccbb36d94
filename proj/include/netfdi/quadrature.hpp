#ifndef NETFDI_QUADRATURE_HPP
#define NETFDI_QUADRATURE_HPP

#include <cmath>
#include <functional>

#include "netfdi/common.hpp"

namespace netfdi {
namespace detail {

// Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr double kGl7Nodes[7] = {
    -0.9491079123427585, -0.7415311855993945, -0.4058451513773972, 0.0,
    0.4058451513773972,  0.7415311855993945,  0.9491079123427585};
inline constexpr double kGl7Weights[7] = {
    0.1294849661688697, 0.2797053914892766, 0.3818300505051189, 0.4179591836734694,
    0.3818300505051189, 0.2797053914892766, 0.1294849661688697};

inline constexpr double kGl15Nodes[15] = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272, -0.7244177313601701,
    -0.5709721726085388, -0.3941513470775634, -0.2011940939974345, 0.0,
    0.2011940939974345,  0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
    0.8482065834104272,  0.9372733924007060,  0.9879925180204854};
inline constexpr double kGl15Weights[15] = {
    0.0307532419961173, 0.0703660474881081, 0.1071592204671719, 0.1395706779261543,
    0.1662692058169939, 0.1861610000155622, 0.1984314853271116, 0.2025782419255613,
    0.1984314853271116, 0.1861610000155622, 0.1662692058169939, 0.1395706779261543,
    0.1071592204671719, 0.0703660474881081, 0.0307532419961173};

template <typename F>
double gl_panel(const F& f, double a, double b, const double* nodes, const double* weights,
                int order) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < order; ++i) s += weights[i] * f(mid + half * nodes[i]);
    return s * half;
}

template <typename F>
double adaptive_gl_rec(const F& f, double a, double b, double tol, int depth) {
    const double coarse = gl_panel(f, a, b, kGl7Nodes, kGl7Weights, 7);
    const double fine = gl_panel(f, a, b, kGl15Nodes, kGl15Weights, 15);
    if (depth >= 40 || std::abs(fine - coarse) <= tol * (1.0 + std::abs(fine)))
        return fine;
    const double mid = 0.5 * (a + b);
    return adaptive_gl_rec(f, a, mid, tol * 0.7, depth + 1) +
           adaptive_gl_rec(f, mid, b, tol * 0.7, depth + 1);
}

}  // namespace detail

// Adaptive Gauss-Legendre integration of f over [a, b] to relative tolerance tol.
// Signed: a > b integrates backwards.
template <typename F>
double integrate_adaptive(const F& f, double a, double b, double tol = 1e-10) {
    if (a == b) return 0.0;
    double sign = 1.0;
    if (a > b) {
        std::swap(a, b);
        sign = -1.0;
    }
    return sign * detail::adaptive_gl_rec(f, a, b, tol, 0);
}

}  // namespace netfdi

#endif
