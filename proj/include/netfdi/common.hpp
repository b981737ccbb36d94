#ifndef NETFDI_COMMON_HPP
#define NETFDI_COMMON_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace netfdi {

using Vec = std::vector<double>;

// Error taxonomy; the CLI maps these onto its exit codes.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SynthesisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double linf_norm(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double linf_dist(const Vec& a, const Vec& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double l2_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Numerical slack added to every monitoring pass/fail inequality to absorb
// integrator and quadrature error.
inline constexpr double kAssertSlack = 1e-9;

}  // namespace netfdi

#endif
