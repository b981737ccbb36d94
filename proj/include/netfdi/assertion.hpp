#ifndef NETFDI_ASSERTION_HPP
#define NETFDI_ASSERTION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "netfdi/common.hpp"
#include "netfdi/dynamics.hpp"
#include "netfdi/graph.hpp"
#include "netfdi/rng.hpp"
#include "netfdi/simulator.hpp"
#include "netfdi/steady_state.hpp"

namespace netfdi {

// Conjectured equilibrium of a (network, mask) pair: agent states, outputs and
// controller steady outputs. y_i = h_i(x_i) holds to inversion tolerance.
struct ConjecturedLimit {
    Vec x_eq;
    Vec y_eq;
    Vec mu_eq;  // 0 on absent edges
};

inline ConjecturedLimit make_conjectured_limit(const NetworkSystem& net, const SubgraphMask& mask,
                                               const Vec& y_eq) {
    ConjecturedLimit lim;
    lim.y_eq = y_eq;
    lim.x_eq.resize(net.n());
    for (std::size_t i = 0; i < net.n(); ++i)
        lim.x_eq[i] = invert_h(net.agents[i], y_eq[i], net.state_bounds);
    Vec zeta = net.incidence.apply_transpose(y_eq, &mask);
    lim.mu_eq.assign(net.m(), 0.0);
    for (std::size_t e = 0; e < net.m(); ++e)
        if (mask.present(e)) lim.mu_eq[e] = net.controllers[e].evaluate(zeta[e]);
    return lim;
}

// Passivity gains used by the monitors, estimated over the declared state
// bounds with a small conservative haircut against grid under-resolution.
struct MonitorGains {
    Vec rho;  // per agent
    Vec nu;   // per edge (0 on absent edges)
    double rho_min = 0.0;
};

inline MonitorGains compute_monitor_gains(const NetworkSystem& net, const SubgraphMask& mask,
                                          const ConjecturedLimit& limit) {
    constexpr double haircut = 1.0 - 1e-6;
    MonitorGains gains;
    gains.rho.resize(net.n());
    for (std::size_t i = 0; i < net.n(); ++i)
        gains.rho[i] = haircut * passivity_index(net.agents[i], limit.x_eq[i], net.state_bounds).rho;
    gains.rho_min = *std::min_element(gains.rho.begin(), gains.rho.end());
    gains.nu.assign(net.m(), 0.0);
    for (std::size_t e = 0; e < net.m(); ++e) {
        if (!mask.present(e)) continue;
        auto [i, j] = net.graph.edge(e);
        double z_lo = net.agents[static_cast<std::size_t>(j)].h(net.state_bounds.lo) -
                      net.agents[static_cast<std::size_t>(i)].h(net.state_bounds.hi);
        double z_hi = net.agents[static_cast<std::size_t>(j)].h(net.state_bounds.hi) -
                      net.agents[static_cast<std::size_t>(i)].h(net.state_bounds.lo);
        gains.nu[e] = haircut * controller_passivity_index(net.controllers[e], z_lo, z_hi);
    }
    return gains;
}

// Total storage w.r.t. the conjectured equilibrium.
inline double total_storage(const NetworkSystem& net, const ConjecturedLimit& limit, const Vec& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < net.n(); ++i)
        s += storage_value(net.agents[i], x[i], limit.x_eq[i]);
    return s;
}

// Dissipation-rate lower bound G(x) = sum rho_i dy_i^2 + sum nu_e dmu_e^2
// (static controllers), evaluated from the monitor's own model.
inline double dissipation_rhs(const NetworkSystem& net, const SubgraphMask& mask,
                              const ConjecturedLimit& limit, const MonitorGains& gains,
                              const Vec& x) {
    double g = 0.0;
    Vec y(net.n());
    for (std::size_t i = 0; i < net.n(); ++i) {
        y[i] = net.agents[i].h(x[i]);
        double dy = y[i] - limit.y_eq[i];
        g += gains.rho[i] * dy * dy;
    }
    Vec zeta = net.incidence.apply_transpose(y, &mask);
    for (std::size_t e = 0; e < net.m(); ++e) {
        if (!mask.present(e)) continue;
        double dmu = net.controllers[e].evaluate(zeta[e]) - limit.mu_eq[e];
        g += gains.nu[e] * dmu * dmu;
    }
    return g;
}

// ---------------------------------------------------------------------------
// High-rate sampling protocol
// ---------------------------------------------------------------------------

struct SublevelBox {
    Vec lo, hi;
};

// Product sublevel proxy: per-agent interval { x : S_i(x) <= level }, clipped
// to the state bounds. A superset of the joint sublevel set, so bounds built
// on it stay valid.
inline SublevelBox sublevel_box(const NetworkSystem& net, const ConjecturedLimit& limit,
                                double level) {
    SublevelBox box;
    box.lo.resize(net.n());
    box.hi.resize(net.n());
    for (std::size_t i = 0; i < net.n(); ++i) {
        const AgentModel& a = net.agents[i];
        const double xe = limit.x_eq[i];
        auto side = [&](double outer) {
            if (storage_value(a, outer, xe) <= level) return outer;
            double in = xe, out = outer;
            for (int it = 0; it < 100; ++it) {
                double mid = 0.5 * (in + out);
                (storage_value(a, mid, xe) <= level ? in : out) = mid;
            }
            return in;
        };
        box.lo[i] = side(net.state_bounds.lo);
        box.hi[i] = side(net.state_bounds.hi);
    }
    return box;
}

// Lipschitz bound M on dG/dt over the sublevel proxy (Euclidean norms,
// factored per coordinate, 10% safety factor). Static controllers only; the
// controller-state terms vanish.
inline double bound_M(const NetworkSystem& net, const SubgraphMask& mask,
                      const ConjecturedLimit& limit, const MonitorGains& gains, double s_level,
                      std::size_t grid = 1000) {
    if (!(s_level > 0.0)) return 0.0;
    const std::size_t n = net.n(), m = net.m();
    const SublevelBox box = sublevel_box(net, limit, s_level);

    Vec f_min(n, 0.0), f_max(n, 0.0), q_min(n, 0.0), q_max(n, 0.0), max_dh(n, 0.0), max_dy(n, 0.0);
    Vec h_lo(n), h_hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const AgentModel& a = net.agents[i];
        const double step = (box.hi[i] - box.lo[i]) / static_cast<double>(grid);
        f_min[i] = f_max[i] = a.f(box.lo[i]);
        q_min[i] = q_max[i] = a.q(box.lo[i]);
        for (std::size_t k = 0; k <= grid; ++k) {
            double x = box.lo[i] + step * static_cast<double>(k);
            f_min[i] = std::min(f_min[i], a.f(x));
            f_max[i] = std::max(f_max[i], a.f(x));
            q_min[i] = std::min(q_min[i], a.q(x));
            q_max[i] = std::max(q_max[i], a.q(x));
            max_dh[i] = std::max(max_dh[i], a.dh(x));
        }
        h_lo[i] = a.h(box.lo[i]);
        h_hi[i] = a.h(box.hi[i]);
        max_dy[i] = std::max(std::abs(h_lo[i] - limit.y_eq[i]), std::abs(h_hi[i] - limit.y_eq[i]));
        if (!std::isfinite(max_dh[i]) || !std::isfinite(f_max[i]))
            throw SolverError("bound_M: unbounded quantity on the sublevel box (agent " +
                              std::to_string(i) + ")");
    }

    Vec max_dmu(m, 0.0), out_lo(m, 0.0), out_hi(m, 0.0), max_dg(m, 0.0);
    for (std::size_t e = 0; e < m; ++e) {
        if (!mask.present(e)) continue;
        auto [i, j] = net.graph.edge(e);
        const ControllerModel& c = net.controllers[e];
        double z_lo = h_lo[static_cast<std::size_t>(j)] - h_hi[static_cast<std::size_t>(i)];
        double z_hi = h_hi[static_cast<std::size_t>(j)] - h_lo[static_cast<std::size_t>(i)];
        double mu_lo = c.evaluate(z_lo), mu_hi = c.evaluate(z_hi);  // g monotone
        max_dmu[e] = std::max(std::abs(mu_lo - limit.mu_eq[e]), std::abs(mu_hi - limit.mu_eq[e]));
        out_lo[e] = mu_lo + net.bias[e];
        out_hi[e] = mu_hi + net.bias[e];
        const double step = (z_hi - z_lo) / static_cast<double>(grid);
        for (std::size_t k = 0; k <= grid; ++k)
            max_dg[e] = std::max(max_dg[e], c.derivative(z_lo + step * static_cast<double>(k)));
    }

    // Interval bound on the closed-loop field: u_i = v_i - sum_e sign * out_e,
    // then xdot_i in -[f] + [q][u]. Keeping f and q u coupled through
    // intervals preserves the near-equilibrium cancellation, so M decays with
    // the level.
    Vec u_lo(n, 0.0), u_hi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) u_lo[i] = u_hi[i] = net.feedforward[i];
    for (std::size_t e = 0; e < m; ++e) {
        if (!mask.present(e)) continue;
        auto [i, j] = net.graph.edge(e);
        // Tail i carries -out_e, head j carries +out_e.
        u_lo[static_cast<std::size_t>(i)] -= out_hi[e];
        u_hi[static_cast<std::size_t>(i)] -= out_lo[e];
        u_lo[static_cast<std::size_t>(j)] += out_lo[e];
        u_hi[static_cast<std::size_t>(j)] += out_hi[e];
    }

    double m_xdot_sq = 0.0, m_dy_sq = 0.0, m_dmu_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double qu_candidates[4] = {q_min[i] * u_lo[i], q_min[i] * u_hi[i], q_max[i] * u_lo[i],
                                   q_max[i] * u_hi[i]};
        double qu_lo = *std::min_element(qu_candidates, qu_candidates + 4);
        double qu_hi = *std::max_element(qu_candidates, qu_candidates + 4);
        double xd_lo = -f_max[i] + qu_lo, xd_hi = -f_min[i] + qu_hi;
        double xi = std::max(std::abs(xd_lo), std::abs(xd_hi));
        m_xdot_sq += xi * xi;
        m_dy_sq += max_dy[i] * max_dy[i];
    }
    for (std::size_t e = 0; e < m; ++e) m_dmu_sq += max_dmu[e] * max_dmu[e];

    const double m_xdot = std::sqrt(m_xdot_sq);
    const double m_ydot = *std::max_element(max_dh.begin(), max_dh.end());
    const double m_dy = std::sqrt(m_dy_sq);
    const double m_dmu = std::sqrt(m_dmu_sq);
    const double rho_star = *std::max_element(gains.rho.begin(), gains.rho.end());
    double nu_star = 0.0, dg_star = 0.0;
    for (std::size_t e = 0; e < m; ++e)
        if (mask.present(e)) {
            nu_star = std::max(nu_star, gains.nu[e]);
            dg_star = std::max(dg_star, max_dg[e]);
        }

    double m_mudot_x = 0.0;
    if (mask.n_present() > 0) {
        // ||diag(g') E^T diag(h')|| <= max g' * ||E_mask|| * max h'.
        Mat inc_masked(n, mask.n_present());
        std::size_t col = 0;
        for (std::size_t e = 0; e < m; ++e) {
            if (!mask.present(e)) continue;
            auto [i, j] = net.graph.edge(e);
            inc_masked(static_cast<std::size_t>(i), col) = 1.0;
            inc_masked(static_cast<std::size_t>(j), col) = -1.0;
            ++col;
        }
        m_mudot_x = dg_star * spectral_norm(inc_masked) * m_ydot;
    }

    double m_value = (rho_star * m_dy * m_ydot + nu_star * m_dmu * m_mudot_x) * m_xdot;
    if (!std::isfinite(m_value)) throw SolverError("bound_M: non-finite bound");
    return 1.1 * m_value;
}

struct HighRateSchedule {
    double sample_interval;  // dt
    double epsilon;
    double horizon;  // phase duration
};

// Geometric-mean split of the budget (M/2) dt + eps = delta: dt = delta/M,
// eps = delta/2, horizon = S0/eps. M == 0 means the protocol terminates with a
// pass (already at the equilibrium).
inline HighRateSchedule high_rate_schedule(double s0, double delta1, double m_bound) {
    if (!(delta1 > 0.0)) throw ValidationError("high_rate_schedule: delta1 must be positive");
    if (m_bound <= 0.0) return {std::numeric_limits<double>::infinity(), delta1 / 2.0, 0.0};
    return {delta1 / m_bound, delta1 / 2.0, s0 / (delta1 / 2.0)};
}

struct Certificate {
    std::string kind;  // "high_rate_pair" | "profile_pair" | "profile_delta_bound"
    double t_prev = 0.0, t_next = 0.0;
    std::size_t step_prev = 0, step_next = 0;
    double lhs = 0.0, rhs = 0.0;
};

struct PairCheck {
    bool pass;
    double lhs, rhs;
};

// Sampled dissipation inequality: S(t_next) - S(t_prev) <= -G(t_prev) dt +
// (M/2) dt^2, numerical slack added.
inline PairCheck high_rate_step(double s_prev, double g_prev, double s_next, double dt,
                                double m_bound) {
    PairCheck c;
    c.lhs = s_next - s_prev;
    c.rhs = -g_prev * dt + 0.5 * m_bound * dt * dt;
    c.pass = c.lhs <= c.rhs + kAssertSlack;
    return c;
}

// ---------------------------------------------------------------------------
// Convergence profiles
// ---------------------------------------------------------------------------

// Tabulated convergence profile of one agent around one equilibrium:
// omega(theta) = sup { S(x) : (h(x) - h(x_eq))^2 <= theta } and its inverse.
// Log-log tables with exact re-evaluation for point queries; the inverse is
// bracketed by the table and refined by bisection on the exact omega.
class AgentProfile {
  public:
    AgentProfile(const AgentModel& agent, double x_eq, Interval bounds, std::size_t table_size = 10000)
        : agent_(&agent), x_eq_(x_eq), bounds_(bounds) {
        const double h_eq = agent.h(x_eq);
        const double span_lo = h_eq - agent.h(bounds.lo);
        const double span_hi = agent.h(bounds.hi) - h_eq;
        theta_max_ = std::max(span_lo * span_lo, span_hi * span_hi);
        if (!(theta_max_ > 0.0)) throw SolverError("profile: degenerate output range");
        theta_min_ = std::min(theta_max_ * 1e-18, 1e-12);
        const double alpha = output_power_law_alpha(agent, x_eq);
        beta_ = 2.0 * alpha / (alpha + 1.0);

        log_theta_lo_ = std::log(theta_min_);
        log_theta_step_ = (std::log(theta_max_) - log_theta_lo_) / static_cast<double>(table_size - 1);
        omega_table_.resize(table_size);

        // March the interval endpoints outward as theta grows; Newton warm
        // starts keep construction cheap. Saturation = both endpoints clipped
        // at the bounds, after which omega is constant and has no inverse.
        double x_left = x_eq, x_right = x_eq;
        saturated_at_ = table_size;
        for (std::size_t k = 0; k < table_size; ++k) {
            const double theta = std::exp(log_theta_lo_ + log_theta_step_ * static_cast<double>(k));
            const double root = std::sqrt(theta);
            x_left = march(x_left, h_eq - root, /*downward=*/true);
            x_right = march(x_right, h_eq + root, /*downward=*/false);
            omega_table_[k] = std::max(storage_value(agent, x_left, x_eq),
                                       storage_value(agent, x_right, x_eq));
            if (x_left == bounds.lo && x_right == bounds.hi && saturated_at_ == table_size)
                saturated_at_ = k + 1;
        }
        if (!std::isfinite(omega_table_.back()) || omega_table_.back() <= 0.0)
            throw SolverError("profile: omega not finite/positive on the grid");
        omega_max_ = omega_table_[saturated_at_ - 1];
        // Measured low-end slope of log omega vs log theta for extrapolation,
        // cross-checked against the analytic power law omega ~ theta^(1/beta).
        gamma_ = (std::log(omega_table_[32]) - std::log(omega_table_[0])) / (32.0 * log_theta_step_);
        if (!(std::abs(gamma_ - 1.0 / beta_) <= 0.25 / beta_)) gamma_ = 1.0 / beta_;
    }

    double beta() const { return beta_; }
    double omega_max() const { return omega_max_; }
    double theta_max() const { return theta_max_; }

    // Exact omega via fresh endpoint inversion and storage evaluation.
    double omega(double theta) const {
        if (theta <= 0.0) return 0.0;
        const double h_eq = agent_->h(x_eq_);
        const double root = std::sqrt(theta);
        double x_left = target_state(h_eq - root, true);
        double x_right = target_state(h_eq + root, false);
        return std::max(storage_value(*agent_, x_left, x_eq_),
                        storage_value(*agent_, x_right, x_eq_));
    }

    // Exact inverse: table bracket plus bisection on omega(). Values beyond
    // the saturated range clamp to the last strictly-increasing node.
    double inverse(double s) const {
        if (s <= 0.0) return 0.0;
        if (s >= omega_max_) return node_theta(saturated_at_ - 1);
        const double s0 = omega_table_.front();
        if (s <= s0) return node_theta(0) * std::pow(s / s0, 1.0 / gamma_);
        std::size_t hi = static_cast<std::size_t>(
            std::lower_bound(omega_table_.begin(), omega_table_.begin() + static_cast<long>(saturated_at_), s) -
            omega_table_.begin());
        double lo_theta = node_theta(hi - 1), hi_theta = node_theta(hi);
        for (int it = 0; it < 60; ++it) {
            double mid = std::sqrt(lo_theta * hi_theta);
            (omega(mid) < s ? lo_theta : hi_theta) = mid;
            if (hi_theta - lo_theta <= 1e-14 * hi_theta) break;
        }
        return 0.5 * (lo_theta + hi_theta);
    }

    // Interpolated inverse (log-log), for table construction in hot paths.
    double inverse_interp(double s) const {
        if (s <= 0.0) return 0.0;
        if (s >= omega_max_) return node_theta(saturated_at_ - 1);
        const double s0 = omega_table_.front();
        if (s <= s0) return node_theta(0) * std::pow(s / s0, 1.0 / gamma_);
        std::size_t hi = static_cast<std::size_t>(
            std::lower_bound(omega_table_.begin(), omega_table_.begin() + static_cast<long>(saturated_at_), s) -
            omega_table_.begin());
        double ls = std::log(s);
        double l0 = std::log(omega_table_[hi - 1]), l1 = std::log(omega_table_[hi]);
        double t = (ls - l0) / (l1 - l0);
        double lt0 = log_theta_lo_ + log_theta_step_ * static_cast<double>(hi - 1);
        return std::exp(lt0 + t * log_theta_step_);
    }

  private:
    double node_theta(std::size_t k) const {
        return std::exp(log_theta_lo_ + log_theta_step_ * static_cast<double>(k));
    }

    double target_state(double h_target, bool downward) const {
        if (downward && h_target <= agent_->h(bounds_.lo)) return bounds_.lo;
        if (!downward && h_target >= agent_->h(bounds_.hi)) return bounds_.hi;
        return invert_h(*agent_, h_target, bounds_);
    }

    // Newton from a warm start with bisection fallback.
    double march(double x_start, double h_target, bool downward) const {
        if (downward && h_target <= agent_->h(bounds_.lo)) return bounds_.lo;
        if (!downward && h_target >= agent_->h(bounds_.hi)) return bounds_.hi;
        double x = x_start;
        for (int it = 0; it < 12; ++it) {
            double r = agent_->h(x) - h_target;
            if (std::abs(r) <= 1e-13 * std::max(1.0, std::abs(h_target))) return x;
            double d = agent_->dh(x);
            if (!(d > 0.0) || !std::isfinite(d)) break;
            double nx = x - r / d;
            if (nx < bounds_.lo || nx > bounds_.hi) break;
            x = nx;
        }
        double r = agent_->h(x) - h_target;
        if (std::abs(r) <= 1e-11 * std::max(1.0, std::abs(h_target))) return x;
        return invert_h(*agent_, h_target, bounds_);
    }

    const AgentModel* agent_;
    double x_eq_;
    Interval bounds_;
    double theta_min_ = 0.0, theta_max_ = 0.0;
    double beta_ = 1.0;
    double gamma_ = 1.0;
    double omega_max_ = 0.0;
    std::size_t saturated_at_ = 0;
    double log_theta_lo_ = 0.0, log_theta_step_ = 0.0;
    Vec omega_table_;
};

// Builds the per-agent profile around a conjectured equilibrium state.
inline AgentProfile omega_construct(const AgentModel& agent, double x_eq, Interval bounds,
                                    std::size_t table_size = 10000) {
    return AgentProfile(agent, x_eq, bounds, table_size);
}

// Combined network profile: Omega*(s) = min_i Omega_i(s) on a uniform log-s
// grid, and the combination constant C with sum_i rho_i Omega*(theta_i) >=
// C Omega*(sum theta_i) on [0, D]^n (validated on fresh samples).
class CombinedProfile {
  public:
    CombinedProfile(const std::vector<AgentProfile>& profiles, Vec rho, double energy_bound,
                    std::uint64_t seed, double margin = 0.1, std::size_t table_size = 10000,
                    std::size_t search_points = 100000)
        : rho_(std::move(rho)), energy_bound_(energy_bound) {
        const std::size_t n = profiles.size();
        if (n == 0 || rho_.size() != n) throw ValidationError("combine: bad profile list");
        for (double r : rho_)
            if (!(r > 0.0))
                throw SolverError("combine: profile method requires strictly positive rho");
        if (!(energy_bound_ > 0.0)) throw ValidationError("combine: energy bound must be positive");

        const double s_hi = static_cast<double>(n) * energy_bound_;
        const double s_lo = s_hi * 1e-18;
        log_s_lo_ = std::log(s_lo);
        log_s_step_ = (std::log(s_hi) - log_s_lo_) / static_cast<double>(table_size - 1);
        table_.resize(table_size);
        for (std::size_t k = 0; k < table_size; ++k) {
            const double s = std::exp(log_s_lo_ + log_s_step_ * static_cast<double>(k));
            double v = std::numeric_limits<double>::infinity();
            for (const auto& p : profiles) v = std::min(v, p.inverse_interp(s));
            table_[k] = v;
        }
        beta_max_ = 0.0;
        for (const auto& p : profiles) beta_max_ = std::max(beta_max_, p.beta());
        // Low-end slope for power-law extrapolation below the grid,
        // cross-checked against the analytic exponent (the largest per-agent
        // power law dominates the pointwise min near zero). Disagreement
        // means the table bottom is not yet in the asymptotic regime, in
        // which case the analytic exponent wins.
        gamma_ = (std::log(table_[32]) - std::log(table_[0])) / (32.0 * log_s_step_);
        if (!(std::abs(gamma_ - beta_max_) <= 0.25 * beta_max_)) gamma_ = beta_max_;

        c_value_ = (1.0 - margin) * search_min_f(seed, search_points);
        if (!(c_value_ > 0.0)) throw SolverError("combine: estimated constant not positive");
        // Fresh-sample validation; halve on failure.
        for (int round = 0; round < 8; ++round) {
            if (validate(seed ^ 0xabcdef12345678ULL, 20000)) return;
            c_value_ *= 0.5;
        }
        throw SolverError("combine: validation kept failing after reductions");
    }

    // Profile with a prescribed Omega* sampled onto the grid (synthetic
    // schedules, replay of persisted profiles).
    template <typename F>
    static CombinedProfile from_function(double c, double energy_bound, const F& omega,
                                         std::size_t table_size = 10000) {
        CombinedProfile p;
        p.rho_ = {1.0};
        p.energy_bound_ = energy_bound;
        p.c_value_ = c;
        const double s_hi = energy_bound;
        const double s_lo = s_hi * 1e-18;
        p.log_s_lo_ = std::log(s_lo);
        p.log_s_step_ = (std::log(s_hi) - p.log_s_lo_) / static_cast<double>(table_size - 1);
        p.table_.resize(table_size);
        for (std::size_t k = 0; k < table_size; ++k)
            p.table_[k] = omega(std::exp(p.log_s_lo_ + p.log_s_step_ * static_cast<double>(k)));
        p.gamma_ = (std::log(p.table_[32]) - std::log(p.table_[0])) / (32.0 * p.log_s_step_);
        return p;
    }

    double combination_constant() const { return c_value_; }
    double energy_bound() const { return energy_bound_; }
    const Vec& rho() const { return rho_; }
    double rho_min() const { return *std::min_element(rho_.begin(), rho_.end()); }
    std::size_t table_size() const { return table_.size(); }
    double table_s_lo() const { return std::exp(log_s_lo_); }
    double table_s_hi() const {
        return std::exp(log_s_lo_ + log_s_step_ * static_cast<double>(table_.size() - 1));
    }

    // O(1) interpolated evaluation with power-law tail below the grid and a
    // conservative clamp above it. Linear interpolation between the log-spaced
    // nodes: the node ratio is ~0.4%, so the interpolation error sits far
    // inside the combination constant's margin.
    double omega_star(double s) const {
        if (s <= 0.0) return 0.0;
        const double pos = (std::log(s) - log_s_lo_) / log_s_step_;
        if (pos <= 0.0) return table_.front() * std::pow(s / std::exp(log_s_lo_), gamma_);
        if (pos >= static_cast<double>(table_.size() - 1)) return table_.back();
        const auto k = static_cast<std::size_t>(pos);
        const double t = pos - static_cast<double>(k);
        return table_[k] * (1.0 - t) + table_[k + 1] * t;
    }

    // Validates sum rho_i Omega*(theta_i) >= C Omega*(sum theta_i) over fresh
    // random tuples; used both internally and by the acceptance suite.
    bool validate(std::uint64_t seed, std::size_t samples) const {
        Rng rng(seed);
        const std::size_t n = rho_.size();
        for (std::size_t it = 0; it < samples; ++it) {
            Vec theta = random_tuple(rng, n);
            double lhs = 0.0, sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                lhs += rho_[i] * omega_star(theta[i]);
                sum += theta[i];
            }
            if (sum <= 0.0) continue;
            if (lhs < c_value_ * omega_star(sum)) return false;
        }
        return true;
    }

  private:
    CombinedProfile() = default;

    Vec random_tuple(Rng& rng, std::size_t n) const {
        // Mix of dense Dirichlet-direction points, sparse points and axis
        // points across log-uniform scales.
        Vec theta(n, 0.0);
        const double scale = rng.log_uniform(energy_bound_ * 1e-12, energy_bound_);
        const double mode = rng.uniform();
        if (mode < 0.2) {
            theta[rng.integer(n)] = scale;
        } else if (mode < 0.6) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                theta[i] = -std::log(std::max(1e-300, rng.uniform()));
                total += theta[i];
            }
            for (std::size_t i = 0; i < n; ++i) theta[i] *= scale / total * static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) theta[i] = std::min(theta[i], energy_bound_);
        } else {
            for (std::size_t i = 0; i < n; ++i)
                theta[i] = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, scale);
        }
        return theta;
    }

    double f_ratio(const Vec& theta) const {
        double num = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < rho_.size(); ++i) {
            num += rho_[i] * omega_star(theta[i]);
            sum += theta[i];
        }
        if (sum <= 0.0) return std::numeric_limits<double>::infinity();
        double den = omega_star(sum);
        return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
    }

    double search_min_f(std::uint64_t seed, std::size_t points) {
        Rng rng(seed);
        const std::size_t n = rho_.size();
        double best = std::numeric_limits<double>::infinity();
        // Axis points: F = rho_i exactly.
        best = std::min(best, rho_min());
        // Equal-split near-origin sweep (the proof's max_i theta_i bound).
        for (double scale = energy_bound_; scale > energy_bound_ * 1e-14; scale *= 0.25) {
            Vec theta(n, scale / static_cast<double>(n));
            best = std::min(best, f_ratio(theta));
        }
        for (std::size_t it = 0; it < points; ++it)
            best = std::min(best, f_ratio(random_tuple(rng, n)));
        return best;
    }

    Vec rho_;
    double energy_bound_;
    double c_value_ = 0.0;
    double beta_max_ = 1.0;
    double gamma_ = 1.0;
    double log_s_lo_ = 0.0, log_s_step_ = 0.0;
    Vec table_;
};

inline CombinedProfile combine_profiles(const std::vector<AgentProfile>& profiles, Vec rho,
                                        double energy_bound, std::uint64_t seed,
                                        double margin = 0.1) {
    return CombinedProfile(profiles, std::move(rho), energy_bound, seed, margin);
}

// Schedule state for the profile protocol's delta rounds.
struct ProfileState {
    double s_initial = 0.0;
    double delta = 0.0;     // current target delta_k
    double next_time = 0.0;
    int round = 0;
};

// Next sample time per the M-based rule: M = C Omega*(delta_{k+1}); the gap is
// S(x0)/M plus one grid step.
inline double profile_schedule_step(const ProfileState& state, const CombinedProfile& profile,
                                    double t_now, double grid_step) {
    const double delta_next = state.delta / 2.0;
    const double m = profile.combination_constant() * profile.omega_star(delta_next);
    if (!(m > 0.0)) return std::numeric_limits<double>::infinity();
    return t_now + state.s_initial / m + grid_step;
}

// Alternative gap from integrating dS/dt = -C Omega*(S) from delta_k down to
// delta_{k+1} (the table-free variant kept behind a config switch).
inline double profile_schedule_step_ode(const ProfileState& state, const CombinedProfile& profile,
                                        double t_now, double grid_step) {
    double s = state.delta;
    const double target = state.delta / 2.0;
    double t = 0.0;
    const double c = profile.combination_constant();
    for (int it = 0; it < 2000000 && s > target; ++it) {
        double rate = c * profile.omega_star(s);
        if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
        double dt = 0.001 * s / rate;  // ~0.1% relative decay per step
        s -= rate * dt;
        t += dt;
    }
    return t_now + t + grid_step;
}

// Sampled profile inequality S(next) - S(prev) <= -C Omega*(S(next)) dt.
inline PairCheck profile_check(double s_prev, double s_next, double dt,
                               const CombinedProfile& profile) {
    PairCheck c;
    c.lhs = s_next - s_prev;
    c.rhs = -profile.combination_constant() * profile.omega_star(s_next) * dt;
    c.pass = c.lhs <= c.rhs + kAssertSlack;
    return c;
}

// ---------------------------------------------------------------------------
// Assertion instances
// ---------------------------------------------------------------------------

struct Verdict {
    enum class Status { Running, DeclaredNo };
    Status status = Status::Running;
    double declared_at = 0.0;
    Certificate certificate;
    bool fell_back_to_high_rate = false;
};

struct AssertionConfig {
    enum class Method { HighRate, Profile };
    Method method = Method::Profile;
    double delta1 = 0.0;  // 0: start from the initial storage level
    double margin = 0.1;
    bool ode_scheduler = false;
    double stream_dt = 0.1;
    std::uint64_t seed = 1;
};

inline AssertionConfig::Method parse_method(const std::string& s) {
    if (s == "high_rate") return AssertionConfig::Method::HighRate;
    if (s == "profile") return AssertionConfig::Method::Profile;
    throw ValidationError("unknown assertion method: " + s);
}

// One running monitor: consumes the shared measurement stream and checks its
// own conjectured limit. Profile instances check every stream pair and the
// delta bound at scheduled rounds; high-rate instances subsample per schedule.
class AssertionInstance {
  public:
    // Profile-method instance. The combined profile may be shared across runs.
    AssertionInstance(const NetworkSystem& net, SubgraphMask mask, ConjecturedLimit limit,
                      std::shared_ptr<const CombinedProfile> profile, AssertionConfig config)
        : net_(&net),
          mask_(std::move(mask)),
          limit_(std::move(limit)),
          profile_(std::move(profile)),
          config_(config),
          is_profile_(true) {}

    // High-rate instance.
    AssertionInstance(const NetworkSystem& net, SubgraphMask mask, ConjecturedLimit limit,
                      AssertionConfig config)
        : net_(&net),
          mask_(std::move(mask)),
          limit_(std::move(limit)),
          config_(config),
          is_profile_(false) {
        gains_ = compute_monitor_gains(net, mask_, limit_);
    }

    const Verdict& verdict() const { return verdict_; }
    bool running() const { return verdict_.status == Verdict::Status::Running; }
    bool is_profile() const { return is_profile_; }
    const ConjecturedLimit& limit() const { return limit_; }

    double storage_of(const Vec& x) const { return total_storage(*net_, limit_, x); }

    void feed(const SamplePoint& p) {
        if (!running()) return;
        const double s_now = storage_of(p.x);
        if (!started_) {
            start(p, s_now);
            remember(p, s_now);
            return;
        }
        if (is_profile_)
            feed_profile(p, s_now);
        else
            feed_high_rate(p, s_now);
        remember(p, s_now);
    }

  private:
    void remember(const SamplePoint& p, double s_now) {
        prev_t_ = p.t;
        prev_s_ = s_now;
        prev_step_ = p.step;
    }

    double delta_floor() const { return 1e-13 * std::max(1.0, s_initial_); }

    void start(const SamplePoint& p, double s_now) {
        started_ = true;
        s_initial_ = std::max(s_now, 1e-12);
        if (is_profile_) {
            prof_state_.s_initial = s_initial_;
            prof_state_.delta = config_.delta1 > 0.0 ? config_.delta1 : s_initial_;
            prof_state_.round = 0;
            prof_state_.next_time =
                prof_state_.delta < delta_floor() * 2.0 ? std::numeric_limits<double>::infinity()
                                                        : schedule_next(p.t);
        } else {
            hr_delta_ = config_.delta1 > 0.0 ? config_.delta1 : s_initial_;
            start_high_rate_phase(p.t, s_now);
            hr_due_t_ = p.t;
            hr_due_s_ = s_now;
            hr_due_g_ = dissipation_rhs(*net_, mask_, limit_, gains_, p.x);
            hr_due_step_ = p.step;
        }
    }

    double schedule_next(double t_now) const {
        return config_.ode_scheduler
                   ? profile_schedule_step_ode(prof_state_, *profile_, t_now, config_.stream_dt)
                   : profile_schedule_step(prof_state_, *profile_, t_now, config_.stream_dt);
    }

    void feed_profile(const SamplePoint& p, double s_now) {
        // Dense pair check at the stream rate: valid for any pair of times.
        PairCheck c = profile_check(prev_s_, s_now, p.t - prev_t_, *profile_);
        if (!c.pass) {
            declare(p, {"profile_pair", prev_t_, p.t, prev_step_, p.step, c.lhs, c.rhs});
            return;
        }
        // Scheduled delta round.
        if (p.t + 1e-12 >= prof_state_.next_time) {
            prof_state_.round += 1;
            prof_state_.delta /= 2.0;
            if (s_now > prof_state_.delta + kAssertSlack) {
                declare(p, {"profile_delta_bound", prof_state_.next_time, p.t, prev_step_, p.step,
                            s_now, prof_state_.delta});
                return;
            }
            // Below the numerical floor the dense checks continue but no
            // further rounds are scheduled.
            prof_state_.next_time = prof_state_.delta < delta_floor()
                                        ? std::numeric_limits<double>::infinity()
                                        : schedule_next(p.t);
        }
    }

    void start_high_rate_phase(double t_now, double s_level) {
        hr_m_ = bound_M(*net_, mask_, limit_, gains_, std::max(s_level, 0.0));
        // Checks never go dormant: the interval is capped so late faults are
        // still picked up (M = 0 at an exact equilibrium just means the next
        // check runs at the cap).
        const double max_interval = std::max(1.0, config_.stream_dt);
        double want = hr_m_ > 0.0 ? high_rate_schedule(s_level, hr_delta_, hr_m_).sample_interval
                                  : max_interval;
        hr_dt_ = std::clamp(std::ceil(want / config_.stream_dt - 1e-9) * config_.stream_dt,
                            config_.stream_dt, max_interval);
        double horizon = hr_m_ > 0.0 ? high_rate_schedule(s_level, hr_delta_, hr_m_).horizon : 0.0;
        hr_phase_end_ = t_now + std::max(horizon, hr_dt_);
        hr_next_due_ = t_now + hr_dt_;
    }

    void feed_high_rate(const SamplePoint& p, double s_now) {
        if (p.t + 1e-12 < hr_next_due_) return;
        const double g_now = dissipation_rhs(*net_, mask_, limit_, gains_, p.x);
        PairCheck c = high_rate_step(hr_due_s_, hr_due_g_, s_now, p.t - hr_due_t_, hr_m_);
        if (!c.pass) {
            declare(p, {"high_rate_pair", hr_due_t_, p.t, hr_due_step_, p.step, c.lhs, c.rhs});
            return;
        }
        hr_due_t_ = p.t;
        hr_due_s_ = s_now;
        hr_due_g_ = g_now;
        hr_due_step_ = p.step;
        if (p.t + 1e-12 >= hr_phase_end_) {
            hr_delta_ = std::max(hr_delta_ / 2.0, delta_floor());
            start_high_rate_phase(p.t, s_now);
        } else {
            hr_next_due_ = p.t + hr_dt_;
        }
    }

    void declare(const SamplePoint& p, Certificate cert) {
        verdict_.status = Verdict::Status::DeclaredNo;
        verdict_.declared_at = p.t;
        verdict_.certificate = std::move(cert);
    }

    const NetworkSystem* net_;
    SubgraphMask mask_;
    ConjecturedLimit limit_;
    std::shared_ptr<const CombinedProfile> profile_;
    AssertionConfig config_;
    bool is_profile_;

    MonitorGains gains_;
    Verdict verdict_;
    bool started_ = false;
    double s_initial_ = 0.0;
    double prev_t_ = 0.0, prev_s_ = 0.0;
    std::size_t prev_step_ = 0;

    ProfileState prof_state_;

    double hr_delta_ = 0.0, hr_m_ = 0.0, hr_dt_ = 0.0;
    double hr_phase_end_ = 0.0, hr_next_due_ = 0.0;
    double hr_due_t_ = 0.0, hr_due_s_ = 0.0, hr_due_g_ = 0.0;
    std::size_t hr_due_step_ = 0;
};

// Builds per-agent profiles and the combined profile for a (net, mask, limit)
// triple. Throws when the profile method's standing assumption (rho_i > 0)
// fails; callers fall back to high-rate sampling in that case.
inline std::shared_ptr<const CombinedProfile> build_combined_profile(
    const NetworkSystem& net, const SubgraphMask& mask, const ConjecturedLimit& limit,
    double energy_bound, std::uint64_t seed, double margin = 0.1,
    std::size_t table_size = 10000) {
    MonitorGains gains = compute_monitor_gains(net, mask, limit);
    for (double r : gains.rho)
        if (!(r > 0.0))
            throw SolverError("profile method needs output-strict agents (rho_i > 0)");
    std::vector<AgentProfile> profiles;
    profiles.reserve(net.n());
    for (std::size_t i = 0; i < net.n(); ++i)
        profiles.push_back(omega_construct(net.agents[i], limit.x_eq[i], net.state_bounds, table_size));
    return std::make_shared<CombinedProfile>(profiles, gains.rho, energy_bound, seed, margin,
                                             table_size);
}

// Maximum total storage over the state-bounds box; cache-safe energy bound for
// combined profiles reused across episodes.
inline double max_energy_bound(const NetworkSystem& net, const ConjecturedLimit& limit) {
    double total = 0.0;
    for (std::size_t i = 0; i < net.n(); ++i)
        total += std::max(storage_value(net.agents[i], net.state_bounds.lo, limit.x_eq[i]),
                          storage_value(net.agents[i], net.state_bounds.hi, limit.x_eq[i]));
    return total;
}

// Drives one instance over a full stream. Falls back to high-rate when the
// profile method's rho assumption fails.
inline Verdict run_assertion(AssertionConfig config, const std::vector<SamplePoint>& stream,
                             const NetworkSystem& net, const SubgraphMask& mask,
                             const ConjecturedLimit& limit) {
    bool fell_back = false;
    std::optional<AssertionInstance> instance;
    if (config.method == AssertionConfig::Method::Profile) {
        try {
            auto profile = build_combined_profile(net, mask, limit, max_energy_bound(net, limit),
                                                  config.seed, config.margin);
            instance.emplace(net, mask, limit, std::move(profile), config);
        } catch (const SolverError&) {
            fell_back = true;
        }
    }
    if (!instance) instance.emplace(net, mask, limit, config);
    for (const auto& p : stream) {
        instance->feed(p);
        if (!instance->running()) break;
    }
    Verdict v = instance->verdict();
    v.fell_back_to_high_rate = fell_back;
    return v;
}

}  // namespace netfdi

#endif
