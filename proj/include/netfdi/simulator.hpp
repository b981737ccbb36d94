#ifndef NETFDI_SIMULATOR_HPP
#define NETFDI_SIMULATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "netfdi/common.hpp"
#include "netfdi/graph.hpp"
#include "netfdi/steady_state.hpp"

namespace netfdi {

// Non-increasing fault schedule: strictly positive nondecreasing times, no
// repeated edge. The induced mask at time t drops every edge whose fault time
// is <= t (right-continuous).
class SwitchingSignal {
  public:
    struct Event {
        double time;
        int edge;
    };

    SwitchingSignal() = default;
    explicit SwitchingSignal(std::vector<Event> events) : events_(std::move(events)) {
        double prev = 0.0;
        std::vector<bool> seen;
        for (const auto& ev : events_) {
            if (!(ev.time > 0.0)) throw ValidationError("signal: fault times must be positive");
            if (ev.time < prev) throw ValidationError("signal: fault times must be nondecreasing");
            prev = ev.time;
            if (ev.edge < 0) throw ValidationError("signal: bad edge index");
            if (seen.size() <= static_cast<std::size_t>(ev.edge))
                seen.resize(static_cast<std::size_t>(ev.edge) + 1, false);
            if (seen[static_cast<std::size_t>(ev.edge)])
                throw ValidationError("signal: repeated edge fault");
            seen[static_cast<std::size_t>(ev.edge)] = true;
        }
    }

    const std::vector<Event>& events() const { return events_; }
    bool empty() const { return events_.empty(); }

    SubgraphMask mask_at(const Graph& g, double t) const {
        std::vector<bool> present(g.n_edges(), true);
        for (const auto& ev : events_)
            if (ev.time <= t) present[static_cast<std::size_t>(ev.edge)] = false;
        return SubgraphMask(g, std::move(present));
    }

  private:
    std::vector<Event> events_;
};

// x' for the closed loop on a masked edge set. Faulted edges contribute
// nothing: the controller, its offsets, and its bias entry all vanish.
// Thread-local scratch keeps the integrator's inner loop allocation-free.
inline void closed_loop_rhs_into(const NetworkSystem& net, const SubgraphMask& mask, const Vec& x,
                                 Vec& dx) {
    const std::size_t n = net.n(), m = net.m();
    if (mask.n_present() == 0 && m > 0)
        throw ValidationError("closed_loop_rhs: empty mask");
    thread_local Vec y, coupling;
    y.assign(n, 0.0);
    coupling.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) y[i] = net.agents[i].h(x[i]);
    for (std::size_t e = 0; e < m; ++e) {
        if (!mask.present(e)) continue;
        auto [a, b] = net.graph.edge(e);
        auto ai = static_cast<std::size_t>(a), bi = static_cast<std::size_t>(b);
        double zeta = y[ai] - y[bi];
        double out = net.controllers[e].evaluate(zeta) + net.bias[e];
        coupling[ai] += out;
        coupling[bi] -= out;
    }
    dx.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = net.feedforward[i] - coupling[i];
        dx[i] = -net.agents[i].f(x[i]) + net.agents[i].q(x[i]) * u;
        if (!std::isfinite(dx[i]))
            throw DivergenceError("closed_loop_rhs: non-finite derivative at agent " +
                                  std::to_string(i));
    }
}

inline Vec closed_loop_rhs(const NetworkSystem& net, const SubgraphMask& mask, const Vec& x) {
    Vec dx;
    closed_loop_rhs_into(net, mask, x, dx);
    return dx;
}

struct Trajectory {
    Vec times;
    std::vector<Vec> states;          // one state vector per step
    std::vector<int> mask_switches;   // step index where each signal event lands
    const NetworkSystem* net = nullptr;
    SwitchingSignal signal;
    double dt = 0.0;

    std::size_t steps() const { return times.size(); }

    Vec outputs_at(std::size_t k) const {
        Vec y(states[k].size());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = net->agents[i].h(states[k][i]);
        return y;
    }
};

// Classic fixed-step RK4. Fault events snap to the next grid point; the mask
// is right-continuous (a fault at step k affects the step k -> k+1).
inline Trajectory integrate(const NetworkSystem& net, const SwitchingSignal& signal, const Vec& x0,
                            double span, double dt, double blowup_bound = 1e6) {
    if (!(dt > 0.0)) throw ValidationError("integrate: dt must be positive");
    if (span < 0.0) throw ValidationError("integrate: span must be nonnegative");
    if (x0.size() != net.n()) throw ValidationError("integrate: x0 size mismatch");

    const std::size_t steps = static_cast<std::size_t>(std::llround(span / dt));
    Trajectory traj;
    traj.net = &net;
    traj.signal = signal;
    traj.dt = dt;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);

    // Precompute the grid step at which each fault becomes active.
    std::vector<std::pair<std::size_t, int>> fault_steps;
    for (const auto& ev : signal.events()) {
        auto k = static_cast<std::size_t>(std::ceil(ev.time / dt - 1e-12));
        fault_steps.push_back({k, ev.edge});
    }

    std::vector<bool> present(net.m(), true);
    SubgraphMask mask(net.graph, present);
    Vec x = x0;
    for (std::size_t k = 0; k <= steps; ++k) {
        double t = dt * static_cast<double>(k);
        traj.times.push_back(t);
        traj.states.push_back(x);
        if (linf_norm(x) > blowup_bound)
            throw DivergenceError("integrate: state blew up at t = " + std::to_string(t));
        if (k == steps) break;

        for (const auto& [fk, edge] : fault_steps)
            if (fk == k && present[static_cast<std::size_t>(edge)]) {
                present[static_cast<std::size_t>(edge)] = false;
                mask = SubgraphMask(net.graph, present);
                traj.mask_switches.push_back(static_cast<int>(k));
            }

        thread_local Vec k1, k2, k3, k4, tmp;
        tmp.resize(x.size());
        closed_loop_rhs_into(net, mask, x, k1);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
        closed_loop_rhs_into(net, mask, tmp, k2);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
        closed_loop_rhs_into(net, mask, tmp, k3);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + dt * k3[i];
        closed_loop_rhs_into(net, mask, tmp, k4);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return traj;
}

struct SamplePoint {
    double t = 0.0;
    Vec x;
    Vec y;
    Vec mu;        // controller outputs under the active mask (0 on absent edges)
    Vec s_values;  // per-agent storage w.r.t. a conjectured equilibrium, when requested
    std::size_t step = 0;
};

// Uniform measurement stream at the given rate; the sampling interval must
// land on integration grid points. Storage values are filled against the
// optional conjectured equilibrium.
inline std::vector<SamplePoint> sample_stream(const Trajectory& traj, double rate_hz,
                                              const Vec* conjectured_x_eq = nullptr) {
    if (!(rate_hz > 0.0)) throw ValidationError("sample_stream: rate must be positive");
    const double interval = 1.0 / rate_hz;
    const double steps_per_sample = interval / traj.dt;
    const auto stride = static_cast<std::size_t>(std::llround(steps_per_sample));
    if (stride == 0) throw ValidationError("sample_stream: rate finer than 1/dt");
    if (std::abs(steps_per_sample - static_cast<double>(stride)) > 1e-9 * steps_per_sample)
        throw ValidationError("sample_stream: rate does not align with the integration grid");

    const NetworkSystem& net = *traj.net;
    std::vector<SamplePoint> out;
    for (std::size_t k = 0; k < traj.steps(); k += stride) {
        SamplePoint p;
        p.t = traj.times[k];
        p.step = k;
        p.x = traj.states[k];
        p.y.resize(net.n());
        for (std::size_t i = 0; i < net.n(); ++i) p.y[i] = net.agents[i].h(p.x[i]);
        SubgraphMask mask = traj.signal.mask_at(net.graph, p.t);
        Vec zeta = net.incidence.apply_transpose(p.y, &mask);
        p.mu.assign(net.m(), 0.0);
        for (std::size_t e = 0; e < net.m(); ++e)
            if (mask.present(e)) p.mu[e] = net.controllers[e].evaluate(zeta[e]);
        if (conjectured_x_eq) {
            p.s_values.resize(net.n());
            for (std::size_t i = 0; i < net.n(); ++i)
                p.s_values[i] = storage_value(net.agents[i], p.x[i], (*conjectured_x_eq)[i]);
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace netfdi

#endif
