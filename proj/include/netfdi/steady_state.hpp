#ifndef NETFDI_STEADY_STATE_HPP
#define NETFDI_STEADY_STATE_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "netfdi/common.hpp"
#include "netfdi/dynamics.hpp"
#include "netfdi/graph.hpp"
#include "netfdi/linalg.hpp"
#include "netfdi/parallel.hpp"

namespace netfdi {

// Agents + edge controllers + graph + constant edge bias and node feedforward.
// The bias rides on the controller outputs: u = v - E_H (mu + P_H w).
struct NetworkSystem {
    NetworkSystem(Graph graph_, std::vector<AgentModel> agents_,
                  std::vector<ControllerModel> controllers_, Vec bias_ = {}, Vec feedforward_ = {})
        : graph(std::move(graph_)),
          incidence(graph),
          agents(std::move(agents_)),
          controllers(std::move(controllers_)),
          bias(std::move(bias_)),
          feedforward(std::move(feedforward_)) {
        if (agents.size() != graph.n_vertices())
            throw ValidationError("network: agent count != n");
        if (controllers.size() != graph.n_edges())
            throw ValidationError("network: controller count != m");
        if (bias.empty()) bias.assign(graph.n_edges(), 0.0);
        if (feedforward.empty()) feedforward.assign(graph.n_vertices(), 0.0);
        if (bias.size() != graph.n_edges() || !all_finite(bias))
            throw ValidationError("network: bad bias vector");
        if (feedforward.size() != graph.n_vertices())
            throw ValidationError("network: bad feedforward vector");
    }

    std::size_t n() const { return graph.n_vertices(); }
    std::size_t m() const { return graph.n_edges(); }

    Graph graph;
    IncidenceMatrix incidence;
    std::vector<AgentModel> agents;
    std::vector<ControllerModel> controllers;
    Vec bias;         // per-edge exogenous controller-output offset w
    Vec feedforward;  // per-node constant input v
    Interval state_bounds{-1e3, 1e3};
};

struct SteadyStateSolution {
    Vec y;
    Vec residual;
    int iterations = 0;
    bool converged = false;
    bool disconnected = false;
    // Minimum eigenvalue of the Jacobian's symmetric part at y; only filled
    // when the solve is asked to certify (an eigensolve per call is too heavy
    // for table-scale use).
    double jacobian_min_eig = 0.0;
    bool certified = false;
};

namespace detail {

// Residual F(y) = k^{-1}(y) + E_H [g(E_H^T y - zeta*) + mu* + P_H w] - v and
// its Jacobian diag(d k^{-1}) + E_H diag(g') E_H^T.
struct SteadyStateEquation {
    const NetworkSystem& net;
    const SubgraphMask& mask;

    Vec residual(const Vec& y, Vec* x_out = nullptr) const {
        const std::size_t n = net.n(), m = net.m();
        Vec r(n, 0.0);
        Vec x(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = invert_h(net.agents[i], y[i], net.state_bounds);
            r[i] = net.agents[i].f_over_q(x[i]) - net.feedforward[i];
        }
        Vec zeta = net.incidence.apply_transpose(y, &mask);
        Vec edge_out(m, 0.0);
        for (std::size_t e = 0; e < m; ++e)
            if (mask.present(e))
                edge_out[e] = net.controllers[e].evaluate(zeta[e]) + net.bias[e];
        Vec coupling = net.incidence.apply(edge_out, &mask);
        for (std::size_t i = 0; i < n; ++i) r[i] += coupling[i];
        if (x_out) *x_out = x;
        return r;
    }

    Mat jacobian(const Vec& y, const Vec& x) const {
        const std::size_t n = net.n(), m = net.m();
        Mat j(n, n);
        for (std::size_t i = 0; i < n; ++i)
            j(i, i) = k_inverse_derivative_at_x(net.agents[i], x[i]);
        Vec zeta = net.incidence.apply_transpose(y, &mask);
        for (std::size_t e = 0; e < m; ++e) {
            if (!mask.present(e)) continue;
            auto [a, b] = net.graph.edge(e);
            double slope = net.controllers[e].derivative(zeta[e]);
            j(static_cast<std::size_t>(a), static_cast<std::size_t>(a)) += slope;
            j(static_cast<std::size_t>(b), static_cast<std::size_t>(b)) += slope;
            j(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) -= slope;
            j(static_cast<std::size_t>(b), static_cast<std::size_t>(a)) -= slope;
        }
        return j;
    }
};

}  // namespace detail

// Damped Newton with Armijo backtracking on 0.5*||F||^2. Converges for any
// subgraph (the equation stays well-posed per component); disconnected masks
// are solved and flagged.
inline SteadyStateSolution solve_steady_state(const NetworkSystem& net, const SubgraphMask& mask,
                                              const Vec* initial_guess = nullptr,
                                              int max_iterations = 200, bool certify = false) {
    const std::size_t n = net.n();
    detail::SteadyStateEquation eq{net, mask};

    Vec y(n, 0.0);
    if (initial_guess) {
        y = *initial_guess;
    } else {
        for (std::size_t i = 0; i < n; ++i) y[i] = net.agents[i].h(0.0);
    }

    SteadyStateSolution sol;
    Vec x;
    Vec r = eq.residual(y, &x);
    double merit = 0.5 * dot(r, r);
    const auto tol = [&](const Vec& yy) { return 1e-9 * (1.0 + linf_norm(yy)); };

    int it = 0;
    for (; it < max_iterations; ++it) {
        if (linf_norm(r) <= tol(y)) break;
        const Mat j = eq.jacobian(y, x);
        // Saturating controllers flatten the Jacobian far from the root; a
        // Levenberg ladder blends the Newton step toward the monotone flow
        // direction -F, which converges globally for strictly monotone F.
        bool accepted = false;
        double diag_scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) diag_scale = std::max(diag_scale, std::abs(j(i, i)));
        for (double lambda = 0.0; lambda <= 1e8 * (1.0 + diag_scale) && !accepted;
             lambda = (lambda == 0.0 ? 1e-6 * (1.0 + diag_scale) : lambda * 30.0)) {
            Mat damped = j;
            for (std::size_t i = 0; i < n; ++i) damped(i, i) += lambda;
            Vec step;
            try {
                Vec rhs(n);
                for (std::size_t i = 0; i < n; ++i) rhs[i] = -r[i];
                step = lu_solve(damped, rhs);
            } catch (const SolverError&) {
                continue;
            }
            // Armijo backtracking, factor 0.5, slope 1e-4 on the merit function.
            const double directional = -2.0 * merit;
            double t = 1.0;
            for (int bt = 0; bt < 30; ++bt) {
                Vec y_try(n);
                for (std::size_t i = 0; i < n; ++i) y_try[i] = y[i] + t * step[i];
                bool in_range = true;
                Vec x_try, r_try;
                try {
                    r_try = eq.residual(y_try, &x_try);
                } catch (const ValidationError&) {
                    in_range = false;
                }
                if (in_range && all_finite(r_try)) {
                    double merit_try = 0.5 * dot(r_try, r_try);
                    if (merit_try <= merit + 1e-4 * t * directional ||
                        merit_try < merit * (1.0 - 1e-12)) {
                        y = std::move(y_try);
                        x = std::move(x_try);
                        r = std::move(r_try);
                        merit = merit_try;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        if (!accepted)
            throw SolverError("steady-state solver: no descent found, |F|_inf = " +
                              std::to_string(linf_norm(r)));
    }

    sol.y = y;
    sol.residual = r;
    sol.iterations = it;
    sol.converged = linf_norm(r) <= tol(y);
    if (!sol.converged)
        throw SolverError("steady-state solver: no convergence in " +
                          std::to_string(max_iterations) + " iterations, |F|_inf = " +
                          std::to_string(linf_norm(r)));
    sol.disconnected = !is_connected(net.graph, &mask);
    if (certify) {
        Mat j = eq.jacobian(y, x);
        Mat sym(n, n);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) sym(a, b) = 0.5 * (j(a, b) + j(b, a));
        sol.jacobian_min_eig = min_symmetric_eigenvalue(sym);
        sol.certified = true;
    }
    return sol;
}

// Derived steady-state streams for a solved y on a mask.
struct SteadyStateDerived {
    Vec x;     // per-agent internal state
    Vec zeta;  // edge relative outputs (0 on absent edges)
    Vec mu;    // controller outputs (0 on absent edges)
    Vec u;     // node inputs
};

inline SteadyStateDerived derive_steady_state(const NetworkSystem& net, const SubgraphMask& mask,
                                              const Vec& y) {
    SteadyStateDerived d;
    const std::size_t n = net.n(), m = net.m();
    d.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.x[i] = invert_h(net.agents[i], y[i], net.state_bounds);
    d.zeta = net.incidence.apply_transpose(y, &mask);
    d.mu.assign(m, 0.0);
    Vec edge_out(m, 0.0);
    for (std::size_t e = 0; e < m; ++e)
        if (mask.present(e)) {
            d.mu[e] = net.controllers[e].evaluate(d.zeta[e]);
            edge_out[e] = d.mu[e] + net.bias[e];
        }
    Vec coupling = net.incidence.apply(edge_out, &mask);
    d.u.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.u[i] = net.feedforward[i] - coupling[i];
    return d;
}

// Controller augmentation achieving steady state y_star on the masked graph:
// per-edge offsets zeta* = (E^T y*)_e and mu*, plus a constant per-node
// feedforward chosen per connected component so that E mu* = -k^{-1}(y*) + v
// is solvable. mu* is the minimum-norm solution.
inline NetworkSystem synthesize_controllers(const std::vector<AgentModel>& agents, const Graph& g,
                                            const std::vector<ControllerModel>& base_controllers,
                                            const Vec& y_star, const SubgraphMask* mask_opt = nullptr,
                                            Interval state_bounds = {-1e3, 1e3}) {
    const std::size_t n = g.n_vertices(), m = g.n_edges();
    if (y_star.size() != n) throw ValidationError("synthesis: y_star size mismatch");
    SubgraphMask mask = mask_opt ? *mask_opt : SubgraphMask::full(g);
    IncidenceMatrix inc(g);

    Vec k_inv(n);
    for (std::size_t i = 0; i < n; ++i) k_inv[i] = k_inverse(agents[i], y_star[i], state_bounds);

    // Component-mean feedforward makes the right side orthogonal to the
    // all-ones vector on every component.
    Vec v(n, 0.0);
    const auto comps = connected_components(g, &mask);
    for (const auto& comp : comps) {
        double mean = 0.0;
        for (int i : comp) mean += k_inv[static_cast<std::size_t>(i)];
        mean /= static_cast<double>(comp.size());
        for (int i : comp) v[static_cast<std::size_t>(i)] = mean;
    }

    // Minimum-norm mu*: mu = E^T z with (L + projector correction) z = b.
    Vec b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = -k_inv[i] + v[i];
    Mat l(n, n);
    for (std::size_t e = 0; e < m; ++e) {
        if (!mask.present(e)) continue;
        auto [i, j] = g.edge(e);
        l(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) += 1.0;
        l(static_cast<std::size_t>(j), static_cast<std::size_t>(j)) += 1.0;
        l(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) -= 1.0;
        l(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) -= 1.0;
    }
    // Deflate each component's constant mode to make L invertible.
    for (const auto& comp : comps) {
        double c = 1.0 / static_cast<double>(comp.size());
        for (int a : comp)
            for (int bnode : comp)
                l(static_cast<std::size_t>(a), static_cast<std::size_t>(bnode)) += c;
    }
    Vec z = lu_solve(l, b);
    Vec mu_star = inc.apply_transpose(z, &mask);

    // Least-squares residual check of E mu* = b.
    Vec achieved = inc.apply(mu_star, &mask);
    double res = linf_dist(achieved, b);
    if (res > 1e-9)
        throw SynthesisError("synthesis: feedforward-corrected least squares residual " +
                             std::to_string(res));

    Vec zeta_star = inc.apply_transpose(y_star, &mask);
    std::vector<ControllerModel> ctrls = base_controllers;
    for (std::size_t e = 0; e < m; ++e) {
        if (!mask.present(e)) continue;
        ctrls[e].zeta_star = zeta_star[e];
        // Absorb g(0) so the offset lands exactly for any base family.
        ctrls[e].mu_star = mu_star[e] - ctrls[e].g(0.0);
    }

    NetworkSystem net(g, agents, ctrls, Vec(m, 0.0), v);
    net.state_bounds = state_bounds;

    SteadyStateSolution check = solve_steady_state(net, mask, &y_star);
    if (linf_dist(check.y, y_star) > 1e-6)
        throw SynthesisError("synthesis: nominal steady state misses target by " +
                             std::to_string(linf_dist(check.y, y_star)));
    return net;
}

struct SteadyStateTable {
    std::vector<Vec> outputs;
    double min_pairwise_distance = std::numeric_limits<double>::infinity();
};

// Steady-state output per subgraph plus the minimum pairwise distance.
// Solver failures are rethrown with the offending subgraph index.
inline SteadyStateTable steady_state_table(const NetworkSystem& net,
                                           const std::vector<SubgraphMask>& subgraphs,
                                           const Vec* initial_guess = nullptr) {
    SteadyStateTable table;
    table.outputs.resize(subgraphs.size());
    parallel_for(subgraphs.size(), [&](std::size_t j) {
        try {
            table.outputs[j] = solve_steady_state(net, subgraphs[j], initial_guess).y;
        } catch (const SolverError& err) {
            throw SolverError("subgraph " + std::to_string(j) + ": " + err.what());
        }
    });
    for (std::size_t a = 0; a < table.outputs.size(); ++a)
        for (std::size_t b = a + 1; b < table.outputs.size(); ++b)
            table.min_pairwise_distance =
                std::min(table.min_pairwise_distance, linf_dist(table.outputs[a], table.outputs[b]));
    return table;
}

}  // namespace netfdi

#endif
