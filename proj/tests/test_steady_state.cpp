#include <cmath>

#include "doctest.h"
#include "netfdi/indication.hpp"
#include "netfdi/simulator.hpp"
#include "netfdi/steady_state.hpp"
#include "test_helpers.hpp"

using namespace netfdi;

namespace {

// Independent dense linear solve (plain Gaussian elimination, no pivbranch
// sharing with the library's LU path beyond arithmetic).
Vec gauss_oracle(std::vector<Vec> a, Vec b) {
    const std::size_t n = b.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(a[r][k]) > std::abs(a[piv][k])) piv = r;
        std::swap(a[k], a[piv]);
        std::swap(b[k], b[piv]);
        for (std::size_t r = k + 1; r < n; ++r) {
            double f = a[r][k] / a[k][k];
            for (std::size_t c = k; c < n; ++c) a[r][c] -= f * a[k][c];
            b[r] -= f * b[k];
        }
    }
    Vec x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return x;
}

NetworkSystem linear_network(const Graph& g, double leak = 1.0, double gain = 1.0) {
    std::vector<AgentModel> agents(g.n_vertices(), AgentModel::linear_leak(leak));
    std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::linear(gain));
    return NetworkSystem(g, agents, ctrls);
}

// Closed form for linear agents/controllers: y = -(aI + L_H)^{-1} E_H P_H w.
Vec linear_oracle(const Graph& g, const SubgraphMask& mask, const Vec& w, double leak,
                  double gain) {
    const std::size_t n = g.n_vertices();
    std::vector<Vec> a(n, Vec(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) a[i][i] = leak;
    IncidenceMatrix inc(g);
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        if (!mask.present(e)) continue;
        auto [p, q] = g.edge(e);
        auto pi = static_cast<std::size_t>(p), qi = static_cast<std::size_t>(q);
        a[pi][pi] += gain;
        a[qi][qi] += gain;
        a[pi][qi] -= gain;
        a[qi][pi] -= gain;
    }
    Vec rhs = inc.apply(mask_edge_vector(mask, w), &mask);
    for (double& v : rhs) v = -v;
    return gauss_oracle(a, rhs);
}

}  // namespace

TEST_CASE("triangle linear network, zero bias -> zero output") {
    Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
    NetworkSystem net = linear_network(g);
    auto sol = solve_steady_state(net, SubgraphMask::full(g), nullptr, 200, /*certify=*/true);
    CHECK(sol.converged);
    CHECK(linf_norm(sol.y) < 1e-10);
    CHECK(sol.jacobian_min_eig > 0.0);
}

TEST_CASE("triangle linear network with bias matches the dense oracle") {
    Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
    NetworkSystem net = linear_network(g);
    net.bias = {0.4, -1.1, 0.7};
    auto sol = solve_steady_state(net, SubgraphMask::full(g));
    Vec oracle = linear_oracle(g, SubgraphMask::full(g), net.bias, 1.0, 1.0);
    CHECK(linf_dist(sol.y, oracle) < 1e-9);
}

TEST_CASE("solver agreement with the closed form on random linear instances") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 3 + static_cast<int>(rng.integer(8));  // n <= 10
        Graph g = testutil::random_connected_graph(n, 2 + static_cast<int>(rng.integer(5)), rng);
        double leak = rng.uniform(0.5, 2.0), gain = rng.uniform(0.5, 2.0);
        NetworkSystem net = linear_network(g, leak, gain);
        net.bias = rng.gaussian_vec(g.n_edges());
        auto subs = enumerate_subgraphs(g, 1);
        const auto& mask = subs[rng.integer(subs.size())];
        auto sol = solve_steady_state(net, mask, nullptr, 200, /*certify=*/true);
        CHECK(linf_dist(sol.y, linear_oracle(g, mask, net.bias, leak, gain)) < 1e-9);
        CHECK(sol.jacobian_min_eig > 0.0);
    }
}

TEST_CASE("cycle-space bias leaves the steady state unchanged") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 4 + static_cast<int>(rng.integer(5));  // n <= 8
        Graph g = testutil::random_connected_graph(n, 3, rng);
        if (cycle_space_basis(g).empty()) continue;
        std::vector<AgentModel> agents;
        for (int i = 0; i < n; ++i)
            agents.push_back(AgentModel::vehicle_drag(rng.uniform(0.02, 0.1)));
        std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::tanh_ctrl());
        NetworkSystem net(g, agents, ctrls);
        auto base = solve_steady_state(net, SubgraphMask::full(g));
        for (int k = 0; k < 5; ++k) {
            NetworkSystem biased = net;
            biased.bias = sample_kernel(g, rng.integer(1u << 30)).w;
            auto sol = solve_steady_state(biased, SubgraphMask::full(g));
            CHECK(linf_dist(sol.y, base.y) <= 1e-8);
        }
    }
}

TEST_CASE("disconnected subgraphs are solved and flagged") {
    Graph g = testutil::cycle_graph(4);
    NetworkSystem net = linear_network(g);
    net.bias = {0.3, 0.1, -0.2, 0.5};
    SubgraphMask mask(g, {true, false, true, false});
    auto sol = solve_steady_state(net, mask);
    CHECK(sol.converged);
    CHECK(sol.disconnected);
    CHECK(linf_dist(sol.y, linear_oracle(g, mask, net.bias, 1.0, 1.0)) < 1e-9);
}

TEST_CASE("synthesis: consensus target with zero k^{-1} needs no offsets") {
    Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
    std::vector<AgentModel> agents(3, AgentModel::custom_poly({0.0}));  // pure integrator
    std::vector<ControllerModel> ctrls(3, ControllerModel::tanh_ctrl());
    Vec y_star(3, 2.5);
    NetworkSystem net = synthesize_controllers(agents, g, ctrls, y_star);
    for (const auto& c : net.controllers) {
        CHECK(c.zeta_star == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::abs(c.mu_star) < 1e-9);
    }
    CHECK(linf_norm(net.feedforward) < 1e-12);
}

TEST_CASE("synthesis on a 3-node path hits the target, verified by simulation") {
    Graph g = testutil::path_graph(3);
    std::vector<AgentModel> agents(3, AgentModel::linear_leak(1.0));
    std::vector<ControllerModel> ctrls(2, ControllerModel::linear(1.0));
    Vec y_star{1.0, 2.0, 3.0};
    NetworkSystem net = synthesize_controllers(agents, g, ctrls, y_star);
    auto sol = solve_steady_state(net, SubgraphMask::full(g));
    CHECK(linf_dist(sol.y, y_star) < 1e-6);
    // Long-horizon integration oracle from a random start.
    Rng rng(5);
    Vec x0 = rng.gaussian_vec(3);
    Trajectory traj = integrate(net, SwitchingSignal{}, x0, 40.0, 1e-3);
    CHECK(linf_dist(traj.outputs_at(traj.steps() - 1), y_star) < 1e-6);
}

TEST_CASE("synthesis round-trip on random vehicle networks") {
    Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 3 + static_cast<int>(rng.integer(4));
        Graph g = testutil::random_connected_graph(n, 2, rng);
        std::vector<AgentModel> agents;
        for (int i = 0; i < n; ++i)
            agents.push_back(AgentModel::vehicle_drag(rng.uniform(0.02, 0.1)));
        std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::tanh_ctrl());
        Vec y_star(static_cast<std::size_t>(n));
        for (auto& v : y_star) v = rng.uniform(1.0, 4.0);
        NetworkSystem net = synthesize_controllers(agents, g, ctrls, y_star);
        auto sol = solve_steady_state(net, SubgraphMask::full(g), nullptr, 200, /*certify=*/true);
        CHECK(linf_dist(sol.y, y_star) < 1e-6);
        CHECK(sol.jacobian_min_eig > 0.0);  // monotone-residual certificate
    }
}

TEST_CASE("steady-state table") {
    Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
    NetworkSystem net = linear_network(g);
    SUBCASE("r = 0 is the nominal state only") {
        auto table = steady_state_table(net, enumerate_subgraphs(g, 0));
        REQUIRE(table.outputs.size() == 1);
        CHECK(linf_norm(table.outputs[0]) < 1e-10);
    }
    SUBCASE("Gaussian bias separates the r=1 family") {
        Rng rng(8);
        net.bias = rng.gaussian_vec(3);
        auto table = steady_state_table(net, enumerate_subgraphs(g, 1));
        REQUIRE(table.outputs.size() == 4);
        CHECK(table.min_pairwise_distance > 1e-6);
        for (std::size_t j = 0; j < 4; ++j) {
            Vec oracle = linear_oracle(g, enumerate_subgraphs(g, 1)[j], net.bias, 1.0, 1.0);
            CHECK(linf_dist(table.outputs[j], oracle) < 1e-9);
        }
    }
    SUBCASE("zero bias degenerates to coinciding limits") {
        auto table = steady_state_table(net, enumerate_subgraphs(g, 1));
        CHECK(table.min_pairwise_distance < 1e-9);
    }
}
