#include <cmath>

#include "doctest.h"
#include "netfdi/fdi.hpp"
#include "test_helpers.hpp"

using namespace netfdi;

namespace {

std::vector<AgentModel> vehicle_agents(std::size_t n, Rng& rng, double lo = 0.04, double hi = 0.1) {
    std::vector<AgentModel> agents;
    for (std::size_t i = 0; i < n; ++i) agents.push_back(AgentModel::vehicle_drag(rng.uniform(lo, hi)));
    return agents;
}

Vec ramp_target(std::size_t n, double base = 2.0, double step = 0.5) {
    Vec y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = base + step * static_cast<double>(i);
    return y;
}

}  // namespace

TEST_CASE("detect_synthesize validates a kernel vector over all nonempty subgraphs") {
    Graph g(3, {{0, 1}, {1, 2}, {0, 2}});
    std::vector<AgentModel> agents(3, AgentModel::linear_leak(1.0));
    std::vector<ControllerModel> ctrls(3, ControllerModel::linear(1.0));
    SynthesisBundle b = detect_synthesize(agents, g, ctrls, {1.0, 2.0, 3.0}, 7, {-50.0, 50.0});
    CHECK(b.graphs_table.size() == 7);  // all nonempty subgraphs of the triangle
    CHECK(b.min_separation >= 1e-4);
    CHECK(b.connectivity == 2);
    CHECK(linf_dist(b.sslimits_stable[0], {1.0, 2.0, 3.0}) < 1e-6);
    IncidenceMatrix inc(g);
    CHECK(linf_norm(inc.apply(b.ip_table[0].bias)) <= 1e-12);
}

TEST_CASE("detection refuses trees") {
    Graph g = testutil::path_graph(4);
    std::vector<AgentModel> agents(4, AgentModel::linear_leak(1.0));
    std::vector<ControllerModel> ctrls(3, ControllerModel::linear(1.0));
    CHECK_THROWS_AS(detect_synthesize(agents, g, ctrls, {1.0, 1.0, 1.0, 1.0}, 1), SynthesisError);
}

TEST_CASE("detect_run declares exactly when faults occur") {
    Rng rng(61);
    Graph g = testutil::complete_graph(4);
    auto agents = vehicle_agents(4, rng);
    std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::tanh_ctrl());
    Vec y_star = ramp_target(4);
    SynthesisBundle b = detect_synthesize(agents, g, ctrls, y_star, 3, {-50.0, 50.0});
    RunConfig cfg;
    cfg.span = 60.0;
    Vec x0{1.0, 3.0, 2.0, 4.0};

    SUBCASE("faultless run never declares and reaches the target") {
        RunSummary s = detect_run(b, SwitchingSignal{}, x0, cfg);
        CHECK_FALSE(s.log.contains("fault_declared"));
        CHECK(s.terminal_error < 1e-3);
    }
    SUBCASE("single fault is detected after its time") {
        SwitchingSignal sig({{20.0, 0}});
        RunSummary s = detect_run(b, sig, x0, cfg);
        auto declared = s.log.first_time("fault_declared");
        REQUIRE(declared.has_value());
        CHECK(*declared > 20.0);
    }
    SUBCASE("all-but-spanning-tree faults are detected") {
        SwitchingSignal sig({{10.0, 0}, {10.0, 1}, {10.0, 2}});
        RunSummary s = detect_run(b, sig, x0, cfg);
        CHECK(s.log.contains("fault_declared"));
    }
}

TEST_CASE("adversary_synthesize table sizes") {
    Graph g = testutil::cycle_graph(5);
    std::vector<AgentModel> agents(5, AgentModel::linear_leak(1.0));
    std::vector<ControllerModel> ctrls(5, ControllerModel::linear(1.0));
    SUBCASE("m=5, r=1 gives 6 entries") {
        SynthesisBundle b = adversary_synthesize(agents, g, ctrls, ramp_target(5), 1, 3);
        CHECK(b.size() == 6);
        CHECK(b.broadcast_bits() == 3);
        CHECK(b.sslimits_exploration.size() == 6);
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(linf_dist(b.sslimits_stable[j], b.y_star) < 1e-5);
    }
    SUBCASE("r=0 degenerates to plain synthesis") {
        SynthesisBundle b = adversary_synthesize(agents, g, ctrls, ramp_target(5), 0, 3);
        CHECK(b.size() == 1);
    }
}

TEST_CASE("adversary_play identifies the removal and restores the goal") {
    Rng rng(111);
    Graph g = testutil::complete_graph(4);
    auto agents = vehicle_agents(4, rng);
    std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::tanh_ctrl());
    Vec y_star = ramp_target(4);
    SynthesisBundle b = adversary_synthesize(agents, g, ctrls, y_star, 1, 17, {-50.0, 50.0});
    RunConfig cfg;
    cfg.span = 80.0;
    Vec x0{2.0, 1.0, 4.0, 3.0};
    ProfileBank bank;

    SUBCASE("no removal identifies the full graph") {
        RunSummary s = adversary_play(b, {}, x0, cfg, &bank);
        CHECK(s.final_graph_index == 0);
        CHECK(s.terminal_error <= 1e-3);
    }
    SUBCASE("each single removal is identified exactly") {
        for (int e = 0; e < static_cast<int>(g.n_edges()); ++e) {
            RunSummary s = adversary_play(b, {e}, x0, cfg, &bank);
            REQUIRE(s.final_graph_index == e + 1);  // enumeration order
            CHECK(s.terminal_error <= 1e-3);
            CHECK(s.log.contains("broadcast"));
            for (const auto& ev : s.log.events())
                if (ev.kind == "broadcast") CHECK(ev.payload.at("bits").get<int>() == 3);
        }
    }
}

TEST_CASE("isolate_synthesize connectivity gate and table sizes") {
    Rng rng(131);
    SUBCASE("K4 gives r=1 and 7 entries") {
        Graph g = testutil::complete_graph(4);
        auto agents = vehicle_agents(4, rng);
        std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::tanh_ctrl());
        SynthesisBundle b = isolate_synthesize(agents, g, ctrls, ramp_target(4), 5, {-50.0, 50.0});
        CHECK(b.max_faults == 1);
        CHECK(b.size() == 7);
        IncidenceMatrix inc(g);
        for (std::size_t j = 0; j < b.size(); ++j) {
            CHECK(linf_dist(b.sslimits_stable[j], b.y_star) < 1e-5);
            // Masked to the believed subgraph, the bias sits in ker E_H: the
            // believed graph's steady state stays at the target.
            Vec masked = mask_edge_vector(b.graphs_table[j], b.ip_table[j].bias);
            CHECK(linf_norm(inc.apply(masked, &b.graphs_table[j])) <= 1e-12);
        }
    }
    SUBCASE("C5 (2-connected) is refused") {
        Graph g = testutil::cycle_graph(5);
        std::vector<AgentModel> agents(5, AgentModel::linear_leak(1.0));
        std::vector<ControllerModel> ctrls(5, ControllerModel::linear(1.0));
        CHECK_THROWS_AS(isolate_synthesize(agents, g, ctrls, ramp_target(5), 5), SynthesisError);
    }
}

TEST_CASE("isolate_run state machine") {
    Rng rng(151);
    Graph g = testutil::complete_graph(4);
    auto agents = vehicle_agents(4, rng);
    std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::tanh_ctrl());
    Vec y_star = ramp_target(4);
    SynthesisBundle b = isolate_synthesize(agents, g, ctrls, y_star, 23, {-50.0, 50.0});
    RunConfig cfg;
    cfg.span = 90.0;
    Vec x0{2.0, 3.5, 1.5, 3.0};
    ProfileBank bank;

    SUBCASE("faultless: stable forever, converges to the target") {
        RunSummary s = isolate_run(b, SwitchingSignal{}, x0, cfg, &bank);
        CHECK_FALSE(s.log.contains("fault_declared"));
        CHECK(s.final_graph_index == 0);
        CHECK(s.ended_stable);
        CHECK(s.terminal_error < 1e-3);
    }
    SUBCASE("single fault: one exploratory episode, correct graph, convergence") {
        SwitchingSignal sig({{25.0, 2}});
        RunSummary s = isolate_run(b, sig, x0, cfg, &bank);
        auto declared = s.log.first_time("fault_declared");
        REQUIRE(declared.has_value());
        CHECK(*declared >= 25.0);
        CHECK(*declared <= 26.0);  // within a couple of samples of the fault
        REQUIRE(s.log.contains("graph_identified"));
        CHECK(s.final_graph_index == 3);  // removing edge 2 is entry 3
        CHECK(s.ended_stable);
        CHECK(s.terminal_error < 1e-3);
    }
    SUBCASE("log safety: transitions alternate through declarations") {
        SwitchingSignal sig({{25.0, 2}});
        RunSummary s = isolate_run(b, sig, x0, cfg, &bank);
        std::string phase = "stable";
        for (const auto& ev : s.log.events()) {
            if (ev.kind == "phase_change") {
                std::string next = ev.payload.at("phase").get<std::string>();
                if (next == "exploratory") CHECK(phase == "stable");
                if (next == "stable") CHECK(phase == "exploratory");
                if (next != "exploratory_restart") phase = next;
            }
        }
        CHECK(phase == "stable");
    }
}

TEST_CASE("event log JSONL round trip") {
    FdiEventLog log;
    log.append(0.5, "fault", {{"edge", 3}});
    log.append(0.6, "fault_declared", {{"believed", 0}});
    log.append(1.2, "phase_change", {{"phase", "exploratory"}});
    FdiEventLog back = FdiEventLog::from_jsonl(log.to_jsonl());
    REQUIRE(back.events().size() == 3);
    CHECK(back.events()[0].kind == "fault");
    CHECK(back.events()[0].payload.at("edge").get<int>() == 3);
    CHECK(back.events()[2].t == 1.2);
    CHECK(back.to_jsonl() == log.to_jsonl());
    // Timestamps must be nondecreasing.
    FdiEventLog bad;
    bad.append(2.0, "fault");
    CHECK_THROWS_AS(bad.append(1.0, "fault"), ProtocolError);
}

TEST_CASE("bundle JSON round trip") {
    Rng rng(171);
    Graph g = testutil::complete_graph(4);
    auto agents = vehicle_agents(4, rng);
    std::vector<ControllerModel> ctrls(g.n_edges(), ControllerModel::tanh_ctrl());
    SynthesisBundle b = isolate_synthesize(agents, g, ctrls, ramp_target(4), 77, {-50.0, 50.0});
    b.scenario_hash = "cafebabe";
    json j = bundle_to_json(b);
    SynthesisBundle b2 = bundle_from_json(j);
    CHECK(b2.size() == b.size());
    CHECK(b2.scenario_hash == "cafebabe");
    CHECK(b2.max_faults == b.max_faults);
    CHECK(linf_dist(b2.y_star, b.y_star) == 0.0);
    CHECK(linf_dist(b2.exploration_bias, b.exploration_bias) == 0.0);
    for (std::size_t idx = 0; idx < b.size(); ++idx) {
        CHECK(b2.graphs_table[idx].bits() == b.graphs_table[idx].bits());
        CHECK(linf_dist(b2.ip_table[idx].mu_star, b.ip_table[idx].mu_star) == 0.0);
        CHECK(linf_dist(b2.sslimits_exploration[idx], b.sslimits_exploration[idx]) == 0.0);
    }
    RunConfig cfg;
    cfg.span = 50.0;
    Vec x0{2.0, 3.0, 2.5, 3.5};
    RunSummary s1 = isolate_run(b, SwitchingSignal{}, x0, cfg);
    RunSummary s2 = isolate_run(b2, SwitchingSignal{}, x0, cfg);
    CHECK(linf_dist(s1.terminal_y, s2.terminal_y) == 0.0);
}
