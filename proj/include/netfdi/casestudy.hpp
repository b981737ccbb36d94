#ifndef NETFDI_CASESTUDY_HPP
#define NETFDI_CASESTUDY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "netfdi/fdi.hpp"
#include "netfdi/rng.hpp"
#include "netfdi/scenario.hpp"

namespace netfdi {

// Twenty-vehicle velocity-coordination benchmark: drag-quadratic agents with
// tanh edge couplings on the circulant graph C20(1,2) (4-regular and
// 4-connected, standing in for the original pictorial interaction graph).

inline Graph casestudy_graph() {
    std::vector<std::pair<int, int>> edges;
    for (int k : {1, 2})
        for (int i = 0; i < 20; ++i) {
            int j = (i + k) % 20;
            edges.push_back({i, j});
        }
    return Graph(20, edges);
}

inline Vec casestudy_target() {
    Vec y(20);
    for (int i = 0; i < 7; ++i) y[static_cast<std::size_t>(i)] = 60.0;
    for (int i = 7; i < 13; ++i) y[static_cast<std::size_t>(i)] = 70.0;
    for (int i = 13; i < 20; ++i) y[static_cast<std::size_t>(i)] = 50.0;
    return y;
}

// Scenario index is 1-based, matching the four runs: faultless; faults at
// 20 s/50 s; faults at 20 s/21 s; faults at 0.5 s/4 s (pre-convergence).
inline Scenario casestudy_scenario(int index, std::uint64_t seed) {
    Scenario s;
    s.name = "casestudy_" + std::to_string(index);
    s.graph = casestudy_graph();
    Rng rng(seed);
    for (int i = 0; i < 20; ++i)
        s.agents.push_back(AgentModel::vehicle_drag(rng.log_uniform(0.01, 0.1)));
    s.controllers.assign(s.graph.n_edges(), ControllerModel::tanh_ctrl());
    s.y_star = casestudy_target();
    s.mode = "isolate";
    s.span = 100.0;
    s.dt = 1e-3;
    s.sample_rate = 10.0;
    s.state_bounds = {-300.0, 300.0};
    s.seed_bias = seed ^ 0xb1a5ULL;
    s.seed_x0 = seed ^ 0x10c0ULL;
    s.x0_mean = 70.0;
    s.x0_sigma = 20.0;
    s.assertion.seed = seed ^ 0xa55eULL;

    const int e_23 = s.graph.edge_index(1, 2);    // vehicles #2 and #3
    const int e_1314 = s.graph.edge_index(12, 13);  // vehicles #13 and #14
    switch (index) {
        case 1: break;
        case 2: s.faults = {{20.0, e_23}, {50.0, e_1314}}; break;
        case 3: s.faults = {{20.0, e_23}, {21.0, e_1314}}; break;
        case 4: s.faults = {{0.5, e_23}, {4.0, e_1314}}; break;
        default: throw ValidationError("case study scenario index must be 1..4");
    }
    return s;
}

struct CaseStudyResult {
    int scenario = 0;
    RunSummary summary;
    double max_output_excursion = 0.0;  // max over time of |y_i(t) - y_star_i|
    std::vector<double> exploratory_starts;
};

struct CaseStudyReport {
    SynthesisBundle bundle;
    std::vector<CaseStudyResult> results;
};

// Builds the shared isolation bundle once (profiles cached across scenarios)
// and runs all four scenarios end to end.
inline CaseStudyReport run_casestudy(std::uint64_t seed, ProfileBank* bank_opt = nullptr,
                                     std::vector<int> scenario_indices = {1, 2, 3, 4}) {
    CaseStudyReport report;
    Scenario base = casestudy_scenario(1, seed);
    report.bundle = isolate_synthesize(base.agents, base.graph, base.controllers, base.y_star,
                                       base.seed_bias, base.state_bounds, base.min_separation);
    report.bundle.scenario_hash = scenario_hash(base);

    ProfileBank local;
    ProfileBank& bank = bank_opt ? *bank_opt : local;
    for (int idx : scenario_indices) {
        Scenario s = casestudy_scenario(idx, seed);
        CaseStudyResult res;
        res.scenario = idx;
        res.summary = isolate_run(report.bundle, s.signal(), s.initial_state(), run_config_of(s),
                                  &bank);
        for (const auto& ev : res.summary.log.events())
            if (ev.kind == "phase_change" &&
                ev.payload.value("phase", std::string()) == "exploratory")
                res.exploratory_starts.push_back(ev.t);
        res.max_output_excursion = res.summary.max_output_deviation;
        report.results.push_back(std::move(res));
    }
    return report;
}

}  // namespace netfdi

#endif
