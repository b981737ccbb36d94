#ifndef NETFDI_SCENARIO_HPP
#define NETFDI_SCENARIO_HPP

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "netfdi/common.hpp"
#include "netfdi/fdi.hpp"
#include "netfdi/rng.hpp"
#include "netfdi/simulator.hpp"

namespace netfdi {

// Full description of one reproducible run: models, target, fault schedule,
// monitoring configuration and every seed.
struct Scenario {
    std::string name = "scenario";
    Graph graph{0, {}};
    std::vector<AgentModel> agents;
    std::vector<ControllerModel> controllers;
    Vec y_star;
    std::string mode = "isolate";  // detect | adversary | isolate
    int r = -1;                    // adversary-mode removals; isolate derives r = k-2
    std::vector<SwitchingSignal::Event> faults;
    double span = 100.0;
    double dt = 1e-3;
    double sample_rate = 10.0;
    Interval state_bounds{-1e3, 1e3};
    double min_separation = 1e-4;
    AssertionConfig assertion;
    std::uint64_t seed_bias = 1;
    std::uint64_t seed_x0 = 2;
    Vec x0;  // explicit initial state; empty means Gaussian from seed_x0
    double x0_mean = 0.0;
    double x0_sigma = 1.0;

    SwitchingSignal signal() const { return SwitchingSignal(faults); }

    Vec initial_state() const {
        if (!x0.empty()) return x0;
        Rng rng(seed_x0);
        Vec x(graph.n_vertices());
        for (auto& v : x) v = x0_mean + x0_sigma * rng.gaussian();
        return x;
    }
};

inline Scenario scenario_from_json(const json& j) {
    Scenario s;
    s.name = j.value("name", std::string("scenario"));
    s.graph = graph_from_json(j.at("graph"));
    for (const auto& a : j.at("agents")) s.agents.push_back(agent_from_json(a));
    for (const auto& c : j.at("controllers")) s.controllers.push_back(controller_from_json(c));
    if (s.agents.size() != s.graph.n_vertices())
        throw ValidationError("scenario: agent count does not match the graph");
    if (s.controllers.size() != s.graph.n_edges())
        throw ValidationError("scenario: controller count does not match the graph");
    s.y_star = j.at("y_star").get<Vec>();
    if (s.y_star.size() != s.graph.n_vertices())
        throw ValidationError("scenario: y_star size does not match the graph");
    s.mode = j.value("mode", std::string("isolate"));
    if (s.mode != "detect" && s.mode != "adversary" && s.mode != "isolate")
        throw ValidationError("scenario: unknown mode " + s.mode);
    s.r = j.value("r", -1);
    if (j.contains("faults"))
        for (const auto& f : j.at("faults")) {
            int edge;
            if (f.at("edge").is_array()) {
                edge = s.graph.edge_index(f.at("edge")[0].get<int>(), f.at("edge")[1].get<int>());
                if (edge < 0) throw ValidationError("scenario: fault on a non-existent edge");
            } else {
                edge = f.at("edge").get<int>();
            }
            s.faults.push_back({f.at("t").get<double>(), edge});
        }
    s.span = j.value("span", 100.0);
    s.dt = j.value("dt", 1e-3);
    s.sample_rate = j.value("sample_rate", 10.0);
    if (j.contains("state_bounds"))
        s.state_bounds = {j.at("state_bounds")[0].get<double>(),
                          j.at("state_bounds")[1].get<double>()};
    s.min_separation = j.value("min_separation", 1e-4);
    if (j.contains("assertion")) {
        const auto& a = j.at("assertion");
        s.assertion.method = parse_method(a.value("method", std::string("profile")));
        s.assertion.delta1 = a.value("delta1", 0.0);
        s.assertion.margin = a.value("margin", 0.1);
        s.assertion.ode_scheduler = a.value("scheduler", std::string("m_based")) == "ode";
    }
    const auto& seeds = j.at("seeds");
    s.seed_bias = seeds.at("w").get<std::uint64_t>();
    s.seed_x0 = seeds.at("x0").get<std::uint64_t>();
    s.assertion.seed = seeds.value("assertion", s.seed_bias ^ 0x5bd1e995ULL);
    if (j.contains("x0")) s.x0 = j.at("x0").get<Vec>();
    s.x0_mean = j.value("x0_mean", 0.0);
    s.x0_sigma = j.value("x0_sigma", 1.0);
    SwitchingSignal validate_signal(s.faults);  // throws on a malformed schedule
    return s;
}

inline json scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["graph"] = graph_to_json(s.graph);
    j["agents"] = json::array();
    for (const auto& a : s.agents) j["agents"].push_back(agent_to_json(a));
    j["controllers"] = json::array();
    for (const auto& c : s.controllers) j["controllers"].push_back(controller_to_json(c));
    j["y_star"] = s.y_star;
    j["mode"] = s.mode;
    j["r"] = s.r;
    j["faults"] = json::array();
    for (const auto& f : s.faults) j["faults"].push_back({{"t", f.time}, {"edge", f.edge}});
    j["span"] = s.span;
    j["dt"] = s.dt;
    j["sample_rate"] = s.sample_rate;
    j["state_bounds"] = json::array({s.state_bounds.lo, s.state_bounds.hi});
    j["min_separation"] = s.min_separation;
    j["assertion"] = {{"method", s.assertion.method == AssertionConfig::Method::Profile
                                     ? "profile"
                                     : "high_rate"},
                      {"delta1", s.assertion.delta1},
                      {"margin", s.assertion.margin},
                      {"scheduler", s.assertion.ode_scheduler ? "ode" : "m_based"}};
    j["seeds"] = {{"w", s.seed_bias}, {"x0", s.seed_x0}, {"assertion", s.assertion.seed}};
    if (!s.x0.empty()) j["x0"] = s.x0;
    j["x0_mean"] = s.x0_mean;
    j["x0_sigma"] = s.x0_sigma;
    return j;
}

// FNV-1a over the canonical (sorted-key) serialization.
inline std::string scenario_hash(const Scenario& s) {
    const std::string canon = scenario_to_json(s).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

inline RunConfig run_config_of(const Scenario& s) {
    RunConfig cfg;
    cfg.span = s.span;
    cfg.dt = s.dt;
    cfg.sample_rate = s.sample_rate;
    cfg.assertion = s.assertion;
    cfg.assertion.stream_dt = 1.0 / s.sample_rate;
    return cfg;
}

// Trajectory CSV: header t, x_1..x_n, y_1..y_n; one row per integration step.
inline std::string trajectory_to_csv(const Trajectory& traj) {
    std::ostringstream out;
    out.precision(12);
    const std::size_t n = traj.net->n();
    out << "t";
    for (std::size_t i = 1; i <= n; ++i) out << ",x_" << i;
    for (std::size_t i = 1; i <= n; ++i) out << ",y_" << i;
    out << '\n';
    for (std::size_t k = 0; k < traj.steps(); ++k) {
        out << traj.times[k];
        for (std::size_t i = 0; i < n; ++i) out << ',' << traj.states[k][i];
        Vec y = traj.outputs_at(k);
        for (std::size_t i = 0; i < n; ++i) out << ',' << y[i];
        out << '\n';
    }
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << content;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace netfdi

#endif
