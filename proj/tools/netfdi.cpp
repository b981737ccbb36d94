// netfdi: scenario-driven synthesis, simulation and fault monitoring for
// diffusively-coupled networks. See README.md for the file formats.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "netfdi/casestudy.hpp"
#include "netfdi/fdi.hpp"
#include "netfdi/scenario.hpp"

namespace fs = std::filesystem;
using namespace netfdi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSynthesis = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitProtocol = 5;

void write_error_json(const std::string& out_dir, const std::string& stage,
                      const std::string& message) {
    if (out_dir.empty()) return;
    fs::create_directories(out_dir);
    json err{{"error", message}, {"stage", stage}};
    write_file((fs::path(out_dir) / "error.json").string(), err.dump(2) + "\n");
}

SynthesisBundle synthesize_for(const Scenario& s) {
    if (s.mode == "detect")
        return detect_synthesize(s.agents, s.graph, s.controllers, s.y_star, s.seed_bias,
                                 s.state_bounds, s.min_separation);
    if (s.mode == "adversary") {
        int r = s.r >= 0 ? s.r : 1;
        return adversary_synthesize(s.agents, s.graph, s.controllers, s.y_star, r, s.seed_bias,
                                    s.state_bounds, s.min_separation);
    }
    return isolate_synthesize(s.agents, s.graph, s.controllers, s.y_star, s.seed_bias,
                              s.state_bounds, s.min_separation);
}

json synthesis_report(const Scenario& s, const SynthesisBundle& b) {
    json rep;
    rep["mode"] = s.mode;
    rep["entries"] = b.size();
    rep["connectivity"] = b.connectivity;
    rep["r"] = b.max_faults;
    rep["min_separation"] = b.min_separation;
    rep["broadcast_bits"] = b.broadcast_bits();
    // Profile statistics for the nominal conjecture.
    try {
        NetworkSystem nominal = b.network_for(0);
        ConjecturedLimit lim =
            make_conjectured_limit(nominal, b.graphs_table[0], b.sslimits_stable[0]);
        auto profile = build_combined_profile(nominal, b.graphs_table[0], lim,
                                              max_energy_bound(nominal, lim), s.assertion.seed,
                                              s.assertion.margin);
        rep["profile"] = {{"combination_constant", profile->combination_constant()},
                          {"energy_bound", profile->energy_bound()},
                          {"rho_min", profile->rho_min()},
                          {"omega_table",
                           {{"size", profile->table_size()},
                            {"s_lo", profile->table_s_lo()},
                            {"s_hi", profile->table_s_hi()}}}};
    } catch (const SolverError& e) {
        rep["profile"] = {{"unavailable", e.what()}};
    }
    return rep;
}

json run_summary_json(const Scenario& s, const RunSummary& r) {
    json j;
    j["terminal_y"] = r.terminal_y;
    j["terminal_error"] = r.terminal_error;
    j["max_output_deviation"] = r.max_output_deviation;
    j["final_graph_index"] = r.final_graph_index;
    j["ended_stable"] = r.ended_stable;
    j["fault_declarations"] = r.log.count("fault_declared");
    json timeline = json::array();
    for (const auto& ev : r.log.events())
        if (ev.kind == "phase_change" || ev.kind == "graph_identified")
            timeline.push_back({{"t", ev.t}, {"kind", ev.kind}, {"payload", ev.payload}});
    j["timeline"] = timeline;
    json latencies = json::array();
    for (const auto& ev : r.log.events())
        if (ev.kind == "fault") {
            auto declared = r.log.first_time("fault_declared", ev.t - 1e-9);
            if (declared) latencies.push_back(*declared - ev.t);
        }
    j["detection_latencies"] = latencies;
    j["scenario"] = s.name;
    return j;
}

std::string states_csv(const SynthesisBundle& b, const Vec& times,
                       const std::vector<Vec>& states) {
    std::ostringstream out;
    out.precision(12);
    const std::size_t n = b.graph.n_vertices();
    out << "t";
    for (std::size_t i = 1; i <= n; ++i) out << ",x_" << i;
    for (std::size_t i = 1; i <= n; ++i) out << ",y_" << i;
    out << '\n';
    for (std::size_t k = 0; k < times.size(); ++k) {
        out << times[k];
        for (std::size_t i = 0; i < n; ++i) out << ',' << states[k][i];
        for (std::size_t i = 0; i < n; ++i) out << ',' << b.agents[i].h(states[k][i]);
        out << '\n';
    }
    return out.str();
}

int cmd_synth(const std::string& scenario_path, const std::string& out_dir,
              const std::string& mode_override, std::uint64_t seed_override) {
    Scenario s = scenario_from_json(read_json_file(scenario_path));
    if (!mode_override.empty()) s.mode = mode_override;
    if (seed_override != 0) s.seed_bias = seed_override;
    SynthesisBundle b = synthesize_for(s);
    b.scenario_hash = scenario_hash(s);
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "bundle.json").string(), bundle_to_json(b).dump() + "\n");
    write_file((fs::path(out_dir) / "synthesis_report.json").string(),
               synthesis_report(s, b).dump(2) + "\n");
    std::cout << "synthesized " << b.size() << " protocol entries (connectivity "
              << b.connectivity << ", min separation " << b.min_separation << ")\n";
    return kExitOk;
}

int cmd_run(const std::string& scenario_path, const std::string& bundle_path,
            const std::string& out_dir) {
    Scenario s = scenario_from_json(read_json_file(scenario_path));
    SynthesisBundle b = bundle_from_json(read_json_file(bundle_path));
    if (!b.scenario_hash.empty() && b.scenario_hash != scenario_hash(s))
        throw ValidationError("bundle was synthesized for a different scenario (hash mismatch)");

    RunConfig cfg = run_config_of(s);
    cfg.record_trajectory = true;
    RunSummary summary;
    if (b.mode == SynthesisBundle::Mode::Detect) {
        summary = detect_run(b, s.signal(), s.initial_state(), cfg);
    } else if (b.mode == SynthesisBundle::Mode::Adversary) {
        std::vector<int> removed;
        for (const auto& f : s.faults) removed.push_back(f.edge);
        summary = adversary_play(b, removed, s.initial_state(), cfg);
    } else {
        summary = isolate_run(b, s.signal(), s.initial_state(), cfg);
    }

    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "trajectory.csv").string(),
               states_csv(b, summary.recorded_times, summary.recorded_states));
    write_file((fs::path(out_dir) / "events.jsonl").string(), summary.log.to_jsonl());
    write_file((fs::path(out_dir) / "summary.json").string(),
               run_summary_json(s, summary).dump(2) + "\n");
    std::cout << "run complete: terminal error " << summary.terminal_error << ", "
              << summary.log.count("fault_declared") << " fault declaration(s)\n";
    return kExitOk;
}

int cmd_casestudy(std::uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    ProfileBank bank;
    CaseStudyReport report = run_casestudy(seed, &bank);
    json comparative = json::array();
    for (const auto& res : report.results) {
        Scenario s = casestudy_scenario(res.scenario, seed);
        json j = run_summary_json(s, res.summary);
        j["exploratory_starts"] = res.exploratory_starts;
        comparative.push_back(j);
        write_file((fs::path(out_dir) / ("events_scenario" + std::to_string(res.scenario) + ".jsonl"))
                       .string(),
                   res.summary.log.to_jsonl());
        std::cout << "scenario " << res.scenario << ": terminal error "
                  << res.summary.terminal_error << ", max deviation "
                  << res.max_output_excursion << "\n";
    }
    write_file((fs::path(out_dir) / "bundle.json").string(),
               bundle_to_json(report.bundle).dump() + "\n");
    write_file((fs::path(out_dir) / "casestudy_summary.json").string(),
               comparative.dump(2) + "\n");
    return kExitOk;
}

int cmd_graph(const std::string& graph_path) {
    json j = read_json_file(graph_path);
    Graph g = graph_from_json(j.contains("graph") ? j.at("graph") : j);
    json out;
    out["n"] = g.n_vertices();
    out["m"] = g.n_edges();
    out["connectivity"] = vertex_connectivity(g);
    try {
        auto basis = cycle_space_basis(g);
        out["cycle_space_dimension"] = basis.size();
        json vectors = json::array();
        for (const auto& b : basis) vectors.push_back(b);
        out["cycle_basis"] = vectors;
    } catch (const ValidationError&) {
        out["cycle_space_dimension"] = nullptr;
    }
    json counts = json::array();
    for (std::size_t r = 0; r < std::min<std::size_t>(g.n_edges(), 4); ++r)
        counts.push_back({{"r", r}, {"count", subgraph_count(g.n_edges(), r)}});
    out["subgraph_counts"] = counts;
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fault monitoring toolkit for nonlinear diffusively-coupled networks"};
    app.require_subcommand(1);

    std::string scenario_path, bundle_path, out_dir = "out", graph_path, mode_override;
    std::uint64_t seed = 50;

    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "Synthesize protocols and indication vectors");
    synth->add_option("--scenario", scenario_path, "Scenario JSON")->required();
    synth->add_option("--out", out_dir, "Output directory");
    synth->add_option("--mode", mode_override, "Override mode: detect|adversary|isolate")
        ->check(CLI::IsMember({"detect", "adversary", "isolate"}));
    synth->add_option("--seed", synth_seed, "Override the scenario's bias seed (0 keeps it)");

    auto* run = app.add_subcommand("run", "Run a scenario against a synthesized bundle");
    run->add_option("--scenario", scenario_path, "Scenario JSON")->required();
    run->add_option("--bundle", bundle_path, "Bundle JSON from synth")->required();
    run->add_option("--out", out_dir, "Output directory");

    auto* cs = app.add_subcommand("casestudy", "Run the four-scenario vehicle benchmark");
    cs->add_option("--seed", seed, "Master seed");
    cs->add_option("--out", out_dir, "Output directory");

    auto* gt = app.add_subcommand("graph", "Connectivity / cycle-space utilities");
    gt->add_option("--scenario", graph_path, "Graph or scenario JSON")->required();

    CLI11_PARSE(app, argc, argv);

    std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (synth->parsed()) return cmd_synth(scenario_path, out_dir, mode_override, synth_seed);
        if (run->parsed()) return cmd_run(scenario_path, bundle_path, out_dir);
        if (cs->parsed()) return cmd_casestudy(seed, out_dir);
        if (gt->parsed()) return cmd_graph(graph_path);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        write_error_json(out_dir, stage, e.what());
        return kExitValidation;
    } catch (const SynthesisError& e) {
        std::cerr << "synthesis error: " << e.what() << "\n";
        write_error_json(out_dir, stage, e.what());
        return kExitSynthesis;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        write_error_json(out_dir, stage, e.what());
        return kExitDivergence;
    } catch (const ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        write_error_json(out_dir, stage, e.what());
        return kExitProtocol;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        write_error_json(out_dir, stage, e.what());
        return kExitValidation;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        write_error_json(out_dir, stage, e.what());
        return kExitDivergence;
    }
    return kExitOk;
}
