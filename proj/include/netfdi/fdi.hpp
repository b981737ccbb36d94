#ifndef NETFDI_FDI_HPP
#define NETFDI_FDI_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "netfdi/assertion.hpp"
#include "netfdi/common.hpp"
#include "netfdi/graph.hpp"
#include "netfdi/indication.hpp"
#include "netfdi/parallel.hpp"
#include "netfdi/simulator.hpp"
#include "netfdi/steady_state.hpp"

namespace netfdi {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

struct FdiEvent {
    double t;
    std::string kind;
    json payload;
};

class FdiEventLog {
  public:
    void append(double t, std::string kind, json payload = json::object()) {
        if (!events_.empty() && t < events_.back().t - 1e-12)
            throw ProtocolError("event log: timestamps must be nondecreasing");
        events_.push_back({t, std::move(kind), std::move(payload)});
    }

    const std::vector<FdiEvent>& events() const { return events_; }

    bool contains(const std::string& kind) const {
        return first_time(kind).has_value();
    }

    std::optional<double> first_time(const std::string& kind, double after = -1.0) const {
        for (const auto& ev : events_)
            if (ev.kind == kind && ev.t > after) return ev.t;
        return std::nullopt;
    }

    std::size_t count(const std::string& kind) const {
        std::size_t c = 0;
        for (const auto& ev : events_)
            if (ev.kind == kind) ++c;
        return c;
    }

    std::string to_jsonl() const {
        std::string out;
        for (const auto& ev : events_) {
            json line = ev.payload;
            line["t"] = ev.t;
            line["type"] = ev.kind;
            out += line.dump();
            out += '\n';
        }
        return out;
    }

    static FdiEventLog from_jsonl(const std::string& text) {
        FdiEventLog log;
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            std::string line = text.substr(pos, end - pos);
            pos = end + 1;
            if (line.empty()) continue;
            json j = json::parse(line);
            double t = j.at("t").get<double>();
            std::string kind = j.at("type").get<std::string>();
            j.erase("t");
            j.erase("type");
            log.append(t, std::move(kind), std::move(j));
        }
        return log;
    }

  private:
    std::vector<FdiEvent> events_;
};

// ---------------------------------------------------------------------------
// Synthesis bundle
// ---------------------------------------------------------------------------

// One per-subgraph interaction protocol: controller offsets, node feedforward
// and the (kernel) bias that rides on the controller outputs.
struct InteractionProtocol {
    Vec zeta_star;    // per edge
    Vec mu_star;      // per edge
    Vec feedforward;  // per node
    Vec bias;         // per edge; kernel vector in detect/isolate protocols
    bool disconnected = false;
};

struct SynthesisBundle {
    enum class Mode { Detect, Adversary, Isolate };

    Mode mode = Mode::Detect;
    Graph graph{0, {}};
    std::vector<AgentModel> agents;
    std::vector<ControllerModel> base_controllers;
    Interval state_bounds{-1e3, 1e3};
    Vec y_star;
    int max_faults = 0;  // r

    std::vector<SubgraphMask> graphs_table;          // length N, index 0 = full graph
    std::vector<InteractionProtocol> ip_table;       // per subgraph (1 entry in detect mode)
    Vec exploration_bias;                            // shared general Gaussian w
    std::vector<Vec> sslimits_exploration;           // limits under (IP(0), w) per subgraph
    std::vector<Vec> sslimits_stable;                // limit of Graphs(j) under IP(j)

    std::uint64_t seed = 0;
    double min_separation = 0.0;
    int connectivity = 0;
    std::string scenario_hash;

    std::size_t size() const { return graphs_table.size(); }

    int broadcast_bits() const {
        return static_cast<int>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(2, size())))));
    }

    // Network running protocol j. The exploratory phase runs protocol 0's
    // controllers with the shared general bias in place of the kernel vector.
    NetworkSystem network_for(std::size_t j, bool with_exploration_bias = false) const {
        std::vector<ControllerModel> ctrls = base_controllers;
        const InteractionProtocol& ip = ip_table[j];
        for (std::size_t e = 0; e < ctrls.size(); ++e) {
            ctrls[e].zeta_star = ip.zeta_star[e];
            ctrls[e].mu_star = ip.mu_star[e];
        }
        NetworkSystem net(graph, agents, ctrls, with_exploration_bias ? exploration_bias : ip.bias,
                          ip.feedforward);
        net.state_bounds = state_bounds;
        return net;
    }

    NetworkSystem exploration_network() const { return network_for(0, true); }
};

namespace detail {

// Largest family radius keeping the validation table tractable.
inline std::size_t default_validation_r(std::size_t m, std::size_t cap = 4096) {
    std::size_t r = 0;
    while (r + 1 < m && subgraph_count(m, r + 1) <= cap) ++r;
    return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthesis entry points (Detect / Adversary / Isolate)
// ---------------------------------------------------------------------------

// Detection synthesis: solve the nominal synthesis, then draw and validate a
// kernel indication vector so every faulty subgraph settles away from y_star.
inline SynthesisBundle detect_synthesize(const std::vector<AgentModel>& agents, const Graph& g,
                                         const std::vector<ControllerModel>& base_controllers,
                                         const Vec& y_star, std::uint64_t seed,
                                         Interval state_bounds = {-1e3, 1e3},
                                         double min_sep = 1e-4, int validation_r = -1) {
    SynthesisBundle b;
    b.mode = SynthesisBundle::Mode::Detect;
    b.graph = g;
    b.agents = agents;
    b.base_controllers = base_controllers;
    b.state_bounds = state_bounds;
    b.y_star = y_star;
    b.seed = seed;
    b.connectivity = vertex_connectivity(g);
    if (b.connectivity < 2)
        throw SynthesisError("detection needs a 2-connected graph (connectivity " +
                             std::to_string(b.connectivity) + ")");

    NetworkSystem nominal =
        synthesize_controllers(agents, g, base_controllers, y_star, nullptr, state_bounds);

    const std::size_t r_val = validation_r >= 0 ? static_cast<std::size_t>(validation_r)
                                                : detail::default_validation_r(g.n_edges());
    b.graphs_table = enumerate_subgraphs(g, r_val);
    b.max_faults = static_cast<int>(r_val);

    auto sampler = [&](std::uint64_t s) { return sample_kernel(g, s); };
    IndicationVector w = sample_validated(sampler, nominal, b.graphs_table, seed, min_sep);
    b.min_separation = w.min_separation;

    InteractionProtocol ip;
    ip.zeta_star.resize(g.n_edges());
    ip.mu_star.resize(g.n_edges());
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        ip.zeta_star[e] = nominal.controllers[e].zeta_star;
        ip.mu_star[e] = nominal.controllers[e].mu_star;
    }
    ip.feedforward = nominal.feedforward;
    ip.bias = w.w;
    b.ip_table.push_back(std::move(ip));

    NetworkSystem biased = nominal;
    biased.bias = w.w;
    b.sslimits_stable.push_back(
        solve_steady_state(biased, SubgraphMask::full(g), &y_star).y);
    return b;
}

namespace detail {

// Per-subgraph synthesis into an InteractionProtocol entry.
inline InteractionProtocol synthesize_protocol(const std::vector<AgentModel>& agents,
                                               const Graph& g,
                                               const std::vector<ControllerModel>& base,
                                               const Vec& y_star, const SubgraphMask& mask,
                                               Interval bounds) {
    NetworkSystem net = synthesize_controllers(agents, g, base, y_star, &mask, bounds);
    InteractionProtocol ip;
    ip.zeta_star.resize(g.n_edges());
    ip.mu_star.resize(g.n_edges());
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        ip.zeta_star[e] = net.controllers[e].zeta_star;
        ip.mu_star[e] = net.controllers[e].mu_star;
    }
    ip.feedforward = net.feedforward;
    ip.bias.assign(g.n_edges(), 0.0);
    ip.disconnected = !is_connected(g, &mask);
    return ip;
}

}  // namespace detail

// Planner synthesis for the adversarial game: per-subgraph protocols plus one
// shared general indication vector validated across the whole table.
inline SynthesisBundle adversary_synthesize(const std::vector<AgentModel>& agents, const Graph& g,
                                            const std::vector<ControllerModel>& base_controllers,
                                            const Vec& y_star, int r, std::uint64_t seed,
                                            Interval state_bounds = {-1e3, 1e3},
                                            double min_sep = 1e-4) {
    if (r < 0 || static_cast<std::size_t>(r) >= g.n_edges())
        throw ValidationError("adversary synthesis: need 0 <= r < m");
    SynthesisBundle b;
    b.mode = SynthesisBundle::Mode::Adversary;
    b.graph = g;
    b.agents = agents;
    b.base_controllers = base_controllers;
    b.state_bounds = state_bounds;
    b.y_star = y_star;
    b.max_faults = r;
    b.seed = seed;
    b.connectivity = vertex_connectivity(g);
    b.graphs_table = enumerate_subgraphs(g, static_cast<std::size_t>(r));

    const std::size_t n_entries = b.graphs_table.size();
    b.ip_table.resize(n_entries);
    parallel_for(n_entries, [&](std::size_t j) {
        b.ip_table[j] = detail::synthesize_protocol(agents, g, base_controllers, y_star,
                                                    b.graphs_table[j], state_bounds);
    });

    NetworkSystem explore_base = b.network_for(0);
    auto sampler = [&](std::uint64_t s) { return sample_general(g.n_edges(), s); };
    IndicationVector w = sample_validated(sampler, explore_base, b.graphs_table, seed, min_sep);
    b.exploration_bias = w.w;
    b.min_separation = w.min_separation;

    NetworkSystem explore = b.exploration_network();
    SteadyStateTable table = steady_state_table(explore, b.graphs_table, &y_star);
    b.sslimits_exploration = table.outputs;

    b.sslimits_stable.resize(n_entries);
    parallel_for(n_entries, [&](std::size_t j) {
        NetworkSystem net_j = b.network_for(j);
        b.sslimits_stable[j] = solve_steady_state(net_j, b.graphs_table[j], &y_star).y;
    });
    return b;
}

// Isolation synthesis: requires k-connectivity >= 3 and sets r = k - 2. Every
// reachable subgraph keeps a nontrivial cycle space, so each one gets its own
// kernel indication vector validated against the whole family.
inline SynthesisBundle isolate_synthesize(const std::vector<AgentModel>& agents, const Graph& g,
                                          const std::vector<ControllerModel>& base_controllers,
                                          const Vec& y_star, std::uint64_t seed,
                                          Interval state_bounds = {-1e3, 1e3},
                                          double min_sep = 1e-4) {
    SynthesisBundle b;
    b.mode = SynthesisBundle::Mode::Isolate;
    b.graph = g;
    b.agents = agents;
    b.base_controllers = base_controllers;
    b.state_bounds = state_bounds;
    b.y_star = y_star;
    b.seed = seed;
    b.connectivity = vertex_connectivity(g);
    if (b.connectivity < 3)
        throw SynthesisError("isolation needs a 3-connected graph (connectivity " +
                             std::to_string(b.connectivity) + ")");
    b.max_faults = b.connectivity - 2;
    b.graphs_table = enumerate_subgraphs(g, static_cast<std::size_t>(b.max_faults));
    const std::size_t n_entries = b.graphs_table.size();

    b.ip_table.resize(n_entries);
    parallel_for(n_entries, [&](std::size_t j) {
        b.ip_table[j] = detail::synthesize_protocol(agents, g, base_controllers, y_star,
                                                    b.graphs_table[j], state_bounds);
    });

    // Shared exploration bias, validated over the full family under (IP(0), w).
    {
        NetworkSystem explore_base = b.network_for(0);
        auto sampler = [&](std::uint64_t s) { return sample_general(g.n_edges(), s); };
        IndicationVector w = sample_validated(sampler, explore_base, b.graphs_table, seed, min_sep);
        b.exploration_bias = w.w;
        b.min_separation = w.min_separation;
    }
    {
        NetworkSystem explore = b.exploration_network();
        b.sslimits_exploration = steady_state_table(explore, b.graphs_table, &y_star).outputs;
    }

    // Per-subgraph kernel bias: the stable-phase protocol IP(j) must send every
    // *other* subgraph away from y_star. The kernel of E_H P_H splits into the
    // subgraph's cycle space plus free components on the absent edges; both
    // parts are sampled (absent-edge entries never reach the believed graph
    // but displace every graph that still carries those edges). Validation is
    // one-vs-all over the family, under IP(j) with the bias masked per
    // subgraph.
    b.sslimits_stable.resize(n_entries);
    std::vector<std::string> failures(n_entries);
    parallel_for(n_entries, [&](std::size_t j) {
        NetworkSystem net_j = b.network_for(j);
        Graph sub(g.n_vertices(), [&] {
            std::vector<std::pair<int, int>> edges;
            for (int e : b.graphs_table[j].present_edges()) edges.push_back(g.edge(static_cast<std::size_t>(e)));
            return edges;
        }());
        const auto present = b.graphs_table[j].present_edges();
        const auto removed = b.graphs_table[j].removed_edges();
        bool ok = false;
        std::uint64_t kernel_seed = seed ^ (0x9e3779b97f4a7c15ULL * (j + 1));
        for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
            IndicationVector w_sub = sample_kernel(sub, kernel_seed + static_cast<std::uint64_t>(attempt));
            Rng absent_rng(kernel_seed * 31 + static_cast<std::uint64_t>(attempt) + 1);
            Vec w_full(g.n_edges(), 0.0);
            for (std::size_t idx = 0; idx < present.size(); ++idx)
                w_full[static_cast<std::size_t>(present[idx])] = w_sub.w[idx];
            for (int e : removed) w_full[static_cast<std::size_t>(e)] = absent_rng.gaussian();
            double norm = linf_norm(w_full);
            for (double& v : w_full) v /= norm;
            NetworkSystem biased = net_j;
            biased.bias = w_full;
            // One-vs-all separation from the believed subgraph's limit; the
            // kernel bias must also leave that limit at y_star.
            SteadyStateTable table = steady_state_table(biased, b.graphs_table, &b.y_star);
            const Vec& own = table.outputs[j];
            double sep = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n_entries; ++k)
                if (k != j) sep = std::min(sep, linf_dist(own, table.outputs[k]));
            if (sep >= min_sep && linf_dist(own, y_star) <= 1e-6 + 1e-6 * linf_norm(y_star)) {
                b.ip_table[j].bias = w_full;
                b.sslimits_stable[j] = own;
                ok = true;
            }
        }
        if (!ok) failures[j] = "kernel indication validation failed for subgraph " + std::to_string(j);
    });
    for (const auto& f : failures)
        if (!f.empty()) throw SynthesisError(f);
    return b;
}

// ---------------------------------------------------------------------------
// In-run protocols
// ---------------------------------------------------------------------------

struct RunConfig {
    double span = 100.0;
    double dt = 1e-3;
    double sample_rate = 10.0;
    AssertionConfig assertion;
    double blowup_bound = 1e6;
    int max_restarts = 10;
    bool record_trajectory = false;
};

// Cache of combined profiles per (bundle, conjecture) entry, reused across
// episodes and scenarios; building one per subgraph is the dominant synthesis
// cost at case-study scale.
class ProfileBank {
  public:
    std::shared_ptr<const CombinedProfile> exploration(const SynthesisBundle& b, std::size_t j,
                                                       const ConjecturedLimit& lim,
                                                       const NetworkSystem& net,
                                                       const AssertionConfig& cfg) {
        if (exploration_.size() < b.size()) exploration_.resize(b.size());
        if (!exploration_[j])
            exploration_[j] = build_combined_profile(net, b.graphs_table[j], lim,
                                                     max_energy_bound(net, lim),
                                                     cfg.seed ^ (j * 0x9e37ULL), cfg.margin);
        return exploration_[j];
    }

    std::shared_ptr<const CombinedProfile> stable(const SynthesisBundle& b, std::size_t j,
                                                  const ConjecturedLimit& lim,
                                                  const NetworkSystem& net,
                                                  const AssertionConfig& cfg) {
        if (stable_.size() < b.size()) stable_.resize(b.size());
        if (!stable_[j])
            stable_[j] = build_combined_profile(net, b.graphs_table[j], lim,
                                                max_energy_bound(net, lim),
                                                cfg.seed ^ (j * 0x85ebULL + 1), cfg.margin);
        return stable_[j];
    }

    void prebuild_exploration(const SynthesisBundle& b, const NetworkSystem& explore_net,
                              const AssertionConfig& cfg) {
        if (exploration_.size() < b.size()) exploration_.resize(b.size());
        parallel_for(b.size(), [&](std::size_t j) {
            if (exploration_[j]) return;
            ConjecturedLimit lim =
                make_conjectured_limit(explore_net, b.graphs_table[j], b.sslimits_exploration[j]);
            exploration_[j] = build_combined_profile(explore_net, b.graphs_table[j], lim,
                                                     max_energy_bound(explore_net, lim),
                                                     cfg.seed ^ (j * 0x9e37ULL), cfg.margin);
        });
    }

    const std::vector<std::shared_ptr<const CombinedProfile>>& exploration_profiles() const {
        return exploration_;
    }
    const std::vector<std::shared_ptr<const CombinedProfile>>& stable_profiles() const {
        return stable_;
    }

  private:
    std::vector<std::shared_ptr<const CombinedProfile>> exploration_;
    std::vector<std::shared_ptr<const CombinedProfile>> stable_;
};

namespace detail {

// Incremental RK4 over the switched closed loop: the run protocols advance it
// one measurement interval at a time and may swap the controller protocol at
// sample boundaries.
class ClosedLoopStepper {
  public:
    ClosedLoopStepper(const Graph& g, Vec x0, double dt, double blowup, bool record = false)
        : dt_(dt), blowup_(blowup), x_(std::move(x0)), present_(g.n_edges(), true),
          record_(record) {
        if (record_) {
            recorded_times_.push_back(0.0);
            recorded_states_.push_back(x_);
        }
    }

    double time() const { return t_; }
    const Vec& state() const { return x_; }
    const std::vector<bool>& present() const { return present_; }
    const Vec& recorded_times() const { return recorded_times_; }
    const std::vector<Vec>& recorded_states() const { return recorded_states_; }

    void fault_edge(int e) { present_[static_cast<std::size_t>(e)] = false; }

    // Advance to target time (grid-aligned) under the given network.
    void advance_to(const NetworkSystem& net, double t_target) {
        SubgraphMask mask(net.graph, present_);
        const auto steps = static_cast<long long>(std::llround((t_target - t_) / dt_));
        thread_local Vec k1, k2, k3, k4, tmp;
        tmp.resize(x_.size());
        for (long long s = 0; s < steps; ++s) {
            closed_loop_rhs_into(net, mask, x_, k1);
            for (std::size_t i = 0; i < x_.size(); ++i) tmp[i] = x_[i] + 0.5 * dt_ * k1[i];
            closed_loop_rhs_into(net, mask, tmp, k2);
            for (std::size_t i = 0; i < x_.size(); ++i) tmp[i] = x_[i] + 0.5 * dt_ * k2[i];
            closed_loop_rhs_into(net, mask, tmp, k3);
            for (std::size_t i = 0; i < x_.size(); ++i) tmp[i] = x_[i] + dt_ * k3[i];
            closed_loop_rhs_into(net, mask, tmp, k4);
            for (std::size_t i = 0; i < x_.size(); ++i)
                x_[i] += dt_ / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            t_ += dt_;
            if (record_) {
                recorded_times_.push_back(t_);
                recorded_states_.push_back(x_);
            }
            if (linf_norm(x_) > blowup_)
                throw DivergenceError("closed loop diverged at t = " + std::to_string(t_));
        }
        t_ = t_target;
    }

    SamplePoint sample(const NetworkSystem& net, std::size_t step_index) const {
        SamplePoint p;
        p.t = t_;
        p.step = step_index;
        p.x = x_;
        p.y.resize(net.n());
        for (std::size_t i = 0; i < net.n(); ++i) p.y[i] = net.agents[i].h(x_[i]);
        SubgraphMask mask(net.graph, present_);
        Vec zeta = net.incidence.apply_transpose(p.y, &mask);
        p.mu.assign(net.m(), 0.0);
        for (std::size_t e = 0; e < net.m(); ++e)
            if (mask.present(e)) p.mu[e] = net.controllers[e].evaluate(zeta[e]);
        return p;
    }

  private:
    double dt_;
    double blowup_;
    double t_ = 0.0;
    Vec x_;
    std::vector<bool> present_;
    bool record_;
    Vec recorded_times_;
    std::vector<Vec> recorded_states_;
};

inline AssertionInstance make_instance(const SynthesisBundle& b, std::size_t j,
                                       const NetworkSystem& net, const Vec& conjecture,
                                       const AssertionConfig& cfg, ProfileBank& bank,
                                       bool exploration) {
    ConjecturedLimit lim = make_conjectured_limit(net, b.graphs_table[j], conjecture);
    if (cfg.method == AssertionConfig::Method::Profile) {
        try {
            auto profile = exploration ? bank.exploration(b, j, lim, net, cfg)
                                       : bank.stable(b, j, lim, net, cfg);
            return AssertionInstance(net, b.graphs_table[j], lim, std::move(profile), cfg);
        } catch (const SolverError&) {
            // rho_i = 0 somewhere: fall back to high-rate for this conjecture.
        }
    }
    return AssertionInstance(net, b.graphs_table[j], lim, cfg);
}

}  // namespace detail

struct RunSummary {
    Vec terminal_y;
    double terminal_error = 0.0;       // |y(end) - y_star|_inf
    double max_output_deviation = 0.0;  // max over samples of |y_i(t) - y_star_i|
    int final_graph_index = -1;
    bool ended_stable = false;
    FdiEventLog log;
    Vec recorded_times;                 // filled when RunConfig::record_trajectory
    std::vector<Vec> recorded_states;
};

// Alg.-1-style detection run: one assertion instance against y_star under the
// kernel-biased nominal protocol.
inline RunSummary detect_run(const SynthesisBundle& b, const SwitchingSignal& signal, const Vec& x0,
                             const RunConfig& cfg) {
    if (b.mode != SynthesisBundle::Mode::Detect)
        throw ValidationError("detect_run: bundle mode mismatch");
    RunSummary out;
    NetworkSystem net = b.network_for(0);
    AssertionConfig acfg = cfg.assertion;
    acfg.stream_dt = 1.0 / cfg.sample_rate;

    ProfileBank bank;
    AssertionInstance monitor =
        detail::make_instance(b, 0, net, b.sslimits_stable[0], acfg, bank, /*exploration=*/false);

    detail::ClosedLoopStepper stepper(b.graph, x0, cfg.dt, cfg.blowup_bound,
                                      cfg.record_trajectory);
    const double sample_dt = 1.0 / cfg.sample_rate;
    const auto n_samples = static_cast<std::size_t>(std::llround(cfg.span / sample_dt));
    auto fault_it = signal.events().begin();
    bool declared = false;
    for (std::size_t k = 0; k <= n_samples; ++k) {
        const double t_now = static_cast<double>(k) * sample_dt;
        while (fault_it != signal.events().end() && fault_it->time <= t_now) {
            stepper.advance_to(net, std::ceil(fault_it->time / cfg.dt - 1e-12) * cfg.dt);
            stepper.fault_edge(fault_it->edge);
            out.log.append(stepper.time(), "fault", {{"edge", fault_it->edge}});
            ++fault_it;
        }
        stepper.advance_to(net, t_now);
        SamplePoint p = stepper.sample(net, k);
        out.max_output_deviation = std::max(out.max_output_deviation, linf_dist(p.y, b.y_star));
        if (!declared) {
            monitor.feed(p);
            if (!monitor.running()) {
                declared = true;
                out.log.append(p.t, "fault_declared",
                               {{"certificate", monitor.verdict().certificate.kind}});
            }
        }
        if (k == n_samples) out.terminal_y = p.y;
    }
    out.terminal_error = linf_dist(out.terminal_y, b.y_star);
    out.final_graph_index = 0;
    out.ended_stable = !declared;
    out.recorded_times = stepper.recorded_times();
    out.recorded_states = stepper.recorded_states();
    return out;
}

// Adversarial game: edges removed before t = 0, exploratory identification,
// one broadcast, then the identified subgraph's synthesis protocol.
inline RunSummary adversary_play(const SynthesisBundle& b, const std::vector<int>& removed_edges,
                                 const Vec& x0, const RunConfig& cfg, ProfileBank* bank_opt = nullptr) {
    if (b.mode != SynthesisBundle::Mode::Adversary)
        throw ValidationError("adversary_play: bundle mode mismatch");
    if (removed_edges.size() > static_cast<std::size_t>(b.max_faults))
        throw ValidationError("adversary_play: more removals than r");
    RunSummary out;
    ProfileBank local_bank;
    ProfileBank& bank = bank_opt ? *bank_opt : local_bank;

    AssertionConfig acfg = cfg.assertion;
    acfg.stream_dt = 1.0 / cfg.sample_rate;

    NetworkSystem explore_net = b.exploration_network();
    const std::size_t n_entries = b.size();

    std::vector<AssertionInstance> instances;
    instances.reserve(n_entries);
    for (std::size_t j = 0; j < n_entries; ++j)
        instances.push_back(detail::make_instance(b, j, explore_net, b.sslimits_exploration[j],
                                                  acfg, bank, /*exploration=*/true));

    detail::ClosedLoopStepper stepper(b.graph, x0, cfg.dt, cfg.blowup_bound,
                                      cfg.record_trajectory);
    for (int e : removed_edges) stepper.fault_edge(e);
    out.log.append(0.0, "phase_change", {{"phase", "exploratory"}});

    const double sample_dt = 1.0 / cfg.sample_rate;
    const auto n_samples = static_cast<std::size_t>(std::llround(cfg.span / sample_dt));
    int identified = -1;
    std::optional<NetworkSystem> stable_net;
    for (std::size_t k = 0; k <= n_samples; ++k) {
        const double t_now = static_cast<double>(k) * sample_dt;
        stepper.advance_to(identified < 0 ? explore_net : *stable_net, t_now);
        {
            Vec y_now(b.graph.n_vertices());
            for (std::size_t i = 0; i < y_now.size(); ++i)
                y_now[i] = b.agents[i].h(stepper.state()[i]);
            out.max_output_deviation =
                std::max(out.max_output_deviation, linf_dist(y_now, b.y_star));
        }
        if (identified < 0) {
            SamplePoint p = stepper.sample(explore_net, k);
            std::size_t unfaulted = 0;
            std::size_t survivor = 0;
            parallel_for(instances.size(), [&](std::size_t j) { instances[j].feed(p); });
            for (std::size_t j = 0; j < instances.size(); ++j)
                if (instances[j].running()) {
                    ++unfaulted;
                    survivor = j;
                }
            if (unfaulted == 0)
                throw ProtocolError("adversary_play: all instances declared");
            if (unfaulted == 1) {
                identified = static_cast<int>(survivor);
                out.log.append(t_now, "broadcast",
                               {{"index", identified}, {"bits", b.broadcast_bits()}});
                out.log.append(t_now, "graph_identified", {{"index", identified}});
                stable_net = b.network_for(static_cast<std::size_t>(identified));
                out.log.append(t_now, "protocol_switch", {{"index", identified}});
            }
        }
        if (k == n_samples)
            out.terminal_y = stepper.sample(identified < 0 ? explore_net : *stable_net, k).y;
    }
    out.terminal_error = linf_dist(out.terminal_y, b.y_star);
    out.final_graph_index = identified;
    out.ended_stable = identified >= 0;
    out.recorded_times = stepper.recorded_times();
    out.recorded_states = stepper.recorded_states();
    return out;
}

// Alg.-6-style stable/exploratory state machine for fault isolation.
inline RunSummary isolate_run(const SynthesisBundle& b, const SwitchingSignal& signal, const Vec& x0,
                              const RunConfig& cfg, ProfileBank* bank_opt = nullptr) {
    if (b.mode != SynthesisBundle::Mode::Isolate)
        throw ValidationError("isolate_run: bundle mode mismatch");
    RunSummary out;
    // Beyond the isolable fault budget the run proceeds without a
    // correctness guarantee.
    if (signal.events().size() > static_cast<std::size_t>(b.max_faults))
        out.log.append(0.0, "warning", {{"message", "signal exceeds the isolable fault budget"}});

    ProfileBank local_bank;
    ProfileBank& bank = bank_opt ? *bank_opt : local_bank;
    AssertionConfig acfg = cfg.assertion;
    acfg.stream_dt = 1.0 / cfg.sample_rate;

    enum class Phase { Stable, Exploratory };
    Phase phase = Phase::Stable;
    std::size_t believed = 0;

    NetworkSystem active_net = b.network_for(0);
    std::optional<NetworkSystem> explore_net;  // created on first exploratory entry
    std::vector<AssertionInstance> instances;
    instances.push_back(
        detail::make_instance(b, 0, active_net, b.sslimits_stable[0], acfg, bank, false));
    int restarts = 0;

    detail::ClosedLoopStepper stepper(b.graph, x0, cfg.dt, cfg.blowup_bound,
                                      cfg.record_trajectory);
    const double sample_dt = 1.0 / cfg.sample_rate;
    const auto n_samples = static_cast<std::size_t>(std::llround(cfg.span / sample_dt));
    auto fault_it = signal.events().begin();

    auto enter_exploratory = [&](double t_now) {
        phase = Phase::Exploratory;
        if (!explore_net) explore_net = b.exploration_network();
        bank.prebuild_exploration(b, *explore_net, acfg);
        out.log.append(t_now, "protocol_switch", {{"protocol", "exploration"}});
        instances.clear();
        instances.reserve(b.size());
        for (std::size_t j = 0; j < b.size(); ++j)
            instances.push_back(detail::make_instance(b, j, *explore_net,
                                                      b.sslimits_exploration[j], acfg, bank, true));
    };

    for (std::size_t k = 0; k <= n_samples; ++k) {
        const double t_now = static_cast<double>(k) * sample_dt;
        while (fault_it != signal.events().end() && fault_it->time <= t_now) {
            stepper.advance_to(phase == Phase::Stable ? active_net : *explore_net,
                               std::ceil(fault_it->time / cfg.dt - 1e-12) * cfg.dt);
            stepper.fault_edge(fault_it->edge);
            out.log.append(stepper.time(), "fault", {{"edge", fault_it->edge}});
            ++fault_it;
        }
        stepper.advance_to(phase == Phase::Stable ? active_net : *explore_net, t_now);
        {
            Vec y_now(b.graph.n_vertices());
            for (std::size_t i = 0; i < y_now.size(); ++i)
                y_now[i] = b.agents[i].h(stepper.state()[i]);
            out.max_output_deviation =
                std::max(out.max_output_deviation, linf_dist(y_now, b.y_star));
        }

        if (phase == Phase::Stable) {
            SamplePoint p = stepper.sample(active_net, k);
            instances[0].feed(p);
            if (!instances[0].running()) {
                out.log.append(t_now, "fault_declared",
                               {{"believed", static_cast<int>(believed)},
                                {"certificate", instances[0].verdict().certificate.kind}});
                out.log.append(t_now, "phase_change", {{"phase", "exploratory"}});
                enter_exploratory(t_now);
            }
            if (k == n_samples) out.terminal_y = p.y;
        } else {
            SamplePoint p = stepper.sample(*explore_net, k);
            parallel_for(instances.size(), [&](std::size_t j) { instances[j].feed(p); });
            std::size_t unfaulted = 0, survivor = 0;
            for (std::size_t j = 0; j < instances.size(); ++j)
                if (instances[j].running()) {
                    ++unfaulted;
                    survivor = j;
                }
            if (unfaulted == 0) {
                if (++restarts > cfg.max_restarts)
                    throw ProtocolError("isolate_run: exploratory restarts exceeded the cap");
                out.log.append(t_now, "phase_change", {{"phase", "exploratory_restart"}});
                instances.clear();
                for (std::size_t j = 0; j < b.size(); ++j)
                    instances.push_back(detail::make_instance(
                        b, j, *explore_net, b.sslimits_exploration[j], acfg, bank, true));
            } else if (unfaulted == 1) {
                believed = survivor;
                out.log.append(t_now, "graph_identified", {{"index", static_cast<int>(believed)}});
                phase = Phase::Stable;
                active_net = b.network_for(believed);
                out.log.append(t_now, "protocol_switch", {{"index", static_cast<int>(believed)}});
                out.log.append(t_now, "phase_change", {{"phase", "stable"}});
                instances.clear();
                instances.push_back(detail::make_instance(b, believed, active_net,
                                                          b.sslimits_stable[believed], acfg, bank,
                                                          false));
            }
            if (k == n_samples) out.terminal_y = p.y;
        }
    }
    out.terminal_error = linf_dist(out.terminal_y, b.y_star);
    out.final_graph_index = static_cast<int>(believed);
    out.ended_stable = phase == Phase::Stable;
    out.recorded_times = stepper.recorded_times();
    out.recorded_states = stepper.recorded_states();
    return out;
}

// ---------------------------------------------------------------------------
// Bundle persistence
// ---------------------------------------------------------------------------

inline json agent_to_json(const AgentModel& a) {
    json j;
    switch (a.family()) {
        case AgentModel::Family::VehicleDrag: j = {{"type", "vehicle_drag"}, {"C", a.param()}}; break;
        case AgentModel::Family::LinearLeak: j = {{"type", "linear_leak"}, {"a", a.param()}}; break;
        case AgentModel::Family::Cubic: j = {{"type", "cubic"}, {"c", a.param()}}; break;
        case AgentModel::Family::CubeRootOut: j = {{"type", "cube_root_out"}}; break;
        case AgentModel::Family::ExpOut: j = {{"type", "exp_out"}}; break;
        case AgentModel::Family::Saturating: j = {{"type", "saturating"}}; break;
        case AgentModel::Family::CustomPoly:
            j = {{"type", "custom_poly"}, {"coeffs", a.coeffs()}};
            if (!a.identity_output()) j["output"] = "cube_root";
            break;
    }
    return j;
}

inline AgentModel agent_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "vehicle_drag") return AgentModel::vehicle_drag(j.at("C").get<double>());
    if (type == "linear_leak") return AgentModel::linear_leak(j.at("a").get<double>());
    if (type == "cubic") return AgentModel::cubic(j.value("c", 1.0));
    if (type == "cube_root_out") return AgentModel::cube_root_out();
    if (type == "exp_out") return AgentModel::exp_out();
    if (type == "saturating") return AgentModel::saturating();
    if (type == "custom_poly")
        return AgentModel::custom_poly(j.at("coeffs").get<Vec>(),
                                       j.value("output", "identity") == std::string("cube_root")
                                           ? AgentModel::Output::CubeRoot
                                           : AgentModel::Output::Identity);
    throw ValidationError("unknown agent type: " + type);
}

inline json controller_to_json(const ControllerModel& c) {
    json j = c.family() == ControllerModel::Family::Tanh
                 ? json{{"type", "tanh"}}
                 : json{{"type", "linear"}, {"gain", c.gain()}};
    if (c.zeta_star != 0.0) j["zeta_star"] = c.zeta_star;
    if (c.mu_star != 0.0) j["mu_star"] = c.mu_star;
    return j;
}

inline ControllerModel controller_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    ControllerModel c = type == "tanh"     ? ControllerModel::tanh_ctrl()
                        : type == "linear" ? ControllerModel::linear(j.at("gain").get<double>())
                                           : throw ValidationError("unknown controller type: " + type);
    c.zeta_star = j.value("zeta_star", 0.0);
    c.mu_star = j.value("mu_star", 0.0);
    return c;
}

inline json graph_to_json(const Graph& g) {
    json edges = json::array();
    for (auto [i, j] : g.edges()) edges.push_back(json::array({i, j}));
    return {{"n", g.n_vertices()}, {"edges", edges}};
}

inline Graph graph_from_json(const json& j) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    return Graph(j.at("n").get<std::size_t>(), edges);
}

inline json bundle_to_json(const SynthesisBundle& b) {
    json j;
    j["mode"] = b.mode == SynthesisBundle::Mode::Detect      ? "detect"
                : b.mode == SynthesisBundle::Mode::Adversary ? "adversary"
                                                             : "isolate";
    j["graph"] = graph_to_json(b.graph);
    j["agents"] = json::array();
    for (const auto& a : b.agents) j["agents"].push_back(agent_to_json(a));
    j["controllers"] = json::array();
    for (const auto& c : b.base_controllers) j["controllers"].push_back(controller_to_json(c));
    j["state_bounds"] = json::array({b.state_bounds.lo, b.state_bounds.hi});
    j["y_star"] = b.y_star;
    j["r"] = b.max_faults;
    j["graphs"] = json::array();
    for (const auto& g : b.graphs_table) j["graphs"].push_back(g.removed_edges());
    j["ip"] = json::array();
    for (const auto& ip : b.ip_table)
        j["ip"].push_back({{"zeta_star", ip.zeta_star},
                           {"mu_star", ip.mu_star},
                           {"feedforward", ip.feedforward},
                           {"bias", ip.bias},
                           {"disconnected", ip.disconnected}});
    j["exploration_bias"] = b.exploration_bias;
    j["sslimits_exploration"] = b.sslimits_exploration;
    j["sslimits_stable"] = b.sslimits_stable;
    j["seed"] = b.seed;
    j["min_separation"] = b.min_separation;
    j["connectivity"] = b.connectivity;
    j["scenario_hash"] = b.scenario_hash;
    return j;
}

inline SynthesisBundle bundle_from_json(const json& j) {
    SynthesisBundle b;
    const std::string mode = j.at("mode").get<std::string>();
    b.mode = mode == "detect"      ? SynthesisBundle::Mode::Detect
             : mode == "adversary" ? SynthesisBundle::Mode::Adversary
                                   : SynthesisBundle::Mode::Isolate;
    b.graph = graph_from_json(j.at("graph"));
    for (const auto& a : j.at("agents")) b.agents.push_back(agent_from_json(a));
    for (const auto& c : j.at("controllers")) b.base_controllers.push_back(controller_from_json(c));
    b.state_bounds = {j.at("state_bounds")[0].get<double>(), j.at("state_bounds")[1].get<double>()};
    b.y_star = j.at("y_star").get<Vec>();
    b.max_faults = j.at("r").get<int>();
    for (const auto& g : j.at("graphs"))
        b.graphs_table.push_back(SubgraphMask::remove_edges(b.graph, g.get<std::vector<int>>()));
    for (const auto& ip_j : j.at("ip")) {
        InteractionProtocol ip;
        ip.zeta_star = ip_j.at("zeta_star").get<Vec>();
        ip.mu_star = ip_j.at("mu_star").get<Vec>();
        ip.feedforward = ip_j.at("feedforward").get<Vec>();
        ip.bias = ip_j.at("bias").get<Vec>();
        ip.disconnected = ip_j.value("disconnected", false);
        b.ip_table.push_back(std::move(ip));
    }
    b.exploration_bias = j.at("exploration_bias").get<Vec>();
    b.sslimits_exploration = j.at("sslimits_exploration").get<std::vector<Vec>>();
    b.sslimits_stable = j.at("sslimits_stable").get<std::vector<Vec>>();
    b.seed = j.at("seed").get<std::uint64_t>();
    b.min_separation = j.at("min_separation").get<double>();
    b.connectivity = j.at("connectivity").get<int>();
    b.scenario_hash = j.value("scenario_hash", "");
    return b;
}

}  // namespace netfdi

#endif
