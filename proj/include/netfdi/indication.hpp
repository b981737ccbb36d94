#ifndef NETFDI_INDICATION_HPP
#define NETFDI_INDICATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "netfdi/common.hpp"
#include "netfdi/graph.hpp"
#include "netfdi/rng.hpp"
#include "netfdi/steady_state.hpp"

namespace netfdi {

struct IndicationVector {
    enum class Kind { General, KernelConstrained };

    Vec w;
    Kind kind = Kind::General;
    std::uint64_t seed = 0;
    double min_separation = 0.0;  // filled by validation
    bool validated = false;
};

namespace detail {

inline void scale_to_unit_inf(Vec& w, double magnitude) {
    double norm = linf_norm(w);
    if (norm == 0.0) return;
    for (double& x : w) x *= magnitude / norm;
}

}  // namespace detail

// I.i.d. standard normal entries scaled to the configured sup-norm magnitude.
inline IndicationVector sample_general(std::size_t m, std::uint64_t seed, double magnitude = 1.0) {
    if (m < 1) throw ValidationError("sample_general: need m >= 1");
    Rng rng(seed);
    IndicationVector iv;
    iv.w = rng.gaussian_vec(m);
    detail::scale_to_unit_inf(iv.w, magnitude);
    iv.kind = IndicationVector::Kind::General;
    iv.seed = seed;
    return iv;
}

// Gaussian combination of the fundamental-cycle basis: E w = 0 by
// construction. Trees have no cycle space and are rejected.
inline IndicationVector sample_kernel(const Graph& g, std::uint64_t seed, double magnitude = 1.0) {
    const auto basis = cycle_space_basis(g);
    if (basis.empty())
        throw ValidationError("sample_kernel: no kernel indication possible on a tree");
    Rng rng(seed);
    Vec alpha = rng.gaussian_vec(basis.size());
    IndicationVector iv;
    iv.w.assign(g.n_edges(), 0.0);
    for (std::size_t k = 0; k < basis.size(); ++k)
        for (std::size_t e = 0; e < g.n_edges(); ++e)
            iv.w[e] += alpha[k] * static_cast<double>(basis[k][e]);
    detail::scale_to_unit_inf(iv.w, magnitude);
    iv.kind = IndicationVector::Kind::KernelConstrained;
    iv.seed = seed;
    return iv;
}

struct IndicationValidation {
    bool pass = false;
    double min_separation = 0.0;
    double nominal_shift = 0.0;  // kernel-constrained: |y_full(w) - y_full(0)|_inf
    std::string reason;
};

// Runs the steady-state table under bias w (masked per subgraph) and checks
// the pairwise output separation; kernel-constrained vectors must also leave
// the full-graph steady state where the unbiased one is.
inline IndicationValidation validate_indication(const NetworkSystem& net,
                                                const std::vector<SubgraphMask>& subgraphs,
                                                const IndicationVector& iv,
                                                double min_sep = 1e-4) {
    NetworkSystem biased = net;
    biased.bias = iv.w;

    IndicationValidation res;
    SteadyStateTable table = steady_state_table(biased, subgraphs);
    res.min_separation = table.min_pairwise_distance;
    if (subgraphs.size() >= 2 && table.min_pairwise_distance < min_sep) {
        res.reason = "separation below threshold";
        return res;
    }
    if (iv.kind == IndicationVector::Kind::KernelConstrained) {
        SteadyStateSolution nominal = solve_steady_state(net, SubgraphMask::full(net.graph));
        // Full graph is index 0 in enumerate_subgraphs order.
        res.nominal_shift = linf_dist(table.outputs.front(), nominal.y);
        if (res.nominal_shift > 1e-8) {
            res.reason = "kernel bias moved the nominal steady state";
            return res;
        }
    }
    res.pass = true;
    return res;
}

// Validate-and-resample loop guarding against numerically near-degenerate
// draws; each retry advances the seed. Throws after max_attempts failures.
template <typename Sampler>
IndicationVector sample_validated(const Sampler& sampler, const NetworkSystem& net,
                                  const std::vector<SubgraphMask>& subgraphs,
                                  std::uint64_t seed, double min_sep = 1e-4,
                                  int max_attempts = 10) {
    std::string last;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        IndicationVector iv = sampler(seed + static_cast<std::uint64_t>(attempt));
        IndicationValidation check = validate_indication(net, subgraphs, iv, min_sep);
        if (check.pass) {
            iv.min_separation = check.min_separation;
            iv.validated = true;
            return iv;
        }
        last = check.reason;
    }
    throw SynthesisError("indication sampling failed after " + std::to_string(max_attempts) +
                         " attempts: " + last);
}

}  // namespace netfdi

#endif
