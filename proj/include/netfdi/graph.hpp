#ifndef NETFDI_GRAPH_HPP
#define NETFDI_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <deque>
#include <queue>
#include <set>
#include <utility>
#include <vector>

#include "netfdi/common.hpp"
#include "netfdi/linalg.hpp"

namespace netfdi {

// Oriented undirected graph. Edge order is fixed at construction and defines
// the edge indices used everywhere else (masks, bias vectors, controllers).
class Graph {
  public:
    Graph(std::size_t n_vertices, std::vector<std::pair<int, int>> edges)
        : n_(n_vertices), edges_(std::move(edges)) {
        std::set<std::pair<int, int>> seen;
        for (auto [i, j] : edges_) {
            if (i == j) throw ValidationError("graph: self-loop");
            if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n_ ||
                static_cast<std::size_t>(j) >= n_)
                throw ValidationError("graph: vertex index out of range");
            auto key = std::minmax(i, j);
            if (!seen.insert(key).second)
                throw ValidationError("graph: duplicate edge");
        }
    }

    std::size_t n_vertices() const { return n_; }
    std::size_t n_edges() const { return edges_.size(); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    std::pair<int, int> edge(std::size_t e) const { return edges_[e]; }

    int edge_index(int i, int j) const {
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            auto [a, b] = edges_[e];
            if ((a == i && b == j) || (a == j && b == i)) return static_cast<int>(e);
        }
        return -1;
    }

  private:
    std::size_t n_;
    std::vector<std::pair<int, int>> edges_;
};

// Boolean mask over the parent's edge list; the nonempty-subgraph invariant is
// enforced whenever the parent has edges at all.
class SubgraphMask {
  public:
    SubgraphMask(const Graph& parent, std::vector<bool> present)
        : parent_(&parent), present_(std::move(present)) {
        if (present_.size() != parent.n_edges())
            throw ValidationError("mask: wrong length");
        if (parent.n_edges() > 0 && n_present() == 0)
            throw ValidationError("mask: empty subgraph");
    }

    static SubgraphMask full(const Graph& parent) {
        return SubgraphMask(parent, std::vector<bool>(parent.n_edges(), true));
    }

    static SubgraphMask remove_edges(const Graph& parent, const std::vector<int>& removed) {
        std::vector<bool> p(parent.n_edges(), true);
        for (int e : removed) p[static_cast<std::size_t>(e)] = false;
        return SubgraphMask(parent, std::move(p));
    }

    const Graph& parent() const { return *parent_; }
    bool present(std::size_t e) const { return present_[e]; }
    const std::vector<bool>& bits() const { return present_; }

    std::size_t n_present() const {
        return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), true));
    }

    std::vector<int> present_edges() const {
        std::vector<int> out;
        for (std::size_t e = 0; e < present_.size(); ++e)
            if (present_[e]) out.push_back(static_cast<int>(e));
        return out;
    }

    std::vector<int> removed_edges() const {
        std::vector<int> out;
        for (std::size_t e = 0; e < present_.size(); ++e)
            if (!present_[e]) out.push_back(static_cast<int>(e));
        return out;
    }

    bool operator==(const SubgraphMask& o) const { return present_ == o.present_; }

  private:
    const Graph* parent_;
    std::vector<bool> present_;
};

// Node-rows x edge-columns incidence matrix, +1 at the tail and -1 at the head
// of each oriented edge. Integer-valued.
class IncidenceMatrix {
  public:
    explicit IncidenceMatrix(const Graph& g) : n_(g.n_vertices()), m_(g.n_edges()) {
        entries_.assign(n_ * m_, 0);
        for (std::size_t e = 0; e < m_; ++e) {
            auto [i, j] = g.edge(e);
            entries_[static_cast<std::size_t>(i) * m_ + e] = 1;
            entries_[static_cast<std::size_t>(j) * m_ + e] = -1;
        }
    }

    std::size_t rows() const { return n_; }
    std::size_t cols() const { return m_; }
    int operator()(std::size_t v, std::size_t e) const { return entries_[v * m_ + e]; }

    Mat dense() const {
        Mat out(n_, m_);
        for (std::size_t v = 0; v < n_; ++v)
            for (std::size_t e = 0; e < m_; ++e) out(v, e) = entries_[v * m_ + e];
        return out;
    }

    // y = E x over a masked edge set, integer-exact accumulation order.
    Vec apply(const Vec& edge_vals, const SubgraphMask* mask = nullptr) const {
        Vec y(n_, 0.0);
        for (std::size_t e = 0; e < m_; ++e) {
            if (mask && !mask->present(e)) continue;
            for (std::size_t v = 0; v < n_; ++v) {
                int s = entries_[v * m_ + e];
                if (s != 0) y[v] += s * edge_vals[e];
            }
        }
        return y;
    }

    // z = E^T x restricted to present edges; absent edges yield 0 entries.
    Vec apply_transpose(const Vec& node_vals, const SubgraphMask* mask = nullptr) const {
        Vec z(m_, 0.0);
        for (std::size_t e = 0; e < m_; ++e) {
            if (mask && !mask->present(e)) continue;
            double s = 0.0;
            for (std::size_t v = 0; v < n_; ++v) {
                int c = entries_[v * m_ + e];
                if (c != 0) s += c * node_vals[v];
            }
            z[e] = s;
        }
        return z;
    }

  private:
    std::size_t n_, m_;
    std::vector<int> entries_;
};

inline IncidenceMatrix incidence_matrix(const Graph& g) { return IncidenceMatrix(g); }

// |E_H| x m selection matrix whose rows are the identity rows of present
// edges, in parent edge order.
inline Mat projection(const SubgraphMask& h) {
    if (h.n_present() == 0) throw ValidationError("projection: empty mask");
    const auto present = h.present_edges();
    Mat p(present.size(), h.parent().n_edges());
    for (std::size_t r = 0; r < present.size(); ++r)
        p(r, static_cast<std::size_t>(present[r])) = 1.0;
    return p;
}

// Keeps present-edge entries, zeroes the rest (P_H^T P_H w, same length as w).
inline Vec mask_edge_vector(const SubgraphMask& h, const Vec& w) {
    Vec out(w.size(), 0.0);
    for (std::size_t e = 0; e < w.size(); ++e)
        if (h.present(e)) out[e] = w[e];
    return out;
}

namespace detail {

inline std::vector<std::vector<int>> adjacency(const Graph& g, const SubgraphMask* mask) {
    std::vector<std::vector<int>> adj(g.n_vertices());
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        if (mask && !mask->present(e)) continue;
        auto [i, j] = g.edge(e);
        adj[static_cast<std::size_t>(i)].push_back(j);
        adj[static_cast<std::size_t>(j)].push_back(i);
    }
    return adj;
}

}  // namespace detail

// Connected components over the masked edge set; isolated vertices form
// singleton components.
inline std::vector<std::vector<int>> connected_components(const Graph& g,
                                                          const SubgraphMask* mask = nullptr) {
    const auto adj = detail::adjacency(g, mask);
    std::vector<int> comp(g.n_vertices(), -1);
    std::vector<std::vector<int>> out;
    for (std::size_t s = 0; s < g.n_vertices(); ++s) {
        if (comp[s] >= 0) continue;
        int id = static_cast<int>(out.size());
        out.emplace_back();
        std::deque<int> q{static_cast<int>(s)};
        comp[s] = id;
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            out[static_cast<std::size_t>(id)].push_back(v);
            for (int w : adj[static_cast<std::size_t>(v)])
                if (comp[static_cast<std::size_t>(w)] < 0) {
                    comp[static_cast<std::size_t>(w)] = id;
                    q.push_back(w);
                }
        }
    }
    return out;
}

inline bool is_connected(const Graph& g, const SubgraphMask* mask = nullptr) {
    return connected_components(g, mask).size() <= 1;
}

// Fundamental-cycle basis of ker(E) w.r.t. a BFS spanning tree. Integer
// vectors; empty for trees. Requires a connected graph.
inline std::vector<std::vector<int>> cycle_space_basis(const Graph& g) {
    if (!is_connected(g)) throw ValidationError("cycle_space_basis: disconnected graph");
    const std::size_t n = g.n_vertices(), m = g.n_edges();

    // BFS tree: parent vertex and the tree edge (with its sign toward the root).
    std::vector<int> parent(n, -1), parent_edge(n, -1);
    std::vector<bool> in_tree(m, false), seen(n, false);
    std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, edge)
    for (std::size_t e = 0; e < m; ++e) {
        auto [i, j] = g.edge(e);
        adj[static_cast<std::size_t>(i)].push_back({j, static_cast<int>(e)});
        adj[static_cast<std::size_t>(j)].push_back({i, static_cast<int>(e)});
    }
    std::deque<int> q{0};
    seen[0] = true;
    while (!q.empty()) {
        int v = q.front();
        q.pop_front();
        for (auto [w, e] : adj[static_cast<std::size_t>(v)])
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = true;
                parent[static_cast<std::size_t>(w)] = v;
                parent_edge[static_cast<std::size_t>(w)] = e;
                in_tree[static_cast<std::size_t>(e)] = true;
                q.push_back(w);
            }
    }

    std::vector<int> depth(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        int d = 0, u = static_cast<int>(v);
        while (parent[static_cast<std::size_t>(u)] >= 0) {
            u = parent[static_cast<std::size_t>(u)];
            ++d;
        }
        depth[v] = d;
    }

    // Walks v toward the root, adding signed tree-edge contributions.
    auto walk_up = [&](int& v, std::vector<int>& vec, int dir) {
        int e = parent_edge[static_cast<std::size_t>(v)];
        auto [a, b] = g.edge(static_cast<std::size_t>(e));
        // Traversal direction v -> parent(v); +1 if it agrees with edge orientation.
        int sign = (a == v && b == parent[static_cast<std::size_t>(v)]) ? 1 : -1;
        vec[static_cast<std::size_t>(e)] += dir * sign;
        v = parent[static_cast<std::size_t>(v)];
    };

    std::vector<std::vector<int>> basis;
    for (std::size_t e = 0; e < m; ++e) {
        if (in_tree[e]) continue;
        auto [i, j] = g.edge(e);
        std::vector<int> vec(m, 0);
        vec[e] = 1;  // traverse the chord i -> j
        // Close the cycle along tree paths: j up to the common ancestor, i up with
        // opposite sign.
        int u = j, v = i;
        while (depth[static_cast<std::size_t>(u)] > depth[static_cast<std::size_t>(v)])
            walk_up(u, vec, 1);
        while (depth[static_cast<std::size_t>(v)] > depth[static_cast<std::size_t>(u)])
            walk_up(v, vec, -1);
        while (u != v) {
            walk_up(u, vec, 1);
            walk_up(v, vec, -1);
        }
        basis.push_back(std::move(vec));
    }
    return basis;
}

namespace detail {

// Unit-capacity max-flow (Dinic) on a small directed network.
class UnitFlowNetwork {
  public:
    explicit UnitFlowNetwork(int n) : head_(static_cast<std::size_t>(n), -1) {}

    void add_edge(int from, int to, int cap) {
        edges_.push_back({to, cap, head_[static_cast<std::size_t>(from)]});
        head_[static_cast<std::size_t>(from)] = static_cast<int>(edges_.size()) - 1;
        edges_.push_back({from, 0, head_[static_cast<std::size_t>(to)]});
        head_[static_cast<std::size_t>(to)] = static_cast<int>(edges_.size()) - 1;
    }

    int max_flow(int s, int t, int cap_limit) {
        int flow = 0;
        while (flow < cap_limit && bfs(s, t)) {
            iter_ = head_;
            while (flow < cap_limit) {
                int pushed = dfs(s, t, 1);
                if (pushed == 0) break;
                flow += pushed;
            }
        }
        return flow;
    }

  private:
    struct E {
        int to, cap, next;
    };

    bool bfs(int s, int t) {
        level_.assign(head_.size(), -1);
        std::deque<int> q{s};
        level_[static_cast<std::size_t>(s)] = 0;
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int e = head_[static_cast<std::size_t>(v)]; e >= 0;
                 e = edges_[static_cast<std::size_t>(e)].next) {
                const E& ed = edges_[static_cast<std::size_t>(e)];
                if (ed.cap > 0 && level_[static_cast<std::size_t>(ed.to)] < 0) {
                    level_[static_cast<std::size_t>(ed.to)] =
                        level_[static_cast<std::size_t>(v)] + 1;
                    q.push_back(ed.to);
                }
            }
        }
        return level_[static_cast<std::size_t>(t)] >= 0;
    }

    int dfs(int v, int t, int f) {
        if (v == t) return f;
        for (int& e = iter_[static_cast<std::size_t>(v)]; e >= 0;
             e = edges_[static_cast<std::size_t>(e)].next) {
            E& ed = edges_[static_cast<std::size_t>(e)];
            if (ed.cap > 0 &&
                level_[static_cast<std::size_t>(ed.to)] == level_[static_cast<std::size_t>(v)] + 1) {
                int pushed = dfs(ed.to, t, std::min(f, ed.cap));
                if (pushed > 0) {
                    ed.cap -= pushed;
                    edges_[static_cast<std::size_t>(e ^ 1)].cap += pushed;
                    return pushed;
                }
            }
        }
        return 0;
    }

    std::vector<E> edges_;
    std::vector<int> head_, iter_, level_;
};

// Max number of internally vertex-disjoint s-t paths via vertex splitting.
inline int disjoint_paths(const Graph& g, int s, int t, int cap_limit) {
    const int n = static_cast<int>(g.n_vertices());
    // v_in = 2v, v_out = 2v + 1.
    UnitFlowNetwork net(2 * n);
    const int inf = n + 1;
    for (int v = 0; v < n; ++v)
        net.add_edge(2 * v, 2 * v + 1, (v == s || v == t) ? inf : 1);
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        auto [i, j] = g.edge(e);
        net.add_edge(2 * i + 1, 2 * j, inf);
        net.add_edge(2 * j + 1, 2 * i, inf);
    }
    return net.max_flow(2 * s + 1, 2 * t, cap_limit);
}

}  // namespace detail

// Largest k such that the graph is k-connected (Menger): min over non-adjacent
// pairs of the vertex-split max-flow, capped by the minimum degree. Complete
// graphs give n-1; disconnected graphs give 0.
inline int vertex_connectivity(const Graph& g) {
    const int n = static_cast<int>(g.n_vertices());
    if (n < 2) throw ValidationError("vertex_connectivity: need n >= 2");
    if (!is_connected(g)) return 0;

    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n),
                                       std::vector<bool>(static_cast<std::size_t>(n), false));
    for (auto [i, j] : g.edges()) {
        ++degree[static_cast<std::size_t>(i)];
        ++degree[static_cast<std::size_t>(j)];
        adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
        adj[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = true;
    }
    int best = *std::min_element(degree.begin(), degree.end());

    bool has_nonadjacent = false;
    for (int s = 0; s < n; ++s)
        for (int t = s + 1; t < n; ++t) {
            if (adj[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)]) continue;
            has_nonadjacent = true;
            best = std::min(best, detail::disjoint_paths(g, s, t, best));
            if (best == 0) return 0;
        }
    if (!has_nonadjacent) return n - 1;  // complete graph
    return best;
}

// All masks with at most r removed edges: r ascending, then lexicographic on
// the removed-index tuples. Index 0 is the full graph.
inline std::vector<SubgraphMask> enumerate_subgraphs(const Graph& g, std::size_t r) {
    const std::size_t m = g.n_edges();
    if (r >= m) throw ValidationError("enumerate_subgraphs: r must be < m");
    std::vector<SubgraphMask> out;
    out.push_back(SubgraphMask::full(g));
    std::vector<int> combo;
    for (std::size_t level = 1; level <= r; ++level) {
        combo.assign(level, 0);
        for (std::size_t i = 0; i < level; ++i) combo[i] = static_cast<int>(i);
        while (true) {
            out.push_back(SubgraphMask::remove_edges(g, combo));
            // next lexicographic combination
            int i = static_cast<int>(level) - 1;
            while (i >= 0 &&
                   combo[static_cast<std::size_t>(i)] ==
                       static_cast<int>(m - level + static_cast<std::size_t>(i)))
                --i;
            if (i < 0) break;
            ++combo[static_cast<std::size_t>(i)];
            for (std::size_t j = static_cast<std::size_t>(i) + 1; j < level; ++j)
                combo[j] = combo[j - 1] + 1;
        }
    }
    return out;
}

inline std::size_t subgraph_count(std::size_t m, std::size_t r) {
    std::size_t total = 0, binom = 1;
    for (std::size_t level = 0; level <= r; ++level) {
        total += binom;
        binom = binom * (m - level) / (level + 1);
    }
    return total;
}

}  // namespace netfdi

#endif
