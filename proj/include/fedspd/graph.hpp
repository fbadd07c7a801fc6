#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedspd/errors.hpp"
#include "fedspd/rng.hpp"

namespace fedspd {

// Undirected connected communication graph over clients 0..n-1.
// Self-inclusion lives in the augmented adjacency only, never in `edges`.
struct topology {
    int n_clients = 0;
    std::vector<std::pair<int, int>> edges;       // i < j, sorted
    std::vector<std::vector<int>> neighbors;      // open neighborhoods, sorted

    int degree(int i) const { return static_cast<int>(neighbors[i].size()); }

    double mean_degree() const {
        return n_clients == 0 ? 0.0 : 2.0 * static_cast<double>(edges.size()) / n_clients;
    }

    bool has_edge(int i, int j) const {
        return std::binary_search(neighbors[i].begin(), neighbors[i].end(), j);
    }

    // N[i] = {i} ∪ neighbors(i), ascending
    std::vector<int> closed_neighborhood(int i) const {
        std::vector<int> out;
        out.reserve(neighbors[i].size() + 1);
        bool placed = false;
        for (int j : neighbors[i]) {
            if (!placed && i < j) {
                out.push_back(i);
                placed = true;
            }
            out.push_back(j);
        }
        if (!placed) out.push_back(i);
        return out;
    }

    // N×N binary matrix, diagonal all ones
    std::vector<std::vector<std::uint8_t>> augmented_adjacency() const {
        std::vector<std::vector<std::uint8_t>> a(
            n_clients, std::vector<std::uint8_t>(n_clients, 0));
        for (int i = 0; i < n_clients; ++i) a[i][i] = 1;
        for (auto [i, j] : edges) {
            a[i][j] = 1;
            a[j][i] = 1;
        }
        return a;
    }
};

inline topology make_topology(int n, std::vector<std::pair<int, int>> edge_list) {
    topology t;
    t.n_clients = n;
    for (auto& [i, j] : edge_list) {
        if (i == j) throw invalid_parameter("topology: self-loop in edge list");
        if (i < 0 || j < 0 || i >= n || j >= n)
            throw invalid_parameter("topology: edge endpoint out of range");
        if (i > j) std::swap(i, j);
    }
    std::sort(edge_list.begin(), edge_list.end());
    edge_list.erase(std::unique(edge_list.begin(), edge_list.end()), edge_list.end());
    t.edges = std::move(edge_list);
    t.neighbors.assign(n, {});
    for (auto [i, j] : t.edges) {
        t.neighbors[i].push_back(j);
        t.neighbors[j].push_back(i);
    }
    for (auto& nb : t.neighbors) std::sort(nb.begin(), nb.end());
    return t;
}

inline bool is_connected(const topology& t) {
    if (t.n_clients == 0) return false;
    std::vector<char> seen(t.n_clients, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : t.neighbors[u])
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                q.push(v);
            }
    }
    return count == t.n_clients;
}

namespace detail {

constexpr int kConnectivityRetries = 100;

inline void check_er_params(int n, double avg_degree) {
    if (n < 2) throw invalid_parameter("graph: n must be >= 2");
    if (avg_degree <= 0.0) throw invalid_parameter("graph: avg_degree must be positive");
    const double p = avg_degree / (n - 1);
    // p == 1 collapses to the complete graph; only meaningful at n == 2,
    // where the single edge is the unique connected topology.
    if (p > 1.0 || (p == 1.0 && n > 2))
        throw invalid_parameter("graph: avg_degree too large for n");
}

// mean area of a radius-r disc with center uniform in the unit square
inline double clipped_disc_area(double r) {
    if (r >= 1.0) {
        // closed form no longer valid; saturate toward full coverage
        return std::min(1.0, 3.141592653589793 * r * r - (8.0 / 3.0) * r * r * r +
                                 0.5 * r * r * r * r);
    }
    return 3.141592653589793 * r * r - (8.0 / 3.0) * r * r * r + 0.5 * r * r * r * r;
}

inline double rgg_radius_for_degree(int n, double avg_degree) {
    const double target = avg_degree / (n - 1);
    double lo = 0.0, hi = std::sqrt(2.0);
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (clipped_disc_area(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

inline topology generate_er(int n, double avg_degree, std::uint64_t seed) {
    detail::check_er_params(n, avg_degree);
    const double p = avg_degree / (n - 1);
    for (int attempt = 0; attempt < detail::kConnectivityRetries; ++attempt) {
        rng_stream rng(derive_seed(seed, "graph_er", static_cast<std::uint64_t>(attempt)));
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.bernoulli(p)) edges.emplace_back(i, j);
        topology t = make_topology(n, std::move(edges));
        if (is_connected(t)) return t;
    }
    throw generation_failure("generate_er: no connected sample within retry budget");
}

// Preferential attachment; m isolated seed nodes, each later node attaches
// to m distinct existing nodes with probability proportional to degree.
// Edge count is exactly m(n-m).
inline topology generate_ba(int n, int attach_m, std::uint64_t seed) {
    if (n < 2) throw invalid_parameter("graph: n must be >= 2");
    if (attach_m < 1 || attach_m >= n)
        throw invalid_parameter("generate_ba: need 1 <= attach_m < n");
    rng_stream rng(derive_seed(seed, "graph_ba"));
    std::vector<std::pair<int, int>> edges;
    std::vector<int> repeated;  // node id appears once per incident edge
    std::vector<int> targets(attach_m);
    for (int i = 0; i < attach_m; ++i) targets[i] = i;
    for (int v = attach_m; v < n; ++v) {
        for (int u : targets) {
            edges.emplace_back(u, v);
            repeated.push_back(u);
            repeated.push_back(v);
        }
        if (v + 1 < n) {
            std::set<int> picked;
            while (static_cast<int>(picked.size()) < attach_m)
                picked.insert(repeated[rng.uniform_index(repeated.size())]);
            targets.assign(picked.begin(), picked.end());
        }
    }
    topology t = make_topology(n, std::move(edges));
    // connected by construction: node attach_m links all seed nodes
    return t;
}

inline topology generate_rgg(int n, double avg_degree, std::uint64_t seed) {
    detail::check_er_params(n, avg_degree);
    const double r = detail::rgg_radius_for_degree(n, avg_degree);
    std::vector<std::pair<double, double>> pos(n);
    topology t;
    for (int attempt = 0; attempt < detail::kConnectivityRetries; ++attempt) {
        rng_stream rng(derive_seed(seed, "graph_rgg", static_cast<std::uint64_t>(attempt)));
        for (auto& p : pos) {
            p.first = rng.uniform();
            p.second = rng.uniform();
        }
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double dx = pos[i].first - pos[j].first;
                double dy = pos[i].second - pos[j].second;
                if (dx * dx + dy * dy <= r * r) edges.emplace_back(i, j);
            }
        t = make_topology(n, std::move(edges));
        if (is_connected(t)) return t;
    }
    // repair: bridge components with the geometrically shortest cross edge
    while (!is_connected(t)) {
        std::vector<int> comp(n, -1);
        int n_comp = 0;
        for (int s = 0; s < n; ++s) {
            if (comp[s] != -1) continue;
            std::queue<int> q;
            q.push(s);
            comp[s] = n_comp;
            while (!q.empty()) {
                int u = q.front();
                q.pop();
                for (int v : t.neighbors[u])
                    if (comp[v] == -1) {
                        comp[v] = n_comp;
                        q.push(v);
                    }
            }
            ++n_comp;
        }
        double best = std::numeric_limits<double>::infinity();
        std::pair<int, int> best_edge{-1, -1};
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                if (comp[i] == comp[j]) continue;
                double dx = pos[i].first - pos[j].first;
                double dy = pos[i].second - pos[j].second;
                double d2 = dx * dx + dy * dy;
                if (d2 < best) {
                    best = d2;
                    best_edge = {i, j};
                }
            }
        auto edges = t.edges;
        edges.push_back(best_edge);
        t = make_topology(n, std::move(edges));
    }
    return t;
}

// Row-stochastic per-cluster averaging matrix.
struct weight_matrix {
    std::vector<std::vector<double>> entries;  // N×N
    int cluster_index = 0;
    int round = 0;

    int size() const { return static_cast<int>(entries.size()); }

    // W · C where C is N×X (rows = client parameter vectors)
    std::vector<std::vector<double>> apply(
        const std::vector<std::vector<double>>& rows) const {
        const int n = size();
        const std::size_t x = rows.empty() ? 0 : rows[0].size();
        std::vector<std::vector<double>> out(n, std::vector<double>(x, 0.0));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double w = entries[i][j];
                if (w == 0.0) continue;
                for (std::size_t k = 0; k < x; ++k) out[i][k] += w * rows[j][k];
            }
        return out;
    }
};

// Row i averages uniformly over {j in N[i] : selections[j] == cluster};
// identity row when that set is empty (center carried over unchanged).
inline weight_matrix build_weight_matrix(const topology& t,
                                         const std::vector<int>& selections,
                                         int cluster, int n_clusters) {
    const int n = t.n_clients;
    if (static_cast<int>(selections.size()) != n)
        throw invalid_parameter("build_weight_matrix: one selection per client required");
    for (int s : selections)
        if (s < 0 || s >= n_clusters)
            throw invalid_parameter("build_weight_matrix: selection index out of range");
    if (cluster < 0 || cluster >= n_clusters)
        throw invalid_parameter("build_weight_matrix: cluster index out of range");

    weight_matrix w;
    w.cluster_index = cluster;
    w.entries.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        std::vector<int> members;
        for (int j : t.closed_neighborhood(i))
            if (selections[j] == cluster) members.push_back(j);
        if (members.empty()) {
            w.entries[i][i] = 1.0;
        } else {
            const double v = 1.0 / static_cast<double>(members.size());
            for (int j : members) w.entries[i][j] = v;
        }
    }
    return w;
}

// Metropolis-Hastings weights: symmetric and doubly stochastic, the
// average-preserving fixture for consensus experiments.
inline weight_matrix build_metropolis_matrix(const topology& t) {
    if (!is_connected(t)) throw invalid_parameter("build_metropolis_matrix: graph not connected");
    const int n = t.n_clients;
    weight_matrix w;
    w.entries.assign(n, std::vector<double>(n, 0.0));
    for (auto [i, j] : t.edges) {
        const double v = 1.0 / (1.0 + std::max(t.degree(i), t.degree(j)));
        w.entries[i][j] = v;
        w.entries[j][i] = v;
    }
    for (int i = 0; i < n; ++i) {
        double off = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) off += w.entries[i][j];
        w.entries[i][i] = 1.0 - off;
    }
    return w;
}

// --- edge-list text format: header "n=<N>", then one "i j" pair per line ---

inline void save_edge_list(const topology& t, std::ostream& os) {
    os << "n=" << t.n_clients << "\n";
    for (auto [i, j] : t.edges) os << i << " " << j << "\n";
}

inline topology load_edge_list(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("n=", 0) != 0)
        throw invalid_parameter("load_edge_list: missing n=<N> header");
    const int n = std::stoi(header.substr(2));
    std::vector<std::pair<int, int>> edges;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int i, j;
        if (!(ls >> i >> j)) throw invalid_parameter("load_edge_list: bad edge line");
        edges.emplace_back(i, j);
    }
    return make_topology(n, std::move(edges));
}

}  // namespace fedspd
