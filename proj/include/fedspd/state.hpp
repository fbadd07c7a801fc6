#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedspd/errors.hpp"
#include "fedspd/model.hpp"

namespace fedspd {

// N×S array of per-client cluster-center estimates.
struct cluster_bank {
    int n_clients = 0;
    int n_clusters = 0;
    int param_dim = 0;
    int round = 0;
    std::vector<param_vector> centers;  // [i * n_clusters + s]

    param_vector& center(int i, int s) { return centers[i * n_clusters + s]; }
    const param_vector& center(int i, int s) const { return centers[i * n_clusters + s]; }

    static cluster_bank zeros(int n, int s, int dim) {
        cluster_bank b;
        b.n_clients = n;
        b.n_clusters = s;
        b.param_dim = dim;
        b.centers.assign(static_cast<std::size_t>(n) * s, param_vector(dim, 0.0));
        return b;
    }

    // column s as an N×X row matrix (for weight-matrix application)
    std::vector<std::vector<double>> column(int s) const {
        std::vector<std::vector<double>> out(n_clients);
        for (int i = 0; i < n_clients; ++i) out[i] = center(i, s);
        return out;
    }
};

// Row-stochastic N×S matrix of per-client cluster fractions.
struct mixture_matrix {
    int n_clients = 0;
    int n_clusters = 0;
    std::vector<double> coeff;  // [i * n_clusters + s]

    double& at(int i, int s) { return coeff[i * n_clusters + s]; }
    double at(int i, int s) const { return coeff[i * n_clusters + s]; }

    std::span<const double> row(int i) const {
        return {coeff.data() + static_cast<std::size_t>(i) * n_clusters,
                static_cast<std::size_t>(n_clusters)};
    }

    static mixture_matrix uniform(int n, int s) {
        mixture_matrix m;
        m.n_clients = n;
        m.n_clusters = s;
        m.coeff.assign(static_cast<std::size_t>(n) * s, 1.0 / s);
        return m;
    }
};

struct round_selections {
    std::vector<int> selected;  // one cluster index per client
};

struct personalized_models {
    std::vector<param_vector> models;
};

struct comm_stats {
    long messages_sent = 0;
    long payload_params_sent = 0;
};

// Shared per-algorithm training state: FedSPD uses all of it; single-model
// baselines run with n_clusters == 1 and a degenerate mixture.
struct sim_state {
    cluster_bank bank;
    mixture_matrix mixture;
    int round = 0;
};

// mean over referenced rows, fixed accumulation order
inline param_vector mean_of(const std::vector<const param_vector*>& rows) {
    if (rows.empty()) throw invalid_parameter("mean_of: empty row set");
    param_vector out(rows[0]->size(), 0.0);
    for (const param_vector* v : rows)
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += (*v)[k];
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (double& x : out) x *= inv;
    return out;
}

}  // namespace fedspd
