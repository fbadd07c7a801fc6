#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fedspd/data.hpp"
#include "fedspd/errors.hpp"
#include "fedspd/graph.hpp"
#include "fedspd/metrics.hpp"
#include "fedspd/model.hpp"
#include "fedspd/parallel.hpp"
#include "fedspd/protocol.hpp"
#include "fedspd/state.hpp"

namespace fedspd {

enum class baseline_kind { dfl_fedavg, dfl_ifca, dfl_fedem_style, local_only, cfl_fedavg };

inline std::string to_string(baseline_kind k) {
    switch (k) {
        case baseline_kind::dfl_fedavg: return "dfl-fedavg";
        case baseline_kind::dfl_ifca: return "dfl-ifca";
        case baseline_kind::dfl_fedem_style: return "dfl-fedem-style";
        case baseline_kind::local_only: return "local-only";
        case baseline_kind::cfl_fedavg: return "cfl-fedavg";
    }
    return "?";
}

// Single-model baselines run as an S=1 bank with a degenerate mixture; the
// clustered ones share FedSPD's bank shape so metrics stay comparable.
inline sim_state init_baseline_state(baseline_kind kind, const federation& fed,
                                     const objective& obj, const protocol_options& opts) {
    protocol_options local = opts;
    if (kind == baseline_kind::dfl_fedavg || kind == baseline_kind::local_only ||
        kind == baseline_kind::cfl_fedavg)
        local.n_clusters = 1;
    sim_state st;
    st.bank = init_bank(fed.n_clients(), obj, local);
    st.mixture = mixture_matrix::uniform(fed.n_clients(), local.n_clusters);
    st.round = 0;
    return st;
}

namespace detail {

inline void train_all_data(cluster_bank& bank, const federation& fed, int cluster,
                           int round, const objective& obj, const protocol_options& opts) {
    const int steps = steps_for_round(opts, round);
    const double lr = lr_for_round(opts, round);
    parallel_for(fed.n_clients(), opts.threads, [&](int i) {
        const point_view data = view_all(fed.clients[i]);
        if (data.empty()) return;
        rng_stream rng(derive_seed(opts.seed, "sgd", static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(round),
                                   static_cast<std::uint64_t>(cluster)));
        sgd_steps(obj, bank.center(i, cluster), data, steps, lr, opts.batch_size, rng, i);
    });
}

}  // namespace detail

// Decentralized FedAvg: local SGD on all local data, then closed-neighborhood
// averaging of the single shared model.
inline round_metrics run_dfl_fedavg_round(sim_state& state, const topology& topo,
                                          const federation& train, const objective& obj,
                                          const protocol_options& opts,
                                          const federation* test = nullptr) {
    const int round = state.round + 1;
    detail::train_all_data(state.bank, train, 0, round, obj, opts);
    round_selections sel;
    sel.selected.assign(train.n_clients(), 0);
    const comm_stats comm = exchange_and_update(state.bank, topo, sel, false, opts.threads);
    state.round = round;
    state.bank.round = round;
    return compute_round_metrics(state, train, test, obj, comm, round);
}

// Hard-clustered IFCA: the whole client joins the cluster with the lowest
// total local loss, trains that center on all its data, then averages per
// cluster exactly like FedSPD's exchange.
inline round_metrics run_dfl_ifca_round(sim_state& state, const topology& topo,
                                        const federation& train, const objective& obj,
                                        const protocol_options& opts,
                                        const federation* test = nullptr) {
    const int round = state.round + 1;
    const int s_count = state.bank.n_clusters;
    round_selections sel;
    sel.selected.assign(train.n_clients(), 0);
    parallel_for(train.n_clients(), opts.threads, [&](int i) {
        int best = 0;
        double best_total = 0.0;
        for (int s = 0; s < s_count; ++s) {
            double total = 0.0;
            for (const auto& d : train.clients[i].points)
                total += obj.loss(state.bank.center(i, s), d);
            if (s == 0 || total < best_total) {
                best_total = total;
                best = s;
            }
        }
        sel.selected[i] = best;
    });

    const int steps = steps_for_round(opts, round);
    const double lr = lr_for_round(opts, round);
    parallel_for(train.n_clients(), opts.threads, [&](int i) {
        const point_view data = view_all(train.clients[i]);
        if (data.empty()) return;
        const int s = sel.selected[i];
        rng_stream rng(derive_seed(opts.seed, "sgd", static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(round),
                                   static_cast<std::uint64_t>(s)));
        sgd_steps(obj, state.bank.center(i, s), data, steps, lr, opts.batch_size, rng, i);
    });

    const comm_stats comm = exchange_and_update(state.bank, topo, sel, false, opts.threads);
    // one-hot mixture mirrors the hard assignment
    state.mixture = mixture_matrix::uniform(train.n_clients(), s_count);
    for (int i = 0; i < train.n_clients(); ++i)
        for (int s = 0; s < s_count; ++s)
            state.mixture.at(i, s) = s == sel.selected[i] ? 1.0 : 0.0;
    state.round = round;
    state.bank.round = round;
    return compute_round_metrics(state, train, test, obj, comm, round);
}

// FedEM-style stand-in: every client trains ALL S centers each round with
// per-point responsibilities softmax(-loss), exchanges all S centers, and
// averages each cluster over the full closed neighborhood. Payload is S× per
// message by construction.
inline round_metrics run_dfl_fedem_style_round(sim_state& state, const topology& topo,
                                               const federation& train, const objective& obj,
                                               const protocol_options& opts,
                                               const federation* test = nullptr) {
    const int round = state.round + 1;
    const int s_count = state.bank.n_clusters;
    const int n = train.n_clients();

    // responsibilities from the current centers
    std::vector<std::vector<std::vector<double>>> resp(n);
    parallel_for(n, opts.threads, [&](int i) {
        const auto& pts = train.clients[i].points;
        resp[i].assign(pts.size(), std::vector<double>(s_count, 0.0));
        for (std::size_t k = 0; k < pts.size(); ++k) {
            double m = -std::numeric_limits<double>::infinity();
            std::vector<double> neg(s_count);
            for (int s = 0; s < s_count; ++s) {
                neg[s] = -obj.loss(state.bank.center(i, s), pts[k]);
                m = std::max(m, neg[s]);
            }
            double sum = 0.0;
            for (int s = 0; s < s_count; ++s) {
                resp[i][k][s] = std::exp(neg[s] - m);
                sum += resp[i][k][s];
            }
            for (int s = 0; s < s_count; ++s) resp[i][k][s] /= sum;
        }
    });

    const int steps = steps_for_round(opts, round);
    const double lr = lr_for_round(opts, round);
    parallel_for(n, opts.threads, [&](int i) {
        const point_view data = view_all(train.clients[i]);
        if (data.empty()) return;
        std::vector<std::size_t> index(data.size());
        for (std::size_t k = 0; k < data.size(); ++k) index[k] = k;
        for (int s = 0; s < s_count; ++s) {
            rng_stream rng(derive_seed(opts.seed, "sgd", static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(round),
                                       static_cast<std::uint64_t>(s)));
            auto weight_of = [&](std::size_t k) { return resp[i][k][s]; };
            param_vector& params = state.bank.center(i, s);
            std::vector<std::size_t> batch;
            for (int t = 0; t < steps; ++t) {
                const std::vector<std::size_t>* use = &index;
                if (opts.batch_size > 0 && opts.batch_size < static_cast<int>(data.size())) {
                    batch.clear();
                    for (int b = 0; b < opts.batch_size; ++b)
                        batch.push_back(rng.uniform_index(data.size()));
                    use = &batch;
                }
                param_vector g(obj.param_dim(), 0.0);
                double wsum = 0.0;
                for (std::size_t k : *use) {
                    obj.accumulate_gradient(params, *data[k], g, weight_of(k));
                    wsum += weight_of(k);
                }
                if (wsum <= 1e-12) continue;  // no responsibility mass in this batch
                const double inv = 1.0 / wsum;
                for (double& x : g) x *= inv;
                for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * g[k];
                if (!all_finite(params))
                    throw divergence_error("fedem: non-finite parameters", t, i);
            }
        }
    });

    // exchange all S centers; every cluster averages over the full closed
    // neighborhood
    const cluster_bank snapshot = state.bank;
    comm_stats comm;
    for (int i = 0; i < n; ++i) {
        comm.messages_sent += topo.degree(i);
        comm.payload_params_sent +=
            static_cast<long>(topo.degree(i)) * s_count * state.bank.param_dim;
    }
    parallel_for(n, opts.threads, [&](int i) {
        for (int s = 0; s < s_count; ++s) {
            std::vector<const param_vector*> rows;
            for (int j : topo.closed_neighborhood(i)) rows.push_back(&snapshot.center(j, s));
            state.bank.center(i, s) = mean_of(rows);
        }
    });

    // mixture = mean responsibility, used for the personalized evaluation model
    for (int i = 0; i < n; ++i) {
        const auto& pts = train.clients[i].points;
        for (int s = 0; s < s_count; ++s) {
            double u = 0.0;
            for (std::size_t k = 0; k < pts.size(); ++k) u += resp[i][k][s];
            state.mixture.at(i, s) = pts.empty() ? (s == 0 ? 1.0 : 0.0)
                                                 : u / static_cast<double>(pts.size());
        }
    }
    state.round = round;
    state.bank.round = round;
    return compute_round_metrics(state, train, test, obj, comm, round);
}

// Local training only: τ steps per round on the client's own data, no
// communication.
inline round_metrics run_local_round(sim_state& state, const federation& train,
                                     const objective& obj, const protocol_options& opts,
                                     const federation* test = nullptr) {
    const int round = state.round + 1;
    detail::train_all_data(state.bank, train, 0, round, obj, opts);
    state.round = round;
    state.bank.round = round;
    return compute_round_metrics(state, train, test, obj, comm_stats{}, round);
}

// Spec surface: the whole local-only run in one call.
inline personalized_models run_local_only(federation& fed, const objective& obj,
                                          const protocol_options& opts, int rounds) {
    sim_state st = init_baseline_state(baseline_kind::local_only, fed, obj, opts);
    for (int t = 0; t < rounds; ++t) run_local_round(st, fed, obj, opts);
    personalized_models out;
    out.models.resize(fed.n_clients());
    for (int i = 0; i < fed.n_clients(); ++i) out.models[i] = st.bank.center(i, 0);
    return out;
}

// Centralized FedAvg reference: exact mean over all clients every round.
inline round_metrics run_cfl_fedavg_round(sim_state& state, const federation& train,
                                          const objective& obj, const protocol_options& opts,
                                          const federation* test = nullptr) {
    const int round = state.round + 1;
    const int n = train.n_clients();
    detail::train_all_data(state.bank, train, 0, round, obj, opts);
    std::vector<const param_vector*> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) rows.push_back(&state.bank.center(i, 0));
    const param_vector mean = mean_of(rows);
    for (int i = 0; i < n; ++i) state.bank.center(i, 0) = mean;
    comm_stats comm;
    comm.messages_sent = 2L * n;  // uplink + broadcast
    comm.payload_params_sent = 2L * n * state.bank.param_dim;
    state.round = round;
    state.bank.round = round;
    return compute_round_metrics(state, train, test, obj, comm, round);
}

}  // namespace fedspd
