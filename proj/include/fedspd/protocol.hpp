#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedspd/data.hpp"
#include "fedspd/errors.hpp"
#include "fedspd/graph.hpp"
#include "fedspd/metrics.hpp"
#include "fedspd/model.hpp"
#include "fedspd/parallel.hpp"
#include "fedspd/rng.hpp"
#include "fedspd/state.hpp"

namespace fedspd {

struct protocol_options {
    int n_clusters = 2;
    int tau = 5;
    double eta = 0.05;
    double lr_decay = 0.8;
    int lr_decay_every = 1;
    int batch_size = 0;  // 0 = full batch
    bool double_first_round = true;
    bool alignment = false;
    double init_scale = 0.1;
    double init_perturbation = 0.0;
    int fine_tune_epochs = 5;
    double eta_fine_tune = 0.01;
    std::uint64_t seed = 1;
    int threads = 1;
};

inline double lr_for_round(const protocol_options& opts, int round) {
    const int k = opts.lr_decay_every > 0 ? (round - 1) / opts.lr_decay_every : 0;
    return opts.eta * std::pow(opts.lr_decay, k);
}

inline int steps_for_round(const protocol_options& opts, int round) {
    return (round == 1 && opts.double_first_round) ? 2 * opts.tau : opts.tau;
}

// Shared per-cluster initialization: every client starts from the same
// random center for cluster s (clusters differ by stream), optionally
// perturbed per client to exercise cosine alignment.
inline cluster_bank init_bank(int n_clients, const objective& obj,
                              const protocol_options& opts) {
    cluster_bank bank = cluster_bank::zeros(n_clients, opts.n_clusters, obj.param_dim());
    for (int s = 0; s < opts.n_clusters; ++s) {
        rng_stream rng(derive_seed(opts.seed, "init_center", static_cast<std::uint64_t>(s)));
        param_vector base(obj.param_dim());
        for (double& v : base) v = opts.init_scale * rng.normal();
        for (int i = 0; i < n_clients; ++i) bank.center(i, s) = base;
    }
    if (opts.init_perturbation > 0.0) {
        for (int i = 0; i < n_clients; ++i)
            for (int s = 0; s < opts.n_clusters; ++s) {
                rng_stream rng(derive_seed(opts.seed, "init_perturb",
                                           static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(s)));
                for (double& v : bank.center(i, s)) v += opts.init_perturbation * rng.normal();
            }
    }
    return bank;
}

inline mixture_matrix mixture_from_assignments(const federation& fed, int n_clusters) {
    mixture_matrix m;
    m.n_clients = fed.n_clients();
    m.n_clusters = n_clusters;
    m.coeff.assign(static_cast<std::size_t>(m.n_clients) * n_clusters, 0.0);
    for (int i = 0; i < m.n_clients; ++i) {
        const auto& pts = fed.clients[i].points;
        if (pts.empty()) throw protocol_error("mixture_from_assignments: empty client dataset");
        for (const auto& d : pts) m.at(i, d.assigned_cluster) += 1.0;
        for (int s = 0; s < n_clusters; ++s) m.at(i, s) /= static_cast<double>(pts.size());
    }
    return m;
}

// Protocol start: shared-init bank, fresh uniform data-to-cluster assignment
// (re-drawn against the protocol's own cluster count), mixture from counts.
inline sim_state init_state(federation& fed, const objective& obj,
                            const protocol_options& opts) {
    sim_state st;
    st.bank = init_bank(fed.n_clients(), obj, opts);
    for (auto& c : fed.clients) {
        rng_stream rng(derive_seed(opts.seed, "assign0",
                                   static_cast<std::uint64_t>(c.client_id)));
        for (auto& d : c.points)
            d.assigned_cluster = static_cast<int>(rng.uniform_index(opts.n_clusters));
    }
    st.mixture = mixture_from_assignments(fed, opts.n_clusters);
    st.round = 0;
    st.bank.round = 0;
    return st;
}

// Step 1a: independent categorical draw per client with probabilities u_i·.
inline round_selections select_clusters(const mixture_matrix& mixture, int round,
                                        std::uint64_t seed) {
    round_selections sel;
    sel.selected.resize(mixture.n_clients);
    for (int i = 0; i < mixture.n_clients; ++i) {
        rng_stream rng(derive_seed(seed, "select", static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(round)));
        sel.selected[i] = rng.categorical(mixture.row(i));
    }
    return sel;
}

// Step 1b: each client advances only its selected center, τ SGD steps on the
// points currently assigned to that cluster. Clients whose selected cluster
// has no assigned points skip the update (event logged by the caller).
inline void local_update(cluster_bank& bank, const federation& fed,
                         const round_selections& sel, int round, const objective& obj,
                         const protocol_options& opts,
                         std::vector<std::string>* event_log = nullptr) {
    const int steps = steps_for_round(opts, round);
    const double lr = lr_for_round(opts, round);
    std::vector<char> skipped(fed.n_clients(), 0);
    parallel_for(fed.n_clients(), opts.threads, [&](int i) {
        const int s = sel.selected[i];
        const point_view data = view_assigned(fed.clients[i], s);
        if (data.empty()) {
            skipped[i] = 1;
            return;
        }
        rng_stream rng(derive_seed(opts.seed, "sgd", static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(round),
                                   static_cast<std::uint64_t>(s)));
        sgd_steps(obj, bank.center(i, s), data, steps, lr, opts.batch_size, rng, i);
    });
    if (event_log)
        for (int i = 0; i < fed.n_clients(); ++i)
            if (skipped[i])
                event_log->push_back("round " + std::to_string(round) + ": client " +
                                     std::to_string(i) + " skipped local update (cluster " +
                                     std::to_string(sel.selected[i] + 1) +
                                     " has no assigned points)");
}

// Label-switching resolution: the receiver re-indexes an incoming center to
// its own most-cosine-similar cluster. Ties break to the lowest index.
inline int align_clusters(const param_vector& incoming_center, int incoming_index,
                          const std::vector<param_vector>& own_centers) {
    if (own_centers.empty()) throw invalid_parameter("align_clusters: no own centers");
    if (incoming_index < 0 || incoming_index >= static_cast<int>(own_centers.size()))
        throw invalid_parameter("align_clusters: incoming index out of range");
    int best = 0;
    double best_sim = cosine_similarity(incoming_center, own_centers[0]);
    for (int s = 1; s < static_cast<int>(own_centers.size()); ++s) {
        const double sim = cosine_similarity(incoming_center, own_centers[s]);
        if (sim > best_sim) {
            best_sim = sim;
            best = s;
        }
    }
    return best;
}

// Steps 2+3: broadcast (s_i, c_{i,s_i}) over all edges, then average per
// cluster over the closed-neighborhood members that updated it; centers of
// clusters with no update carry over. Equivalent to C_s ← W_s · C_s with the
// build_weight_matrix operator (alignment off).
inline comm_stats exchange_and_update(cluster_bank& bank, const topology& topo,
                                      const round_selections& sel,
                                      bool alignment = false, int threads = 1) {
    if (static_cast<int>(sel.selected.size()) != bank.n_clients)
        throw invalid_parameter("exchange_and_update: selections/bank size mismatch");
    const cluster_bank snapshot = bank;
    comm_stats comm;
    for (int i = 0; i < topo.n_clients; ++i) {
        comm.messages_sent += topo.degree(i);
        comm.payload_params_sent += static_cast<long>(topo.degree(i)) * bank.param_dim;
    }
    parallel_for(bank.n_clients, threads, [&](int i) {
        std::vector<std::vector<const param_vector*>> buckets(bank.n_clusters);
        std::vector<param_vector> own;
        if (alignment) {
            own.reserve(bank.n_clusters);
            for (int s = 0; s < bank.n_clusters; ++s) own.push_back(snapshot.center(i, s));
        }
        for (int j : topo.closed_neighborhood(i)) {
            const int sj = sel.selected[j];
            int label = sj;
            if (alignment && j != i) label = align_clusters(snapshot.center(j, sj), sj, own);
            buckets[label].push_back(&snapshot.center(j, sj));
        }
        for (int s = 0; s < bank.n_clusters; ++s)
            if (!buckets[s].empty()) bank.center(i, s) = mean_of(buckets[s]);
    });
    return comm;
}

// Step 4: every point moves to the own-center cluster with the least loss
// (lowest index wins ties); the mixture row is the resulting fractions.
inline mixture_matrix recluster_data(const cluster_bank& bank, federation& fed,
                                     const objective& obj, int threads = 1) {
    parallel_for(fed.n_clients(), threads, [&](int i) {
        for (auto& d : fed.clients[i].points) {
            int best = 0;
            double best_loss = obj.loss(bank.center(i, 0), d);
            for (int s = 1; s < bank.n_clusters; ++s) {
                const double l = obj.loss(bank.center(i, s), d);
                if (l < best_loss) {
                    best_loss = l;
                    best = s;
                }
            }
            d.assigned_cluster = best;
        }
    });
    return mixture_from_assignments(fed, bank.n_clusters);
}

// One full round: select → local update → exchange/update → recluster.
inline round_metrics run_round(sim_state& state, const topology& topo, federation& train,
                               const objective& obj, const protocol_options& opts,
                               const federation* test = nullptr,
                               std::vector<std::string>* event_log = nullptr) {
    const int round = state.round + 1;
    const round_selections sel = select_clusters(state.mixture, round, opts.seed);
    local_update(state.bank, train, sel, round, obj, opts, event_log);
    const comm_stats comm =
        exchange_and_update(state.bank, topo, sel, opts.alignment, opts.threads);
    state.mixture = recluster_data(state.bank, train, obj, opts.threads);
    state.round = round;
    state.bank.round = round;
    return compute_round_metrics(state, train, test, obj, comm, round);
}

// Final phase: x_i = Σ_s u_is c_is, then fine-tuning epochs of SGD on the
// client's entire dataset. One epoch = ceil(|D_i| / batch) minibatch steps
// (a single full-batch step when batch_size == 0).
inline personalized_models finalize(const cluster_bank& bank, const mixture_matrix& mixture,
                                    const federation& fed, const objective& obj,
                                    const protocol_options& opts) {
    personalized_models out;
    out.models = mixture_weighted_models(bank, mixture);
    if (opts.fine_tune_epochs <= 0) return out;
    parallel_for(fed.n_clients(), opts.threads, [&](int i) {
        const point_view data = view_all(fed.clients[i]);
        if (data.empty()) return;
        const int per_epoch =
            opts.batch_size > 0
                ? static_cast<int>((data.size() + opts.batch_size - 1) / opts.batch_size)
                : 1;
        rng_stream rng(derive_seed(opts.seed, "finetune", static_cast<std::uint64_t>(i)));
        try {
            sgd_steps(obj, out.models[i], data, opts.fine_tune_epochs * per_epoch,
                      opts.eta_fine_tune, opts.batch_size, rng, i);
        } catch (const divergence_error& e) {
            throw divergence_error(std::string("finalize: fine-tuning diverged at client ") +
                                       std::to_string(i),
                                   e.step, i);
        }
    });
    return out;
}

// --- versioned checkpoint snapshot (protocol external interface) ---
// RNG streams derive from (seed, role, client, round), so the snapshot needs
// no engine state to make resume bit-equivalent.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json state_to_json(const sim_state& state, const federation& fed,
                                    std::uint64_t global_seed) {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["round"] = state.round;
    j["global_seed"] = global_seed;
    j["n_clients"] = state.bank.n_clients;
    j["n_clusters"] = state.bank.n_clusters;
    j["param_dim"] = state.bank.param_dim;
    j["bank"] = state.bank.centers;
    j["mixture"] = state.mixture.coeff;
    std::vector<std::vector<int>> assignments(fed.clients.size());
    for (std::size_t i = 0; i < fed.clients.size(); ++i)
        for (const auto& d : fed.clients[i].points)
            assignments[i].push_back(d.assigned_cluster);
    j["assignments"] = assignments;
    return j;
}

inline sim_state state_from_json(const nlohmann::json& j, federation& fed) {
    if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion)
        throw invalid_parameter("checkpoint: unsupported snapshot version");
    sim_state st;
    st.round = j.at("round").get<int>();
    st.bank.n_clients = j.at("n_clients").get<int>();
    st.bank.n_clusters = j.at("n_clusters").get<int>();
    st.bank.param_dim = j.at("param_dim").get<int>();
    st.bank.round = st.round;
    st.bank.centers = j.at("bank").get<std::vector<param_vector>>();
    st.mixture.n_clients = st.bank.n_clients;
    st.mixture.n_clusters = st.bank.n_clusters;
    st.mixture.coeff = j.at("mixture").get<std::vector<double>>();
    const auto assignments = j.at("assignments").get<std::vector<std::vector<int>>>();
    if (assignments.size() != fed.clients.size())
        throw invalid_parameter("checkpoint: assignment shape does not match federation");
    for (std::size_t i = 0; i < fed.clients.size(); ++i) {
        if (assignments[i].size() != fed.clients[i].points.size())
            throw invalid_parameter("checkpoint: assignment shape does not match federation");
        for (std::size_t k = 0; k < assignments[i].size(); ++k)
            fed.clients[i].points[k].assigned_cluster = assignments[i][k];
    }
    return st;
}

}  // namespace fedspd
