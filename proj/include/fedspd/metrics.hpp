#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fedspd/data.hpp"
#include "fedspd/errors.hpp"
#include "fedspd/model.hpp"
#include "fedspd/state.hpp"

namespace fedspd {

struct accuracy_stats_t {
    double mean = 0.0, min = 0.0, max = 0.0, stddev = 0.0;
    bool is_risk = false;  // regression objective: values are risks, not accuracies
};

// One per-round record; the CSV schema in the runner flattens these fields.
struct round_metrics {
    int round = 0;
    std::vector<double> consensus_distance;   // per cluster, E_t
    std::vector<double> avg_center_risk_gap;  // per cluster
    double mixture_abs_error = 0.0;
    double mixture_abs_error_best_perm = 0.0;
    accuracy_stats_t train_stats;
    accuracy_stats_t test_stats;
    long messages_sent = 0;
    long payload_params_sent = 0;
};

// E_t for one cluster: (1/N) Σ_i ||c_is - c̄_s||²
inline double consensus_distance(const cluster_bank& bank, int cluster) {
    param_vector mean(bank.param_dim, 0.0);
    for (int i = 0; i < bank.n_clients; ++i) {
        const param_vector& c = bank.center(i, cluster);
        for (int k = 0; k < bank.param_dim; ++k) mean[k] += c[k];
    }
    for (double& v : mean) v /= bank.n_clients;
    double acc = 0.0;
    for (int i = 0; i < bank.n_clients; ++i)
        acc += squared_distance(bank.center(i, cluster), mean);
    return acc / bank.n_clients;
}

inline param_vector average_center(const cluster_bank& bank, int cluster) {
    param_vector mean(bank.param_dim, 0.0);
    for (int i = 0; i < bank.n_clients; ++i) {
        const param_vector& c = bank.center(i, cluster);
        for (int k = 0; k < bank.param_dim; ++k) mean[k] += c[k];
    }
    for (double& v : mean) v /= bank.n_clients;
    return mean;
}

struct consensus_rate_estimate {
    double p_hat = 0.0;
    int beta = 1;
    int windows = 0;
    bool contraction_observed = false;
    bool defined = false;  // false: series already at consensus (all zero)
};

// Worst-window surrogate for the expected consensus rate: p̂ = 1 - max over
// windows of E_{(l+1)β} / E_{lβ}, clipped to [floor, 1].
inline consensus_rate_estimate estimate_consensus_rate(const std::vector<double>& series,
                                                       int beta, double floor = 1e-6) {
    if (beta < 1) throw invalid_parameter("estimate_consensus_rate: beta >= 1 required");
    if (static_cast<int>(series.size()) < 2 * beta)
        throw invalid_parameter("estimate_consensus_rate: series must cover >= 2*beta rounds");
    consensus_rate_estimate est;
    est.beta = beta;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; (l + 1) * static_cast<std::size_t>(beta) < series.size(); ++l) {
        const std::size_t a = l * beta, b = (l + 1) * beta;
        if (series[a] <= 0.0) continue;  // hypothesis void: nothing to contract
        worst = std::max(worst, series[b] / series[a]);
        ++est.windows;
    }
    if (est.windows == 0) return est;  // undefined: already at consensus
    est.defined = true;
    const double raw = 1.0 - worst;
    est.p_hat = std::clamp(raw, floor, 1.0);
    est.contraction_observed = raw > floor;
    return est;
}

// Assumption-style diagnostic: does each estimate sit within
// (0.5 - α₀)·sqrt(μ/L)·δ of its optimal center? Inclusive bound.
inline std::optional<std::vector<std::vector<bool>>> cluster_error(
    const cluster_bank& bank, const std::vector<param_vector>& true_centers, double mu_emp,
    double l_emp, double delta, double alpha0) {
    if (true_centers.empty()) return std::nullopt;  // not applicable
    if (mu_emp <= 0.0 || l_emp <= 0.0)
        throw invalid_parameter("cluster_error: spectrum bounds must be positive");
    const double bound = (0.5 - alpha0) * std::sqrt(mu_emp / l_emp) * delta;
    std::vector<std::vector<bool>> ok(bank.n_clients,
                                      std::vector<bool>(bank.n_clusters, false));
    for (int i = 0; i < bank.n_clients; ++i)
        for (int s = 0; s < bank.n_clusters; ++s) {
            const double d =
                std::sqrt(squared_distance(bank.center(i, s), true_centers[s]));
            ok[i][s] = d <= bound;
        }
    return ok;
}

// min/max eigenvalues of the empirical Hessian of the ½·residual² objective,
// i.e. the Gram matrix (1/M) Σ x xᵀ.
inline std::pair<double, double> linear_hessian_spectrum(const point_view& points, int dim) {
    if (points.empty()) throw invalid_parameter("linear_hessian_spectrum: empty point set");
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (const data_point* d : points) {
        Eigen::Map<const Eigen::VectorXd> x(d->features.data(), dim);
        h += x * x.transpose();
    }
    h /= static_cast<double>(points.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
    const auto& ev = solver.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

// population-convention stats over per-client values
inline accuracy_stats_t summarize(const std::vector<double>& values, bool is_risk) {
    accuracy_stats_t s;
    s.is_risk = is_risk;
    if (values.empty()) return s;
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / values.size());
    return s;
}

inline std::vector<double> per_client_accuracy(const std::vector<param_vector>& models,
                                               const federation& fed, const objective& obj) {
    std::vector<double> out(fed.clients.size(), 0.0);
    for (std::size_t i = 0; i < fed.clients.size(); ++i) {
        const auto& pts = fed.clients[i].points;
        if (pts.empty()) continue;
        if (obj.is_classification()) {
            int correct = 0;
            for (const auto& d : pts)
                if (obj.predict_class(models[i], d) == static_cast<int>(d.label)) ++correct;
            out[i] = static_cast<double>(correct) / pts.size();
        } else {
            out[i] = obj.batch_loss(models[i], view_all(fed.clients[i]));
        }
    }
    return out;
}

// accuracy for classification; per-client risk (flagged) for regression
inline accuracy_stats_t accuracy_stats(const std::vector<param_vector>& models,
                                       const federation& fed, const objective& obj) {
    return summarize(per_client_accuracy(models, fed, obj), !obj.is_classification());
}

struct mixture_error_t {
    double raw = 0.0;
    double best_perm = 0.0;  // minimized over cluster relabelings
};

// mean over clients of Σ_s |u_is - u*_is|, raw and permutation-corrected
inline mixture_error_t mixture_error(const mixture_matrix& mixture, const federation& fed) {
    const int s_protocol = mixture.n_clusters;
    const int s_data = fed.n_clusters;
    const int s = std::max(s_protocol, s_data);
    if (s > 8) throw invalid_parameter("mixture_error: permutation search limited to S <= 8");
    std::vector<int> perm(s);
    std::iota(perm.begin(), perm.end(), 0);
    auto error_under = [&](const std::vector<int>& p) {
        double total = 0.0;
        for (int i = 0; i < mixture.n_clients; ++i) {
            double e = 0.0;
            for (int k = 0; k < s; ++k) {
                const double u = k < s_protocol ? mixture.at(i, k) : 0.0;
                const int mapped = p[k];
                const double ustar = mapped < s_data
                                         ? fed.clients[i].true_mixture[mapped]
                                         : 0.0;
                e += std::abs(u - ustar);
            }
            total += e;
        }
        return total / mixture.n_clients;
    };
    mixture_error_t out;
    out.raw = error_under(perm);
    out.best_perm = out.raw;
    while (std::next_permutation(perm.begin(), perm.end()))
        out.best_perm = std::min(out.best_perm, error_under(perm));
    return out;
}

// Personalized evaluation model per client: x_i = Σ_s u_is · c_is.
inline std::vector<param_vector> mixture_weighted_models(const cluster_bank& bank,
                                                         const mixture_matrix& mixture) {
    std::vector<param_vector> models(bank.n_clients, param_vector(bank.param_dim, 0.0));
    for (int i = 0; i < bank.n_clients; ++i)
        for (int s = 0; s < bank.n_clusters; ++s) {
            const double u = mixture.at(i, s);
            if (u == 0.0) continue;
            const param_vector& c = bank.center(i, s);
            for (int k = 0; k < bank.param_dim; ++k) models[i][k] += u * c[k];
        }
    return models;
}

// Uniform per-round record across FedSPD and all baselines.
inline round_metrics compute_round_metrics(const sim_state& state, const federation& train,
                                           const federation* test, const objective& obj,
                                           const comm_stats& comm, int round) {
    round_metrics m;
    m.round = round;
    m.messages_sent = comm.messages_sent;
    m.payload_params_sent = comm.payload_params_sent;
    const int s_count = state.bank.n_clusters;
    m.consensus_distance.resize(s_count);
    m.avg_center_risk_gap.resize(s_count);
    for (int s = 0; s < s_count; ++s)
        m.consensus_distance[s] = consensus_distance(state.bank, s);

    // risk of the across-client average center on cluster-s data
    // (gap to f(c_s*) when the generator knows the optimum)
    for (int s = 0; s < s_count; ++s) {
        point_view pts;
        for (const auto& c : train.clients)
            for (const auto& d : c.points)
                if (d.true_cluster == s) pts.push_back(&d);
        if (pts.empty() || s >= train.n_clusters) {
            m.avg_center_risk_gap[s] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const param_vector cbar = average_center(state.bank, s);
        double gap = obj.batch_loss(cbar, pts);
        if (s < static_cast<int>(train.spec.true_centers.size()))
            gap -= obj.batch_loss(train.spec.true_centers[s], pts);
        m.avg_center_risk_gap[s] = gap;
    }

    const mixture_error_t me = mixture_error(state.mixture, train);
    m.mixture_abs_error = me.raw;
    m.mixture_abs_error_best_perm = me.best_perm;

    const auto models = mixture_weighted_models(state.bank, state.mixture);
    m.train_stats = accuracy_stats(models, train, obj);
    if (test) m.test_stats = accuracy_stats(models, *test, obj);
    return m;
}

}  // namespace fedspd
