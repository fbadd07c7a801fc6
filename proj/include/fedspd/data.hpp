#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <utility>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedspd/errors.hpp"
#include "fedspd/rng.hpp"

namespace fedspd {

struct data_point {
    std::vector<double> features;
    double label = 0.0;        // integer class or real target
    int true_cluster = 0;      // hidden ground truth, oracle-only
    int assigned_cluster = 0;  // protocol-visible, mutated by reclustering
};

struct client_dataset {
    int client_id = 0;
    std::vector<data_point> points;
    std::vector<double> true_mixture;  // realized per-cluster fractions

    std::size_t size() const { return points.size(); }
};

// What generated the data, and the optimal centers when analytically known.
struct generator_spec {
    std::string kind;
    int dim = 0;
    int n_clusters = 0;
    int n_classes = 0;  // 0 for regression
    double separation = 0.0;
    double noise_std = 0.0;
    std::vector<std::vector<double>> true_centers;  // c_s*, empty when unknown
};

struct federation {
    std::vector<client_dataset> clients;
    int n_clusters = 0;
    generator_spec spec;

    int n_clients() const { return static_cast<int>(clients.size()); }
};

namespace detail {

// Per-client cluster labels: fraction drawn U[0.1, 0.9] (or forced, clamped),
// realized counts kept inside [0.1, 0.9] so true_mixture honors the paper's
// range. Only supports the S=2 mixture construction.
inline std::vector<int> draw_cluster_labels(int n_points, rng_stream& rng,
                                            bool exact_counts,
                                            std::optional<double> forced_fraction) {
    if (n_points < 2) throw invalid_parameter("mixture: need at least S points per client");
    double p = forced_fraction ? std::clamp(*forced_fraction, 0.1, 0.9)
                               : rng.uniform(0.1, 0.9);
    std::vector<int> labels(n_points, 1);
    if (exact_counts) {
        const int lo = std::max(1, static_cast<int>(std::ceil(0.1 * n_points)));
        const int hi = std::min(n_points - 1, static_cast<int>(std::floor(0.9 * n_points)));
        int n0 = std::clamp(static_cast<int>(std::lround(p * n_points)), lo, hi);
        for (int k = 0; k < n0; ++k) labels[k] = 0;
        return labels;
    }
    for (int attempt = 0; attempt < 100; ++attempt) {
        int n0 = 0;
        for (int k = 0; k < n_points; ++k) {
            labels[k] = rng.bernoulli(p) ? 0 : 1;
            n0 += (labels[k] == 0);
        }
        const double frac = static_cast<double>(n0) / n_points;
        if (frac >= 0.1 && frac <= 0.9) return labels;
    }
    // statistically unreachable for n_points >= 10; fall back to exact counts
    const int n0 = std::clamp(static_cast<int>(std::lround(p * n_points)), 1, n_points - 1);
    for (int k = 0; k < n_points; ++k) labels[k] = k < n0 ? 0 : 1;
    return labels;
}

inline std::vector<double> realized_mixture(const std::vector<int>& labels, int s) {
    std::vector<double> mix(s, 0.0);
    for (int l : labels) mix[l] += 1.0;
    for (double& v : mix) v /= static_cast<double>(labels.size());
    return mix;
}

}  // namespace detail

// Two linear-regression clusters: features ~ N(0, I), target = <w_s*, x> + noise.
// w_1* and w_2* sit at Euclidean distance `separation`; both are recorded as
// the analytically optimal centers for the ½·residual² loss.
inline federation generate_linear_mixture(int n_clients, int points_per_client, int dim,
                                          double separation, double noise_std,
                                          std::uint64_t seed, bool exact_counts = false,
                                          std::optional<double> forced_fraction = {}) {
    constexpr int S = 2;
    if (n_clients < 1) throw invalid_parameter("generate_linear_mixture: n_clients >= 1");
    if (dim < 1) throw invalid_parameter("generate_linear_mixture: dim >= 1");
    if (separation < 0.0) throw invalid_parameter("generate_linear_mixture: separation >= 0");
    if (noise_std < 0.0) throw invalid_parameter("generate_linear_mixture: noise_std >= 0");
    if (points_per_client < S)
        throw invalid_parameter("generate_linear_mixture: points_per_client < n_clusters");

    rng_stream center_rng(derive_seed(seed, "linear_centers"));
    std::vector<double> w1(dim), direction(dim);
    for (double& v : w1) v = center_rng.normal();
    double dn = 0.0;
    for (double& v : direction) {
        v = center_rng.normal();
        dn += v * v;
    }
    dn = std::sqrt(dn);
    std::vector<double> w2(dim);
    for (int k = 0; k < dim; ++k) w2[k] = w1[k] + separation * direction[k] / (dn > 0 ? dn : 1);

    federation fed;
    fed.n_clusters = S;
    fed.spec = {"linear_mixture", dim, S, 0, separation, noise_std, {w1, w2}};
    fed.clients.resize(n_clients);
    for (int i = 0; i < n_clients; ++i) {
        client_dataset& c = fed.clients[i];
        c.client_id = i;
        rng_stream mix_rng(derive_seed(seed, "mixture", i));
        const auto labels =
            detail::draw_cluster_labels(points_per_client, mix_rng, exact_counts, forced_fraction);
        rng_stream data_rng(derive_seed(seed, "linear_data", i));
        rng_stream assign_rng(derive_seed(seed, "init_assign", i));
        c.points.resize(points_per_client);
        for (int k = 0; k < points_per_client; ++k) {
            data_point& d = c.points[k];
            d.features.resize(dim);
            for (double& v : d.features) v = data_rng.normal();
            const auto& w = labels[k] == 0 ? w1 : w2;
            double y = 0.0;
            for (int j = 0; j < dim; ++j) y += w[j] * d.features[j];
            if (noise_std > 0.0) y += noise_std * data_rng.normal();
            d.label = y;
            d.true_cluster = labels[k];
            d.assigned_cluster = static_cast<int>(assign_rng.uniform_index(S));
        }
        c.true_mixture = detail::realized_mixture(labels, S);
    }
    return fed;
}

// Gaussian-blob classification; cluster 2 is cluster 1 pushed through a fixed
// 90° rotation of the first two feature coordinates. Class identity carries a
// rotation-invariant side signal in the remaining coordinates, while the
// in-plane blob positions of the two clusters interleave, so a single shared
// model faces label conflicts that cluster-resolved models do not.
inline federation generate_rotation_classification(int n_clients, int points_per_client,
                                                   int dim, int n_classes, std::uint64_t seed,
                                                   bool exact_counts = false,
                                                   std::optional<double> forced_fraction = {}) {
    constexpr int S = 2;
    if (dim < 2) throw invalid_parameter("generate_rotation_classification: dim >= 2 required");
    if (n_classes < 2) throw invalid_parameter("generate_rotation_classification: n_classes >= 2");
    if (n_clients < 1) throw invalid_parameter("generate_rotation_classification: n_clients >= 1");
    if (points_per_client < S)
        throw invalid_parameter("generate_rotation_classification: points_per_client < n_clusters");

    constexpr double kCircleRadius = 2.0;
    constexpr double kSideRadius = 1.6;
    constexpr double kNoiseStd = 1.0;
    constexpr double kPi = 3.141592653589793238462643383279502884;

    std::vector<std::vector<double>> means(n_classes, std::vector<double>(dim, 0.0));
    for (int c = 0; c < n_classes; ++c) {
        const double theta = 2.0 * kPi * c / n_classes;
        means[c][0] = kCircleRadius * std::cos(theta);
        means[c][1] = kCircleRadius * std::sin(theta);
        if (dim > 2) means[c][2 + (c % (dim - 2))] += kSideRadius;
    }

    federation fed;
    fed.n_clusters = S;
    fed.spec = {"rotation_classification", dim, S, n_classes, kCircleRadius, kNoiseStd, {}};
    fed.clients.resize(n_clients);
    for (int i = 0; i < n_clients; ++i) {
        client_dataset& c = fed.clients[i];
        c.client_id = i;
        rng_stream mix_rng(derive_seed(seed, "mixture", i));
        const auto labels =
            detail::draw_cluster_labels(points_per_client, mix_rng, exact_counts, forced_fraction);
        rng_stream data_rng(derive_seed(seed, "rotation_data", i));
        rng_stream assign_rng(derive_seed(seed, "init_assign", i));
        c.points.resize(points_per_client);
        for (int k = 0; k < points_per_client; ++k) {
            data_point& d = c.points[k];
            const int cls = static_cast<int>(data_rng.uniform_index(n_classes));
            d.features.resize(dim);
            for (int j = 0; j < dim; ++j)
                d.features[j] = means[cls][j] + kNoiseStd * data_rng.normal();
            if (labels[k] == 1) {
                // 90° in the first two coordinates: (x, y) -> (-y, x)
                const double x0 = d.features[0];
                d.features[0] = -d.features[1];
                d.features[1] = x0;
            }
            d.label = cls;
            d.true_cluster = labels[k];
            d.assigned_cluster = static_cast<int>(assign_rng.uniform_index(S));
        }
        c.true_mixture = detail::realized_mixture(labels, S);
    }
    return fed;
}

// Per-client stratified split by true_cluster; per-cluster counts allocated
// by largest remainder so both sides preserve the mixture within ±1 point.
inline std::pair<federation, federation> split_train_test(const federation& fed,
                                                          double test_fraction,
                                                          std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw invalid_parameter("split_train_test: test_fraction in (0,1) required");
    federation train, test;
    train.n_clusters = test.n_clusters = fed.n_clusters;
    train.spec = test.spec = fed.spec;
    train.clients.reserve(fed.clients.size());
    test.clients.reserve(fed.clients.size());

    for (const client_dataset& c : fed.clients) {
        const int m = static_cast<int>(c.points.size());
        const int total_test = static_cast<int>(std::lround(test_fraction * m));
        if (total_test <= 0 || total_test >= m)
            throw invalid_parameter("split_train_test: split leaves an empty side");

        std::vector<std::vector<int>> groups(fed.n_clusters);
        for (int k = 0; k < m; ++k) groups[c.points[k].true_cluster].push_back(k);

        std::vector<int> take(fed.n_clusters, 0);
        std::vector<std::pair<double, int>> rema;
        int allocated = 0;
        for (int s = 0; s < fed.n_clusters; ++s) {
            const double q = test_fraction * static_cast<double>(groups[s].size());
            take[s] = static_cast<int>(std::floor(q));
            allocated += take[s];
            rema.push_back({q - take[s], s});
        }
        std::stable_sort(rema.begin(), rema.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int r = 0; allocated < total_test; ++r, ++allocated) {
            take[rema[r % rema.size()].second] += 1;
        }

        rng_stream split_rng(derive_seed(seed, "split", c.client_id));
        client_dataset tr, te;
        tr.client_id = te.client_id = c.client_id;
        for (int s = 0; s < fed.n_clusters; ++s) {
            auto idx = groups[s];
            split_rng.shuffle(idx);
            const int t = std::min<int>(take[s], static_cast<int>(idx.size()));
            for (int r = 0; r < static_cast<int>(idx.size()); ++r)
                (r < t ? te : tr).points.push_back(c.points[idx[r]]);
        }
        if (tr.points.empty() || te.points.empty())
            throw invalid_parameter("split_train_test: split leaves an empty side");
        std::vector<int> trl, tel;
        for (const auto& p : tr.points) trl.push_back(p.true_cluster);
        for (const auto& p : te.points) tel.push_back(p.true_cluster);
        tr.true_mixture = detail::realized_mixture(trl, fed.n_clusters);
        te.true_mixture = detail::realized_mixture(tel, fed.n_clusters);
        train.clients.push_back(std::move(tr));
        test.clients.push_back(std::move(te));
    }
    return {std::move(train), std::move(test)};
}

// --- columnar text format ---
// header: client_id,point_id,feature_0..feature_{d-1},label,true_cluster

inline void save_federation_csv(const federation& fed, std::ostream& os) {
    const int dim = fed.spec.dim;
    os << "client_id,point_id";
    for (int k = 0; k < dim; ++k) os << ",feature_" << k;
    os << ",label,true_cluster\n";
    char buf[64];
    for (const auto& c : fed.clients) {
        for (std::size_t k = 0; k < c.points.size(); ++k) {
            const data_point& d = c.points[k];
            os << c.client_id << "," << k;
            for (double v : d.features) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                os << "," << buf;
            }
            std::snprintf(buf, sizeof buf, "%.17g", d.label);
            os << "," << buf << "," << d.true_cluster << "\n";
        }
    }
}

inline federation load_federation_csv(std::istream& is, int n_clusters,
                                      std::uint64_t assign_seed) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("client_id,point_id", 0) != 0)
        throw invalid_parameter("load_federation_csv: bad header");
    int dim = 0;
    {
        std::stringstream h(line);
        std::string col;
        while (std::getline(h, col, ','))
            if (col.rfind("feature_", 0) == 0) ++dim;
    }
    federation fed;
    fed.n_clusters = n_clusters;
    fed.spec.kind = "csv_import";
    fed.spec.dim = dim;
    fed.spec.n_clusters = n_clusters;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        auto next = [&]() {
            if (!std::getline(ls, cell, ','))
                throw invalid_parameter("load_federation_csv: short row");
            return cell;
        };
        const int cid = std::stoi(next());
        next();  // point_id
        data_point d;
        d.features.resize(dim);
        for (int k = 0; k < dim; ++k) d.features[k] = std::stod(next());
        d.label = std::stod(next());
        d.true_cluster = std::stoi(next());
        while (static_cast<int>(fed.clients.size()) <= cid) {
            client_dataset c;
            c.client_id = static_cast<int>(fed.clients.size());
            fed.clients.push_back(std::move(c));
        }
        fed.clients[cid].points.push_back(std::move(d));
    }
    for (auto& c : fed.clients) {
        rng_stream assign_rng(derive_seed(assign_seed, "init_assign", c.client_id));
        std::vector<int> labels;
        for (auto& p : c.points) {
            p.assigned_cluster = static_cast<int>(assign_rng.uniform_index(n_clusters));
            labels.push_back(p.true_cluster);
        }
        c.true_mixture = detail::realized_mixture(labels, n_clusters);
    }
    return fed;
}

}  // namespace fedspd
