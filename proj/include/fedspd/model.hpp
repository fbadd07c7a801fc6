#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fedspd/data.hpp"
#include "fedspd/errors.hpp"
#include "fedspd/rng.hpp"

namespace fedspd {

using param_vector = std::vector<double>;
using point_view = std::vector<const data_point*>;

inline point_view view_all(const client_dataset& c) {
    point_view v;
    v.reserve(c.points.size());
    for (const auto& p : c.points) v.push_back(&p);
    return v;
}

inline point_view view_assigned(const client_dataset& c, int cluster) {
    point_view v;
    for (const auto& p : c.points)
        if (p.assigned_cluster == cluster) v.push_back(&p);
    return v;
}

inline bool all_finite(const param_vector& p) {
    for (double x : p)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double dot(const param_vector& a, const param_vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const param_vector& a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(const param_vector& a, const param_vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double cosine_similarity(const param_vector& a, const param_vector& b) {
    if (a.size() != b.size())
        throw invalid_parameter("cosine_similarity: dimension mismatch");
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;  // zero vector: defined as 0
    return dot(a, b) / (na * nb);
}

enum class objective_kind { linear_squared, logistic, mlp };

inline std::string to_string(objective_kind k) {
    switch (k) {
        case objective_kind::linear_squared: return "linear_squared";
        case objective_kind::logistic: return "logistic";
        case objective_kind::mlp: return "mlp";
    }
    return "?";
}

// Pluggable differentiable objective over flat parameter vectors.
// Conventions: squared loss = ½·residual²; cross-entropy in natural log,
// mean over a batch in both cases.
struct objective {
    objective_kind kind = objective_kind::linear_squared;
    int feature_dim = 0;
    int n_classes = 0;  // classification kinds only
    int hidden = 0;     // mlp only

    static objective linear(int dim) {
        if (dim < 1) throw invalid_parameter("objective: dim must be >= 1");
        return {objective_kind::linear_squared, dim, 0, 0};
    }
    static objective multinomial_logistic(int dim, int classes) {
        if (dim < 1 || classes < 2)
            throw invalid_parameter("objective: need dim >= 1 and classes >= 2");
        return {objective_kind::logistic, dim, classes, 0};
    }
    static objective mlp_tanh(int dim, int hidden_width, int classes) {
        if (dim < 1 || classes < 2 || hidden_width < 1)
            throw invalid_parameter("objective: bad mlp dimensions");
        return {objective_kind::mlp, dim, classes, hidden_width};
    }

    bool is_classification() const { return kind != objective_kind::linear_squared; }

    int param_dim() const {
        switch (kind) {
            case objective_kind::linear_squared: return feature_dim;
            case objective_kind::logistic: return n_classes * (feature_dim + 1);
            case objective_kind::mlp:
                return hidden * (feature_dim + 1) + n_classes * (hidden + 1);
        }
        return 0;
    }

    double loss(const param_vector& params, const data_point& d) const {
        check_dims(params, d);
        switch (kind) {
            case objective_kind::linear_squared: {
                const double r = residual(params, d);
                return 0.5 * r * r;
            }
            case objective_kind::logistic: {
                std::vector<double> z = logits_linear(params, d);
                return nll(z, static_cast<int>(d.label));
            }
            case objective_kind::mlp: {
                std::vector<double> h, z;
                forward_mlp(params, d, h, z);
                return nll(z, static_cast<int>(d.label));
            }
        }
        return 0.0;
    }

    double batch_loss(const param_vector& params, const point_view& batch) const {
        if (batch.empty()) throw invalid_parameter("batch_loss: empty batch");
        double s = 0.0;
        for (const data_point* d : batch) s += loss(params, *d);
        return s / static_cast<double>(batch.size());
    }

    // grad += ∇loss(params; d) · scale
    void accumulate_gradient(const param_vector& params, const data_point& d,
                             param_vector& grad, double scale = 1.0) const {
        check_dims(params, d);
        switch (kind) {
            case objective_kind::linear_squared: {
                const double r = residual(params, d) * scale;
                for (int k = 0; k < feature_dim; ++k) grad[k] += r * d.features[k];
                return;
            }
            case objective_kind::logistic: {
                std::vector<double> p = logits_linear(params, d);
                softmax_inplace(p);
                const int y = static_cast<int>(d.label);
                for (int c = 0; c < n_classes; ++c) {
                    const double g = (p[c] - (c == y ? 1.0 : 0.0)) * scale;
                    double* wc = &grad[c * (feature_dim + 1)];
                    for (int k = 0; k < feature_dim; ++k) wc[k] += g * d.features[k];
                    wc[feature_dim] += g;  // bias
                }
                return;
            }
            case objective_kind::mlp: {
                std::vector<double> h, z;
                forward_mlp(params, d, h, z);
                softmax_inplace(z);
                const int y = static_cast<int>(d.label);
                const int w1 = hidden * (feature_dim + 1);
                const double* W2 = &params[w1];
                // output layer
                std::vector<double> dh(hidden, 0.0);
                for (int c = 0; c < n_classes; ++c) {
                    const double dz = z[c] - (c == y ? 1.0 : 0.0);
                    const double g = dz * scale;
                    double* gw2 = &grad[w1 + c * (hidden + 1)];
                    for (int k = 0; k < hidden; ++k) {
                        gw2[k] += g * h[k];
                        dh[k] += dz * W2[c * (hidden + 1) + k];
                    }
                    gw2[hidden] += g;
                }
                // hidden layer, tanh' = 1 - h²
                for (int k = 0; k < hidden; ++k) {
                    const double g = dh[k] * (1.0 - h[k] * h[k]) * scale;
                    double* gw1 = &grad[k * (feature_dim + 1)];
                    for (int j = 0; j < feature_dim; ++j) gw1[j] += g * d.features[j];
                    gw1[feature_dim] += g;
                }
                return;
            }
        }
    }

    // mean gradient over the batch
    param_vector gradient(const param_vector& params, const point_view& batch) const {
        if (batch.empty()) throw invalid_parameter("gradient: empty batch");
        param_vector g(param_dim(), 0.0);
        for (const data_point* d : batch) accumulate_gradient(params, *d, g);
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (double& x : g) x *= inv;
        return g;
    }

    int predict_class(const param_vector& params, const data_point& d) const {
        if (!is_classification())
            throw invalid_parameter("predict_class: regression objective");
        std::vector<double> z;
        if (kind == objective_kind::logistic) {
            z = logits_linear(params, d);
        } else {
            std::vector<double> h;
            forward_mlp(params, d, h, z);
        }
        return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }

private:
    void check_dims(const param_vector& params, const data_point& d) const {
        if (static_cast<int>(d.features.size()) != feature_dim)
            throw invalid_parameter("objective: feature dimension mismatch");
        if (static_cast<int>(params.size()) != param_dim())
            throw invalid_parameter("objective: parameter dimension mismatch");
    }

    double residual(const param_vector& w, const data_point& d) const {
        double s = 0.0;
        for (int k = 0; k < feature_dim; ++k) s += w[k] * d.features[k];
        return s - d.label;
    }

    std::vector<double> logits_linear(const param_vector& params, const data_point& d) const {
        std::vector<double> z(n_classes, 0.0);
        for (int c = 0; c < n_classes; ++c) {
            const double* wc = &params[c * (feature_dim + 1)];
            double s = wc[feature_dim];
            for (int k = 0; k < feature_dim; ++k) s += wc[k] * d.features[k];
            z[c] = s;
        }
        return z;
    }

    void forward_mlp(const param_vector& params, const data_point& d,
                     std::vector<double>& h, std::vector<double>& z) const {
        h.assign(hidden, 0.0);
        for (int k = 0; k < hidden; ++k) {
            const double* wk = &params[k * (feature_dim + 1)];
            double s = wk[feature_dim];
            for (int j = 0; j < feature_dim; ++j) s += wk[j] * d.features[j];
            h[k] = std::tanh(s);
        }
        const int w1 = hidden * (feature_dim + 1);
        z.assign(n_classes, 0.0);
        for (int c = 0; c < n_classes; ++c) {
            const double* wc = &params[w1 + c * (hidden + 1)];
            double s = wc[hidden];
            for (int k = 0; k < hidden; ++k) s += wc[k] * h[k];
            z[c] = s;
        }
    }

    static void softmax_inplace(std::vector<double>& z) {
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double& v : z) {
            v = std::exp(v - m);
            sum += v;
        }
        for (double& v : z) v /= sum;
    }

    static double nll(const std::vector<double>& z, int y) {
        if (y < 0 || y >= static_cast<int>(z.size()))
            throw invalid_parameter("objective: class label out of range");
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - m);
        return m + std::log(sum) - z[y];
    }
};

// τ steps of params ← params − lr·∇f(params; minibatch). Minibatches are
// sampled uniformly with replacement; batch_size == 0 means full batch
// (no rng draws consumed).
inline void sgd_steps(const objective& obj, param_vector& params, const point_view& data,
                      int steps, double lr, int batch_size, rng_stream& rng,
                      int client_for_errors = -1) {
    if (steps < 1) throw invalid_parameter("sgd_steps: steps must be >= 1");
    if (lr < 0.0) throw invalid_parameter("sgd_steps: negative learning rate");
    if (data.empty()) throw invalid_parameter("sgd_steps: empty data");
    point_view batch;
    for (int t = 0; t < steps; ++t) {
        const point_view* use = &data;
        if (batch_size > 0 && batch_size < static_cast<int>(data.size())) {
            batch.clear();
            for (int b = 0; b < batch_size; ++b)
                batch.push_back(data[rng.uniform_index(data.size())]);
            use = &batch;
        }
        param_vector g = obj.gradient(params, *use);
        for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * g[k];
        if (!all_finite(params))
            throw divergence_error("sgd_steps: non-finite parameters", t, client_for_errors);
    }
}

}  // namespace fedspd
