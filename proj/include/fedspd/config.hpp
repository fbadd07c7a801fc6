#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedspd/errors.hpp"
#include "fedspd/protocol.hpp"

namespace fedspd {

struct topology_config {
    std::string kind = "er";  // er | ba | rgg
    int n = 50;
    double avg_degree = 8.0;
    std::uint64_t seed = 1;
};

struct data_config {
    std::string generator = "linear_mixture";  // linear_mixture | rotation_classification
    int points_per_client = 200;
    int dim = 10;
    int n_classes = 4;
    double separation = 5.0;
    double noise_std = 0.1;
    double test_fraction = 0.2;
    bool exact_counts = false;
    std::uint64_t seed = 2;
};

struct model_config {
    std::string objective = "auto";  // auto | linear_squared | logistic | mlp
    int hidden = 16;
};

struct run_config {
    std::uint64_t seed = 1;
    std::string out_dir;  // empty: FEDSPD_OUTPUT_ROOT (or ./runs) + derived name
    int checkpoint_every = 0;
    int threads = 1;
};

struct experiment_config {
    std::string algorithm = "fedspd";
    topology_config topology;
    data_config data;
    model_config model;
    protocol_options protocol;  // seed/threads filled from run at parse time
    int rounds = 50;            // T
    run_config run;
};

namespace detail {

// JSON parse with duplicate-key rejection and line/column on syntax errors.
inline nlohmann::json parse_json_strict(const std::string& text) {
    std::vector<std::set<std::string>> object_keys;
    auto cb = [&object_keys](int, nlohmann::json::parse_event_t event,
                             nlohmann::json& parsed) {
        using event_t = nlohmann::json::parse_event_t;
        if (event == event_t::object_start) {
            object_keys.emplace_back();
        } else if (event == event_t::object_end) {
            object_keys.pop_back();
        } else if (event == event_t::key) {
            const auto key = parsed.get<std::string>();
            if (!object_keys.back().insert(key).second)
                throw invalid_parameter("config: syntax error: duplicate key '" + key + "'");
        }
        return true;
    };
    try {
        return nlohmann::json::parse(text, cb);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << "config: syntax error at line " << line << ", column " << col << ": "
           << e.what();
        throw invalid_parameter(os.str());
    }
}

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& section,
                                const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw invalid_parameter("config: unknown key '" +
                                    (section.empty() ? key : section + "." + key) + "'");
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline void require(bool ok, const std::string& field, const std::string& constraint) {
    if (!ok) throw invalid_parameter("config: " + field + ": " + constraint);
}

}  // namespace detail

inline experiment_config config_from_json(const nlohmann::json& j) {
    experiment_config cfg;
    detail::reject_unknown_keys(
        j, "", {"algorithm", "topology", "data", "model", "protocol", "run", "sweep"});
    detail::read_field(j, "algorithm", cfg.algorithm);

    if (j.contains("topology")) {
        const auto& t = j.at("topology");
        detail::reject_unknown_keys(t, "topology", {"kind", "n", "avg_degree", "seed"});
        detail::read_field(t, "kind", cfg.topology.kind);
        detail::read_field(t, "n", cfg.topology.n);
        detail::read_field(t, "avg_degree", cfg.topology.avg_degree);
        detail::read_field(t, "seed", cfg.topology.seed);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d, "data",
                                    {"generator", "points_per_client", "dim", "n_classes",
                                     "separation", "noise_std", "test_fraction",
                                     "exact_counts", "seed"});
        detail::read_field(d, "generator", cfg.data.generator);
        detail::read_field(d, "points_per_client", cfg.data.points_per_client);
        detail::read_field(d, "dim", cfg.data.dim);
        detail::read_field(d, "n_classes", cfg.data.n_classes);
        detail::read_field(d, "separation", cfg.data.separation);
        detail::read_field(d, "noise_std", cfg.data.noise_std);
        detail::read_field(d, "test_fraction", cfg.data.test_fraction);
        detail::read_field(d, "exact_counts", cfg.data.exact_counts);
        detail::read_field(d, "seed", cfg.data.seed);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(m, "model", {"objective", "hidden"});
        detail::read_field(m, "objective", cfg.model.objective);
        detail::read_field(m, "hidden", cfg.model.hidden);
    }
    if (j.contains("protocol")) {
        const auto& p = j.at("protocol");
        detail::reject_unknown_keys(
            p, "protocol",
            {"n_clusters", "rounds", "tau", "eta", "lr_decay", "lr_decay_every",
             "batch_size", "double_first_round", "alignment", "init_scale",
             "init_perturbation", "fine_tune_epochs", "eta_fine_tune"});
        detail::read_field(p, "n_clusters", cfg.protocol.n_clusters);
        detail::read_field(p, "rounds", cfg.rounds);
        detail::read_field(p, "tau", cfg.protocol.tau);
        detail::read_field(p, "eta", cfg.protocol.eta);
        detail::read_field(p, "lr_decay", cfg.protocol.lr_decay);
        detail::read_field(p, "lr_decay_every", cfg.protocol.lr_decay_every);
        detail::read_field(p, "batch_size", cfg.protocol.batch_size);
        detail::read_field(p, "double_first_round", cfg.protocol.double_first_round);
        detail::read_field(p, "alignment", cfg.protocol.alignment);
        detail::read_field(p, "init_scale", cfg.protocol.init_scale);
        detail::read_field(p, "init_perturbation", cfg.protocol.init_perturbation);
        detail::read_field(p, "fine_tune_epochs", cfg.protocol.fine_tune_epochs);
        detail::read_field(p, "eta_fine_tune", cfg.protocol.eta_fine_tune);
    }
    if (j.contains("run")) {
        const auto& r = j.at("run");
        detail::reject_unknown_keys(r, "run",
                                    {"seed", "out_dir", "checkpoint_every", "threads"});
        detail::read_field(r, "seed", cfg.run.seed);
        detail::read_field(r, "out_dir", cfg.run.out_dir);
        detail::read_field(r, "checkpoint_every", cfg.run.checkpoint_every);
        detail::read_field(r, "threads", cfg.run.threads);
    }
    cfg.protocol.seed = cfg.run.seed;
    cfg.protocol.threads = cfg.run.threads;

    // validation: field + violated constraint
    detail::require(cfg.algorithm == "fedspd" || cfg.algorithm == "dfl-fedavg" ||
                        cfg.algorithm == "dfl-ifca" || cfg.algorithm == "dfl-fedem-style" ||
                        cfg.algorithm == "local-only" || cfg.algorithm == "cfl-fedavg",
                    "algorithm", "must be one of fedspd, dfl-fedavg, dfl-ifca, "
                                 "dfl-fedem-style, local-only, cfl-fedavg");
    detail::require(cfg.topology.kind == "er" || cfg.topology.kind == "ba" ||
                        cfg.topology.kind == "rgg",
                    "topology.kind", "must be one of er, ba, rgg");
    detail::require(cfg.topology.n >= 2, "topology.n", "must be >= 2");
    detail::require(cfg.topology.avg_degree > 0.0, "topology.avg_degree", "must be > 0");
    detail::require(cfg.data.generator == "linear_mixture" ||
                        cfg.data.generator == "rotation_classification",
                    "data.generator",
                    "must be one of linear_mixture, rotation_classification");
    detail::require(cfg.data.points_per_client >= 2, "data.points_per_client",
                    "must be >= 2");
    detail::require(cfg.data.dim >= 1, "data.dim", "must be >= 1");
    detail::require(cfg.data.test_fraction > 0.0 && cfg.data.test_fraction < 1.0,
                    "data.test_fraction", "must lie in (0, 1)");
    detail::require(cfg.model.objective == "auto" ||
                        cfg.model.objective == "linear_squared" ||
                        cfg.model.objective == "logistic" || cfg.model.objective == "mlp",
                    "model.objective", "must be one of auto, linear_squared, logistic, mlp");
    detail::require(cfg.model.hidden >= 1, "model.hidden", "must be >= 1");
    detail::require(cfg.protocol.n_clusters >= 1, "protocol.n_clusters", "must be >= 1");
    detail::require(cfg.rounds >= 1, "protocol.rounds", "must be >= 1");
    detail::require(cfg.protocol.tau >= 1, "protocol.tau", "must be >= 1");
    detail::require(cfg.protocol.eta > 0.0, "protocol.eta", "must be > 0");
    detail::require(cfg.protocol.lr_decay > 0.0 && cfg.protocol.lr_decay <= 1.0,
                    "protocol.lr_decay", "must lie in (0, 1]");
    detail::require(cfg.protocol.lr_decay_every >= 1, "protocol.lr_decay_every",
                    "must be >= 1");
    detail::require(cfg.protocol.batch_size >= 0, "protocol.batch_size", "must be >= 0");
    detail::require(cfg.protocol.fine_tune_epochs >= 0, "protocol.fine_tune_epochs",
                    "must be >= 0");
    detail::require(cfg.protocol.eta_fine_tune >= 0.0, "protocol.eta_fine_tune",
                    "must be >= 0");
    detail::require(cfg.run.checkpoint_every >= 0, "run.checkpoint_every", "must be >= 0");
    detail::require(cfg.run.threads >= 1, "run.threads", "must be >= 1");
    return cfg;
}

inline experiment_config parse_config(const std::string& text) {
    return config_from_json(detail::parse_json_strict(text));
}

inline nlohmann::json config_to_json(const experiment_config& cfg) {
    nlohmann::json j;
    j["algorithm"] = cfg.algorithm;
    j["topology"] = {{"kind", cfg.topology.kind},
                     {"n", cfg.topology.n},
                     {"avg_degree", cfg.topology.avg_degree},
                     {"seed", cfg.topology.seed}};
    j["data"] = {{"generator", cfg.data.generator},
                 {"points_per_client", cfg.data.points_per_client},
                 {"dim", cfg.data.dim},
                 {"n_classes", cfg.data.n_classes},
                 {"separation", cfg.data.separation},
                 {"noise_std", cfg.data.noise_std},
                 {"test_fraction", cfg.data.test_fraction},
                 {"exact_counts", cfg.data.exact_counts},
                 {"seed", cfg.data.seed}};
    j["model"] = {{"objective", cfg.model.objective}, {"hidden", cfg.model.hidden}};
    j["protocol"] = {{"n_clusters", cfg.protocol.n_clusters},
                     {"rounds", cfg.rounds},
                     {"tau", cfg.protocol.tau},
                     {"eta", cfg.protocol.eta},
                     {"lr_decay", cfg.protocol.lr_decay},
                     {"lr_decay_every", cfg.protocol.lr_decay_every},
                     {"batch_size", cfg.protocol.batch_size},
                     {"double_first_round", cfg.protocol.double_first_round},
                     {"alignment", cfg.protocol.alignment},
                     {"init_scale", cfg.protocol.init_scale},
                     {"init_perturbation", cfg.protocol.init_perturbation},
                     {"fine_tune_epochs", cfg.protocol.fine_tune_epochs},
                     {"eta_fine_tune", cfg.protocol.eta_fine_tune}};
    j["run"] = {{"seed", cfg.run.seed},
                {"out_dir", cfg.run.out_dir},
                {"checkpoint_every", cfg.run.checkpoint_every},
                {"threads", cfg.run.threads}};
    return j;
}

// --- sweep expansion: cross-product over dotted-path lists ---

struct sweep_cell {
    std::string name;  // e.g. "topology_kind=er,topology_avg_degree=8"
    nlohmann::json doc;
};

namespace detail {

inline void set_dotted(nlohmann::json& j, const std::string& path,
                       const nlohmann::json& value) {
    nlohmann::json* cur = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        if (dot == std::string::npos) {
            (*cur)[path.substr(start)] = value;
            return;
        }
        cur = &(*cur)[path.substr(start, dot - start)];
        start = dot + 1;
    }
}

inline std::string scalar_to_label(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace detail

// Expands {"sweep": {"topology.avg_degree": [6, 8], ...}} into one cell per
// combination; keys iterate in nlohmann's sorted order, so expansion order is
// deterministic.
inline std::vector<sweep_cell> expand_sweep(const nlohmann::json& doc) {
    nlohmann::json base = doc;
    base.erase("sweep");
    if (!doc.contains("sweep") || doc.at("sweep").empty())
        return {{"", base}};
    const auto& sweep = doc.at("sweep");
    std::vector<std::string> keys;
    for (const auto& [key, values] : sweep.items()) {
        if (!values.is_array() || values.empty())
            throw invalid_parameter("config: sweep." + key + ": must be a non-empty array");
        keys.push_back(key);
    }
    std::vector<sweep_cell> cells{{"", base}};
    for (const auto& key : keys) {
        std::vector<sweep_cell> next;
        for (const auto& cell : cells)
            for (const auto& value : sweep.at(key)) {
                sweep_cell c = cell;
                detail::set_dotted(c.doc, key, value);
                std::string label = key + "=" + detail::scalar_to_label(value);
                for (char& ch : label)
                    if (ch == '.') ch = '_';
                c.name = c.name.empty() ? label : c.name + "," + label;
                next.push_back(std::move(c));
            }
        cells = std::move(next);
    }
    return cells;
}

}  // namespace fedspd
