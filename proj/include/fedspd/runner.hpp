#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedspd/baselines.hpp"
#include "fedspd/config.hpp"
#include "fedspd/data.hpp"
#include "fedspd/graph.hpp"
#include "fedspd/metrics.hpp"
#include "fedspd/model.hpp"
#include "fedspd/protocol.hpp"

namespace fedspd {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "FEDSPD_OUTPUT_ROOT";

struct run_record {
    nlohmann::json config;
    std::string algorithm;
    std::vector<round_metrics> rounds;
    accuracy_stats_t final_train;
    accuracy_stats_t final_test;
    std::vector<double> per_client_train;
    std::vector<double> per_client_test;
    double wall_seconds = 0.0;
    std::string out_dir;
};

inline objective make_objective(const experiment_config& cfg) {
    std::string kind = cfg.model.objective;
    if (kind == "auto")
        kind = cfg.data.generator == "linear_mixture" ? "linear_squared" : "logistic";
    if (kind == "linear_squared") return objective::linear(cfg.data.dim);
    if (kind == "logistic")
        return objective::multinomial_logistic(cfg.data.dim, cfg.data.n_classes);
    return objective::mlp_tanh(cfg.data.dim, cfg.model.hidden, cfg.data.n_classes);
}

inline topology make_topology_from_config(const topology_config& t) {
    if (t.kind == "er") return generate_er(t.n, t.avg_degree, t.seed);
    if (t.kind == "rgg") return generate_rgg(t.n, t.avg_degree, t.seed);
    // degree knob: BA attachment count is round(d/2)
    const int m = std::max(1, static_cast<int>(std::lround(t.avg_degree / 2.0)));
    return generate_ba(t.n, m, t.seed);
}

inline federation make_federation_from_config(const data_config& d, int n_clients) {
    if (d.generator == "linear_mixture")
        return generate_linear_mixture(n_clients, d.points_per_client, d.dim, d.separation,
                                       d.noise_std, d.seed, d.exact_counts);
    return generate_rotation_classification(n_clients, d.points_per_client, d.dim,
                                            d.n_classes, d.seed, d.exact_counts);
}

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string csv_header(int n_clusters) {
    std::ostringstream os;
    os << "round,algorithm";
    for (int s = 1; s <= n_clusters; ++s) os << ",consensus_distance_s" << s;
    for (int s = 1; s <= n_clusters; ++s) os << ",avg_center_risk_gap_s" << s;
    os << ",mixture_abs_error,mixture_abs_error_best_perm,metric_kind"
       << ",train_mean,train_min,train_max,train_std"
       << ",test_mean,test_min,test_max,test_std"
       << ",messages_sent,payload_params_sent";
    return os.str();
}

inline std::string csv_row(const round_metrics& m, const std::string& algorithm) {
    std::ostringstream os;
    os << m.round << "," << algorithm;
    for (double v : m.consensus_distance) os << "," << detail::fmt(v);
    for (double v : m.avg_center_risk_gap) os << "," << detail::fmt(v);
    os << "," << detail::fmt(m.mixture_abs_error) << ","
       << detail::fmt(m.mixture_abs_error_best_perm) << ","
       << (m.train_stats.is_risk ? "risk" : "accuracy");
    for (const auto* s : {&m.train_stats, &m.test_stats})
        os << "," << detail::fmt(s->mean) << "," << detail::fmt(s->min) << ","
           << detail::fmt(s->max) << "," << detail::fmt(s->stddev);
    os << "," << m.messages_sent << "," << m.payload_params_sent;
    return os.str();
}

inline std::string resolve_out_dir(const experiment_config& cfg) {
    if (!cfg.run.out_dir.empty()) return cfg.run.out_dir;
    const char* root = std::getenv(kOutputRootEnv);
    std::ostringstream os;
    os << (root ? root : "runs") << "/" << cfg.algorithm << "_" << cfg.topology.kind << "_n"
       << cfg.topology.n << "_seed" << cfg.run.seed;
    return os.str();
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << text;
}

inline nlohmann::json final_stats_json(const run_record& rec) {
    nlohmann::json f;
    auto stats_json = [](const accuracy_stats_t& s) {
        return nlohmann::json{{"mean", s.mean},
                              {"min", s.min},
                              {"max", s.max},
                              {"std", s.stddev},
                              {"metric_kind", s.is_risk ? "risk" : "accuracy"}};
    };
    f["train"] = stats_json(rec.final_train);
    f["test"] = stats_json(rec.final_test);
    f["per_client_train"] = rec.per_client_train;
    f["per_client_test"] = rec.per_client_test;
    return f;
}

}  // namespace detail

// Executes the configured algorithm for T rounds (each round = τ local steps
// plus one exchange), personalizes, and persists metrics CSV + topology dump
// + checkpoints + run_record manifest under the run's output directory.
inline run_record run_experiment(const experiment_config& cfg,
                                 const std::string& resume_snapshot = "") {
    const auto t_start = std::chrono::steady_clock::now();
    run_record rec;
    rec.config = config_to_json(cfg);
    rec.algorithm = cfg.algorithm;
    rec.out_dir = resolve_out_dir(cfg);
    std::filesystem::create_directories(rec.out_dir);
    const std::filesystem::path out(rec.out_dir);

    const topology topo = make_topology_from_config(cfg.topology);
    {
        std::ostringstream os;
        save_edge_list(topo, os);
        detail::write_text_file(out / "topology.edges", os.str());
    }

    federation full = make_federation_from_config(cfg.data, cfg.topology.n);
    auto [train, test] = split_train_test(full, cfg.data.test_fraction, cfg.data.seed);
    const objective obj = make_objective(cfg);
    const protocol_options& opts = cfg.protocol;

    std::vector<std::string> csv_lines;
    std::vector<std::string> events;
    sim_state state;
    if (!resume_snapshot.empty()) {
        std::ifstream is(resume_snapshot);
        if (!is) throw invalid_parameter("resume: cannot open snapshot " + resume_snapshot);
        nlohmann::json snap = nlohmann::json::parse(is);
        if (snap.at("config") != rec.config)
            throw invalid_parameter(
                "resume: snapshot was produced by a different configuration");
        state = state_from_json(snap.at("state"), train);
        csv_lines = snap.at("csv_lines").get<std::vector<std::string>>();
    } else if (cfg.algorithm == "fedspd") {
        state = init_state(train, obj, opts);
    } else {
        baseline_kind kind;
        if (cfg.algorithm == "dfl-fedavg") kind = baseline_kind::dfl_fedavg;
        else if (cfg.algorithm == "dfl-ifca") kind = baseline_kind::dfl_ifca;
        else if (cfg.algorithm == "dfl-fedem-style") kind = baseline_kind::dfl_fedem_style;
        else if (cfg.algorithm == "local-only") kind = baseline_kind::local_only;
        else kind = baseline_kind::cfl_fedavg;
        state = init_baseline_state(kind, train, obj, opts);
    }

    const std::filesystem::path csv_path = out / "metrics.csv";
    std::ofstream csv(csv_path, std::ios::binary);
    csv << csv_header(state.bank.n_clusters) << "\n";
    for (const auto& line : csv_lines) csv << line << "\n";
    csv.flush();

    for (int t = state.round + 1; t <= cfg.rounds; ++t) {
        round_metrics m;
        if (cfg.algorithm == "fedspd")
            m = run_round(state, topo, train, obj, opts, &test, &events);
        else if (cfg.algorithm == "dfl-fedavg")
            m = run_dfl_fedavg_round(state, topo, train, obj, opts, &test);
        else if (cfg.algorithm == "dfl-ifca")
            m = run_dfl_ifca_round(state, topo, train, obj, opts, &test);
        else if (cfg.algorithm == "dfl-fedem-style")
            m = run_dfl_fedem_style_round(state, topo, train, obj, opts, &test);
        else if (cfg.algorithm == "local-only")
            m = run_local_round(state, train, obj, opts, &test);
        else
            m = run_cfl_fedavg_round(state, train, obj, opts, &test);
        rec.rounds.push_back(m);
        csv_lines.push_back(csv_row(m, cfg.algorithm));
        csv << csv_lines.back() << "\n";
        csv.flush();

        if (cfg.run.checkpoint_every > 0 && t % cfg.run.checkpoint_every == 0) {
            nlohmann::json snap;
            snap["config"] = rec.config;
            snap["algorithm"] = cfg.algorithm;
            snap["state"] = state_to_json(state, train, cfg.run.seed);
            snap["csv_lines"] = csv_lines;
            detail::write_text_file(out / ("checkpoint_round_" + std::to_string(t) + ".json"),
                                    snap.dump());
        }
    }
    csv.close();

    // final personalization: Eq.-2 aggregation for everyone, fine-tuning only
    // for FedSPD (baselines as published do not fine-tune)
    protocol_options final_opts = opts;
    if (cfg.algorithm != "fedspd") final_opts.fine_tune_epochs = 0;
    const personalized_models personal = finalize(state.bank, state.mixture, train, obj,
                                                  final_opts);
    rec.per_client_train = per_client_accuracy(personal.models, train, obj);
    rec.per_client_test = per_client_accuracy(personal.models, test, obj);
    rec.final_train = summarize(rec.per_client_train, !obj.is_classification());
    rec.final_test = summarize(rec.per_client_test, !obj.is_classification());

    if (!events.empty()) {
        std::ostringstream os;
        for (const auto& e : events) os << e << "\n";
        detail::write_text_file(out / "run.log", os.str());
    }

    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["algorithm"] = cfg.algorithm;
    manifest["config"] = rec.config;
    manifest["rounds_completed"] = cfg.rounds;
    manifest["wall_seconds"] = rec.wall_seconds;
    manifest["final"] = detail::final_stats_json(rec);
    manifest["metrics_csv"] = "metrics.csv";
    detail::write_text_file(out / "run_record.json", manifest.dump(2));
    return rec;
}

// Sweep: one run per expanded cell, each in its own subdirectory.
inline std::vector<run_record> run_sweep(const nlohmann::json& doc,
                                         const std::string& out_root) {
    std::vector<run_record> records;
    for (const auto& cell : expand_sweep(doc)) {
        experiment_config cfg = config_from_json(cell.doc);
        cfg.run.out_dir = out_root + "/" + (cell.name.empty() ? "run" : cell.name);
        records.push_back(run_experiment(cfg));
    }
    return records;
}

// Aligned final-metric table across runs sharing data+topology seeds.
inline std::string compare_runs(const std::vector<nlohmann::json>& manifests) {
    if (manifests.empty()) throw invalid_parameter("compare: no run records given");
    const auto& first_cfg = manifests.front().at("config");
    for (const auto& m : manifests) {
        const auto& cfg = m.at("config");
        if (cfg.at("data").at("seed") != first_cfg.at("data").at("seed") ||
            cfg.at("topology").at("seed") != first_cfg.at("topology").at("seed"))
            throw invalid_parameter(
                "compare: records use different data/topology seeds; the comparison "
                "would be confounded");
    }
    std::vector<const nlohmann::json*> sorted;
    for (const auto& m : manifests) sorted.push_back(&m);
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
        return a->at("algorithm").get<std::string>() < b->at("algorithm").get<std::string>();
    });
    std::ostringstream os;
    os << "algorithm,metric_kind,test_mean,test_std,test_min,test_max,train_mean,train_std\n";
    for (const auto* m : sorted) {
        const auto& te = m->at("final").at("test");
        const auto& tr = m->at("final").at("train");
        os << m->at("algorithm").get<std::string>() << ","
           << te.at("metric_kind").get<std::string>() << ","
           << detail::fmt(te.at("mean").get<double>()) << ","
           << detail::fmt(te.at("std").get<double>()) << ","
           << detail::fmt(te.at("min").get<double>()) << ","
           << detail::fmt(te.at("max").get<double>()) << ","
           << detail::fmt(tr.at("mean").get<double>()) << ","
           << detail::fmt(tr.at("std").get<double>()) << "\n";
    }
    return os.str();
}

// Scans a directory (one level of subdirectories) for run_record.json files.
inline std::string compare_dir(const std::string& dir) {
    std::vector<nlohmann::json> manifests;
    std::vector<std::filesystem::path> candidates;
    const std::filesystem::path root(dir);
    if (std::filesystem::exists(root / "run_record.json"))
        candidates.push_back(root / "run_record.json");
    if (std::filesystem::is_directory(root))
        for (const auto& entry : std::filesystem::directory_iterator(root))
            if (entry.is_directory() &&
                std::filesystem::exists(entry.path() / "run_record.json"))
                candidates.push_back(entry.path() / "run_record.json");
    std::sort(candidates.begin(), candidates.end());
    for (const auto& p : candidates) {
        std::ifstream is(p);
        manifests.push_back(nlohmann::json::parse(is));
    }
    return compare_runs(manifests);
}

}  // namespace fedspd
