#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/data.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/schedule.hpp"
#include "fedsim/svg.hpp"

namespace fedsim {

struct RunResult {
    double final_acc = 0.0;
    std::optional<double> bwt;  // absent when Q < 2
    std::uint64_t total_c2s_bytes = 0;
    std::uint64_t total_s2c_bytes = 0;
    std::vector<std::string> files;
    double wall_seconds = 0.0;
};

inline Dataset build_dataset(const ExperimentConfig& cfg) {
    if (!cfg.csv_path.empty()) return load_csv(cfg.csv_path);
    Rng rng = derive_stream(cfg.master_seed, 0, 0, Purpose::data_synth);
    return synth_blobs(cfg.synth_classes, cfg.synth_dim, cfg.synth_per_class, cfg.synth_spread,
                       rng);
}

/// In-memory result of a full training loop, before any files are written.
struct TrainingArtifacts {
    GlobalModel model;
    AccuracyMatrix acc_matrix;
    DriftSeries drift;
    Schedule schedule;
    ClientPartition partition;
    std::uint64_t total_c2s = 0;
    std::uint64_t total_s2c = 0;
};

/// Runs the full round loop: schedule -> stragglers -> broadcast -> local
/// training -> per-task aggregation -> server step -> evaluation. Everything
/// downstream of (config, master_seed) is deterministic; failures are
/// annotated with the (round, client, task) position where they occurred.
inline TrainingArtifacts run_training(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const std::uint64_t seed = cfg.master_seed;

    const Dataset ds = build_dataset(cfg);
    Rng split_rng = derive_stream(seed, 0, 0, Purpose::task_split);
    const TaskSplit split = split_tasks(ds, cfg.tasks, cfg.test_fraction, split_rng,
                                        cfg.shuffle_classes);
    Rng part_rng = derive_stream(seed, 0, 0, Purpose::partition);
    ClientPartition partition =
        cfg.dirichlet ? partition_dirichlet(split, cfg.clients, cfg.dirichlet_alpha, part_rng)
                      : partition_iid(split, cfg.clients, part_rng);

    const BackboneSpec spec{ds.dim(), cfg.layer_dims, cfg.activation, cfg.skip_window};
    Rng init_rng = derive_stream(seed, 0, 0, Purpose::model_init);
    GlobalModel model = init_model(spec, cfg.tasks, ds.class_count / cfg.tasks, init_rng);

    ServerOptState opt = make_server_state(cfg.server, cfg.eta, cfg.resolved_beta1(), cfg.beta2,
                                           cfg.tau, cfg.tasks, model.adapter_layout);
    const Schedule sched = build_schedule(cfg.rounds, cfg.tasks, cfg.clients, cfg.ordering, seed);
    const StragglerPolicy straggler{cfg.drop_prob};

    TrainingArtifacts art{std::move(model), AccuracyMatrix(cfg.tasks, cfg.rounds), DriftSeries{},
                          sched, std::move(partition)};

    std::vector<std::size_t> all_clients(cfg.clients);
    for (std::size_t c = 0; c < cfg.clients; ++c) all_clients[c] = c;

    std::size_t at_round = 0, at_client = 0, at_task = 0;
    try {
        for (std::size_t r = 1; r <= cfg.rounds; ++r) {
            at_round = r;
            Rng strag_rng = derive_stream(seed, r, 0, Purpose::straggler);
            const std::vector<std::size_t> surviving =
                apply_stragglers(all_clients, straggler, strag_rng);
            const auto by_task = participants(sched, r, surviving);

            const GlobalModel before = art.model;  // adapters copied, backbone shared
            std::vector<std::vector<double>> round_samples;
            std::vector<ClientUpdate> round_updates;

            for (const auto& [task, task_clients] : by_task) {
                at_task = task;
                std::vector<ClientUpdate> task_updates;
                for (std::size_t c : task_clients) {
                    at_client = c;
                    const Dataset shard = gather_shard(split.tasks[task].train,
                                                       art.partition.shard(task, c));
                    Rng client_rng = derive_stream(seed, r, c, Purpose::batch_order);
                    auto res = local_train(before, task, shard, cfg.local_epochs, cfg.client_lr,
                                           cfg.batch_size, client_rng);
                    if (!res) continue;  // empty shard: client skips this round
                    res->update.client_id = c;
                    round_samples.push_back(std::move(res->drift_samples));
                    task_updates.push_back(res->update);
                    round_updates.push_back(std::move(res->update));
                }
                const auto pseudo_grad = aggregate_pseudo_gradient(task_updates, cfg.weighting);
                if (pseudo_grad) {
                    ParamVector server_adapter =
                        flatten_adapter(art.model.adapter(task), art.model.adapter_layout);
                    server_step(opt, server_adapter, task, *pseudo_grad);
                    unflatten_adapter(server_adapter, art.model.adapter(task));
                }
            }

            const auto [c2s, s2c] =
                comm_bytes(round_updates, art.model.adapter_layout->total_length());
            art.total_c2s += c2s;
            art.total_s2c += s2c;

            std::vector<double> cos_row(cfg.tasks);
            const auto cos = cosine_drift(before, art.model);
            for (std::size_t t = 0; t < cfg.tasks; ++t) cos_row[t] = cos.at(t);
            art.drift.push_round(round_drift(round_samples, cfg.local_epochs), std::move(cos_row));

            record_round(art.acc_matrix, r, art.model, split);
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("run_experiment failed at round " + std::to_string(at_round) +
                                 ", client " + std::to_string(at_client) + ", task " +
                                 std::to_string(at_task) + ": " + e.what());
    }
    return art;
}

namespace detail {

inline void emit_run_files(const ExperimentConfig& cfg, const TrainingArtifacts& art,
                           RunResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    auto out_path = [&](const std::string& name) {
        return (fs::path(cfg.output_dir) / name).string();
    };

    const std::string acc_csv = out_path("accuracy_matrix.csv");
    write_accuracy_csv(art.acc_matrix, acc_csv);
    result.files.push_back(acc_csv);

    const std::string drift_csv = out_path("drift.csv");
    write_drift_csv(art.drift, cfg.tasks, drift_csv);
    result.files.push_back(drift_csv);

    const std::string sched_json = out_path("schedule.json");
    {
        std::ofstream out(sched_json);
        out << schedule_to_json(art.schedule).dump(2) << "\n";
    }
    result.files.push_back(sched_json);

    const std::string part_json = out_path("partition.json");
    {
        std::ofstream out(part_json);
        out << partition_to_json(art.partition).dump(2) << "\n";
    }
    result.files.push_back(part_json);

    nlohmann::json summary;
    summary["acc"] = result.final_acc;
    if (result.bwt)
        summary["bwt_f"] = *result.bwt;
    else
        summary["bwt_f"] = nullptr;
    nlohmann::json per_task = nlohmann::json::array();
    for (std::size_t t = 0; t < cfg.tasks; ++t)
        per_task.push_back(art.acc_matrix.at(t, cfg.rounds));
    summary["per_task_final"] = std::move(per_task);
    summary["total_c2s_bytes"] = result.total_c2s_bytes;
    summary["total_s2c_bytes"] = result.total_s2c_bytes;
    summary["config_echo"] = config_to_json(cfg);
    summary["master_seed"] = cfg.master_seed;
    const std::string summary_json = out_path("summary.json");
    {
        std::ofstream out(summary_json);
        out << summary.dump(2) << "\n";
    }
    result.files.push_back(summary_json);

    if (cfg.emit_svg) {
        std::vector<SvgSeries> acc_series;
        for (std::size_t t = 0; t < cfg.tasks; ++t) {
            SvgSeries s;
            s.name = "task" + std::to_string(t);
            for (std::size_t r = 1; r <= cfg.rounds; ++r) s.ys.push_back(art.acc_matrix.at(t, r));
            acc_series.push_back(std::move(s));
        }
        const std::string acc_svg = out_path("accuracy.svg");
        emit_svg(acc_series, acc_svg, "Per-task test accuracy", "round", "accuracy");
        result.files.push_back(acc_svg);

        std::vector<SvgSeries> cos_series;
        for (std::size_t t = 0; t < cfg.tasks; ++t) {
            SvgSeries s;
            s.name = "task" + std::to_string(t);
            for (const auto& row : art.drift.cosine) s.ys.push_back(row[t]);
            cos_series.push_back(std::move(s));
        }
        const std::string cos_svg = out_path("cosine_drift.svg");
        emit_svg(cos_series, cos_svg, "Consecutive-round cosine drift", "round", "cosine distance");
        result.files.push_back(cos_svg);

        SvgSeries eq2;
        eq2.name = "eq2_drift";
        for (std::size_t r = 0; r < art.drift.eq2.size(); ++r)
            if (art.drift.eq2[r]) {
                eq2.xs.push_back(static_cast<double>(r + 1));
                eq2.ys.push_back(*art.drift.eq2[r]);
            }
        if (!eq2.ys.empty()) {
            const std::string eq2_svg = out_path("eq2_drift.svg");
            emit_svg({eq2}, eq2_svg, "Round client drift", "round", "mean squared deviation");
            result.files.push_back(eq2_svg);
        }
    }
}

}  // namespace detail

/// Full experiment: train, then emit accuracy_matrix.csv, drift.csv,
/// schedule.json, partition.json, summary.json (and SVG charts on request)
/// into cfg.output_dir. Identical (config, seed) runs give byte-identical
/// files.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainingArtifacts art = run_training(cfg);

    RunResult result;
    result.final_acc = acc(art.acc_matrix);
    if (art.schedule.phase_len >= 2)
        result.bwt = bwt_f(art.acc_matrix, art.schedule.phase_len);
    result.total_c2s_bytes = art.total_c2s;
    result.total_s2c_bytes = art.total_s2c;
    detail::emit_run_files(cfg, art, result);

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

inline const std::vector<std::string>& sweepable_axes() {
    static const std::vector<std::string> axes = {"eta",   "mu",        "local_epochs",
                                                  "rounds", "clients",  "alpha",
                                                  "drop_prob", "server", "case"};
    return axes;
}

/// Accepts the short hyperparameter names (K, R, N) as axis aliases.
inline std::string resolve_axis(std::string axis) {
    if (axis == "K") return "local_epochs";
    if (axis == "R") return "rounds";
    if (axis == "N") return "clients";
    return axis;
}

struct SweepRow {
    std::string value;
    std::uint64_t seed = 0;
    double acc = 0.0;
    std::optional<double> bwt;
};

/// Cartesian (value x seed) runs along one config axis. Rows are ordered by
/// value (numeric when the axis is numeric) then seed, independent of
/// execution order. Each run lands in <out>/runs/<axis>=<value>_seed=<seed>/
/// and the table in <out>/sweep.csv.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis_name,
                                   const std::vector<std::string>& values,
                                   const std::vector<std::uint64_t>& seeds) {
    const std::string axis = resolve_axis(axis_name);
    const auto& axes = sweepable_axes();
    if (std::find(axes.begin(), axes.end(), axis) == axes.end())
        throw ConfigError("sweep: axis '" + axis_name + "' is not sweepable");
    if (values.empty()) throw ConfigError("sweep: no values given");
    if (seeds.empty()) throw ConfigError("sweep: no seeds given");

    std::vector<std::string> ordered_values = values;
    const bool numeric = std::all_of(values.begin(), values.end(), [](const std::string& v) {
        try {
            std::size_t pos = 0;
            (void)std::stod(v, &pos);
            return pos == v.size();
        } catch (...) {
            return false;
        }
    });
    if (numeric)
        std::sort(ordered_values.begin(), ordered_values.end(),
                  [](const std::string& a, const std::string& b) { return std::stod(a) < std::stod(b); });
    else
        std::sort(ordered_values.begin(), ordered_values.end());
    std::vector<std::uint64_t> ordered_seeds = seeds;
    std::sort(ordered_seeds.begin(), ordered_seeds.end());

    namespace fs = std::filesystem;
    std::vector<SweepRow> rows;
    for (const std::string& value : ordered_values)
        for (std::uint64_t s : ordered_seeds) {
            ExperimentConfig cfg = base;
            set_config_key(cfg, axis, nlohmann::json(value));
            cfg.master_seed = s;
            cfg.output_dir = (fs::path(base.output_dir) / "runs" /
                              (axis + "=" + value + "_seed=" + std::to_string(s)))
                                 .string();
            const RunResult r = run_experiment(cfg);
            rows.push_back({value, s, r.final_acc, r.bwt});
        }

    fs::create_directories(base.output_dir);
    std::ofstream out(fs::path(base.output_dir) / "sweep.csv");
    out << "axis,value,seed,acc,bwt_f\n";
    for (const auto& row : rows) {
        out << axis << ',' << row.value << ',' << row.seed << ',' << detail::fmt_g17(row.acc)
            << ',';
        if (row.bwt) out << detail::fmt_g17(*row.bwt);
        out << '\n';
    }
    return rows;
}

}  // namespace fedsim
