#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// Labeled feature matrix. Labels are dense in [0, class_count).
struct Dataset {
    Matrix X;  // n x d
    std::vector<std::size_t> y;
    std::size_t class_count = 0;

    std::size_t size() const { return X.rows; }
    std::size_t dim() const { return X.cols; }
};

/// One continual-learning task: a disjoint class group with its train/test
/// datasets. Labels are remapped to [0, classes_per_task) in ascending
/// original-class order.
struct TaskData {
    std::vector<std::size_t> class_ids;  // original class ids
    Dataset train;
    Dataset test;
};

struct TaskSplit {
    std::vector<TaskData> tasks;
    std::size_t task_count() const { return tasks.size(); }
};

/// (task, client) -> index list into that task's train dataset. Within a
/// task the client shards are disjoint and cover every train index.
struct ClientPartition {
    std::size_t client_count = 0;
    std::vector<std::vector<std::vector<std::size_t>>> shards;  // [task][client]

    const std::vector<std::size_t>& shard(std::size_t task, std::size_t client) const {
        return shards[task][client];
    }
};

/// Gaussian blobs: class means drawn uniformly on the unit sphere in R^dim,
/// samples mean + N(0, spread^2 I). Sample order is class-major, so label
/// blocks are contiguous and exactly balanced.
inline Dataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t per_class,
                           double spread, Rng& rng) {
    if (classes < 2) throw ConfigError("synth_blobs: classes must be >= 2");
    if (dim == 0 || per_class == 0) throw ConfigError("synth_blobs: dim and per_class must be >= 1");
    if (!(spread > 0.0)) throw ConfigError("synth_blobs: spread must be > 0");

    std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
    for (auto& m : means) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : m) {
                v = rng.next_gaussian();
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& v : m) v /= norm;
    }

    Dataset ds;
    ds.class_count = classes;
    ds.X = Matrix(classes * per_class, dim);
    ds.y.resize(classes * per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t s = 0; s < per_class; ++s, ++row) {
            for (std::size_t j = 0; j < dim; ++j)
                ds.X.at(row, j) = means[c][j] + spread * rng.next_gaussian();
            ds.y[row] = c;
        }
    return ds;
}

/// Parses "label,f1,...,fd" rows. Feature width is fixed by the first row;
/// ragged rows, non-numeric fields, and negative labels fail with the
/// 1-indexed line number.
inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_csv: cannot open '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    std::size_t width = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() < 2)
            throw ParseError("load_csv: line " + std::to_string(lineno) + ": need label and features");

        long long label = 0;
        {
            const std::string& f = fields[0];
            auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
            if (ec != std::errc() || p != f.data() + f.size())
                throw ParseError("load_csv: line " + std::to_string(lineno) + ": bad label '" + f + "'");
            if (label < 0)
                throw ParseError("load_csv: line " + std::to_string(lineno) + ": negative label");
        }
        std::vector<double> feat(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const std::string& f = fields[i];
            auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), feat[i - 1]);
            if (ec != std::errc() || p != f.data() + f.size())
                throw ParseError("load_csv: line " + std::to_string(lineno) + ": bad field '" + f + "'");
        }
        if (width == 0)
            width = feat.size();
        else if (feat.size() != width)
            throw ParseError("load_csv: line " + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(feat));
        labels.push_back(static_cast<std::size_t>(label));
    }
    if (rows.empty()) throw ParseError("load_csv: '" + path + "' holds no data rows");

    Dataset ds;
    ds.X = Matrix(rows.size(), width);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), ds.X.data.begin() + r * width);
    ds.y = std::move(labels);
    ds.class_count = *std::max_element(ds.y.begin(), ds.y.end()) + 1;
    return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("write_csv: cannot open '" + path + "'");
    char buf[64];
    for (std::size_t r = 0; r < ds.size(); ++r) {
        out << ds.y[r];
        for (std::size_t c = 0; c < ds.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.X.at(r, c));
            out << ',' << buf;
        }
        out << '\n';
    }
}

/// Splits classes into T contiguous ascending blocks and holds out a per-class
/// stratified test fraction. Set shuffle_classes to randomize which classes
/// land in which task (the block structure stays intact).
inline TaskSplit split_tasks(const Dataset& ds, std::size_t T, double test_fraction, Rng& rng,
                             bool shuffle_classes = false) {
    if (T == 0) throw ConfigError("split_tasks: T must be >= 1");
    if (ds.class_count % T != 0)
        throw ConfigError("split_tasks: class_count " + std::to_string(ds.class_count) +
                          " not divisible by T " + std::to_string(T));
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("split_tasks: test_fraction must be in (0, 1)");

    std::vector<std::size_t> class_order(ds.class_count);
    std::iota(class_order.begin(), class_order.end(), 0);
    if (shuffle_classes) rng.shuffle(class_order);

    // Per-class sample indices in dataset order.
    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.y[i]].push_back(i);

    const std::size_t classes_per_task = ds.class_count / T;
    TaskSplit split;
    split.tasks.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        TaskData& td = split.tasks[t];
        td.class_ids.assign(class_order.begin() + t * classes_per_task,
                            class_order.begin() + (t + 1) * classes_per_task);
        std::sort(td.class_ids.begin(), td.class_ids.end());

        std::vector<std::pair<std::size_t, std::size_t>> train_rows, test_rows;  // (ds index, new label)
        for (std::size_t local = 0; local < classes_per_task; ++local) {
            std::vector<std::size_t> idx = by_class[td.class_ids[local]];
            rng.shuffle(idx);
            // Rounded test count, but never the whole class.
            std::size_t n_test = static_cast<std::size_t>(
                std::llround(static_cast<double>(idx.size()) * test_fraction));
            if (!idx.empty() && n_test >= idx.size()) n_test = idx.size() - 1;
            for (std::size_t i = 0; i < idx.size(); ++i)
                (i < n_test ? test_rows : train_rows).emplace_back(idx[i], local);
        }

        auto build = [&](const std::vector<std::pair<std::size_t, std::size_t>>& sel) {
            Dataset out;
            out.class_count = classes_per_task;
            out.X = Matrix(sel.size(), ds.dim());
            out.y.resize(sel.size());
            for (std::size_t r = 0; r < sel.size(); ++r) {
                std::copy_n(ds.X.data.begin() + sel[r].first * ds.dim(), ds.dim(),
                            out.X.data.begin() + r * ds.dim());
                out.y[r] = sel[r].second;
            }
            return out;
        };
        td.train = build(train_rows);
        td.test = build(test_rows);
    }
    return split;
}

/// Shuffles each task's train indices and deals them round-robin; client
/// shares per task differ by at most one sample.
inline ClientPartition partition_iid(const TaskSplit& split, std::size_t N, Rng& rng) {
    if (N == 0) throw ConfigError("partition_iid: N must be >= 1");
    ClientPartition part;
    part.client_count = N;
    part.shards.resize(split.task_count());
    for (std::size_t t = 0; t < split.task_count(); ++t) {
        part.shards[t].resize(N);
        std::vector<std::size_t> idx(split.tasks[t].train.size());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i) part.shards[t][i % N].push_back(idx[i]);
    }
    return part;
}

/// Per class, draws client proportions from Dirichlet(alpha * 1_N) and deals
/// that class's train samples by largest-remainder rounding, so shards stay
/// disjoint and exhaustive. Low alpha gives strongly skewed label mixes;
/// empty client shards are permitted.
inline ClientPartition partition_dirichlet(const TaskSplit& split, std::size_t N, double alpha,
                                           Rng& rng) {
    if (N == 0) throw ConfigError("partition_dirichlet: N must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("partition_dirichlet: alpha must be > 0");
    ClientPartition part;
    part.client_count = N;
    part.shards.resize(split.task_count());
    for (std::size_t t = 0; t < split.task_count(); ++t) {
        part.shards[t].resize(N);
        const Dataset& train = split.tasks[t].train;
        std::vector<std::vector<std::size_t>> by_class(train.class_count);
        for (std::size_t i = 0; i < train.size(); ++i) by_class[train.y[i]].push_back(i);

        for (std::size_t c = 0; c < by_class.size(); ++c) {
            std::vector<std::size_t>& idx = by_class[c];
            rng.shuffle(idx);
            const std::size_t n = idx.size();
            if (n == 0) continue;

            std::vector<double> p(N);
            double sum = 0.0;
            for (double& v : p) {
                v = rng.next_gamma(alpha);
                sum += v;
            }
            for (double& v : p) v /= sum;

            // Largest-remainder rounding of n * p into integer counts.
            std::vector<std::size_t> counts(N);
            std::vector<std::pair<double, std::size_t>> frac(N);
            std::size_t assigned = 0;
            for (std::size_t i = 0; i < N; ++i) {
                const double exact = static_cast<double>(n) * p[i];
                counts[i] = static_cast<std::size_t>(std::floor(exact));
                assigned += counts[i];
                frac[i] = {exact - std::floor(exact), i};
            }
            std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (std::size_t r = 0; r < n - assigned; ++r) ++counts[frac[r].second];

            std::size_t pos = 0;
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t k = 0; k < counts[i]; ++k) part.shards[t][i].push_back(idx[pos++]);
        }
    }
    return part;
}

/// Audit manifest: shards[task][client] = sorted index list.
inline nlohmann::json partition_to_json(const ClientPartition& part) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& task_shards : part.shards) {
        nlohmann::json clients = nlohmann::json::array();
        for (const auto& shard : task_shards) {
            std::vector<std::size_t> sorted = shard;
            std::sort(sorted.begin(), sorted.end());
            clients.push_back(sorted);
        }
        tasks.push_back(std::move(clients));
    }
    return {{"tasks", std::move(tasks)}};
}

/// Materializes a client's shard of a task's train data as a batch source.
inline Dataset gather_shard(const Dataset& train, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.class_count = train.class_count;
    out.X = Matrix(indices.size(), train.dim());
    out.y.resize(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        std::copy_n(train.X.data.begin() + indices[r] * train.dim(), train.dim(),
                    out.X.data.begin() + r * train.dim());
        out.y[r] = train.y[indices[r]];
    }
    return out;
}

}  // namespace fedsim
