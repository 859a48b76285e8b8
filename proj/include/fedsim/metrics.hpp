#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/param_vector.hpp"

namespace fedsim {

/// T x R matrix of per-task test accuracy after every round (1-indexed round
/// columns). Each column is written exactly once.
class AccuracyMatrix {
  public:
    AccuracyMatrix(std::size_t tasks, std::size_t rounds)
        : tasks_(tasks), rounds_(rounds), a_(tasks, std::vector<double>(rounds, 0.0)),
          filled_(rounds, false) {}

    std::size_t task_count() const { return tasks_; }
    std::size_t round_count() const { return rounds_; }

    double at(std::size_t task, std::size_t round) const {
        if (task >= tasks_ || round < 1 || round > rounds_)
            throw ProtocolError("AccuracyMatrix::at: index out of range");
        return a_[task][round - 1];
    }

    bool column_filled(std::size_t round) const { return filled_[round - 1]; }
    bool complete() const {
        for (bool f : filled_)
            if (!f) return false;
        return true;
    }

    void set_column(std::size_t round, const std::vector<double>& values) {
        if (round < 1 || round > rounds_)
            throw ProtocolError("AccuracyMatrix: round " + std::to_string(round) + " out of range");
        if (filled_[round - 1])
            throw ProtocolError("AccuracyMatrix: column " + std::to_string(round) +
                                " already recorded");
        if (values.size() != tasks_)
            throw ProtocolError("AccuracyMatrix: wrong column length");
        for (std::size_t t = 0; t < tasks_; ++t) a_[t][round - 1] = values[t];
        filled_[round - 1] = true;
    }

  private:
    std::size_t tasks_, rounds_;
    std::vector<std::vector<double>> a_;
    std::vector<bool> filled_;
};

/// Evaluates the model on every task's held-out test set and stores the
/// result as column r.
inline void record_round(AccuracyMatrix& acc_matrix, std::size_t round, const GlobalModel& model,
                         const TaskSplit& split) {
    std::vector<double> col(split.task_count());
    for (std::size_t t = 0; t < split.task_count(); ++t) {
        const Dataset& test = split.tasks[t].test;
        col[t] = accuracy(model, t, Batch{test.X, test.y});
    }
    acc_matrix.set_column(round, col);
}

/// ACC: mean final-round accuracy over tasks.
inline double acc(const AccuracyMatrix& a) {
    if (!a.complete()) throw ProtocolError("acc: accuracy matrix incomplete");
    double sum = 0.0;
    for (std::size_t t = 0; t < a.task_count(); ++t) sum += a.at(t, a.round_count());
    return sum / static_cast<double>(a.task_count());
}

/// Which column pair measures a phase boundary. `literal` takes the printed
/// formula (columns pQ and pQ-1, the last two rounds inside phase p).
/// `cross_phase` instead differences the first round of the next phase
/// against the last round of phase p, for p = 1..T-1; provided for
/// sensitivity analysis only.
enum class BwtBoundary { literal, cross_phase };

/// Federated negative backward transfer over the phase grid:
///   BWT_f = (1/T^2) sum_t sum_p (A[t, pQ] - A[t, pQ-1])
/// with 1-indexed columns and p = 1..T. Undefined for Q < 2.
inline double bwt_f(const AccuracyMatrix& a, std::size_t phase_len,
                    BwtBoundary mode = BwtBoundary::literal) {
    if (!a.complete()) throw ProtocolError("bwt_f: accuracy matrix incomplete");
    const std::size_t T = a.task_count();
    const std::size_t R = a.round_count();
    if (phase_len == 0 || phase_len * T != R)
        throw ProtocolError("bwt_f: phase_len * tasks must equal rounds");
    if (phase_len < 2)
        throw UndefinedMetricError("bwt_f: undefined for Q=1 (column pQ-1 leaves the phase)");

    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (mode == BwtBoundary::literal) {
            for (std::size_t p = 1; p <= T; ++p)
                sum += a.at(t, p * phase_len) - a.at(t, p * phase_len - 1);
        } else {
            for (std::size_t p = 1; p + 1 <= T; ++p)
                sum += a.at(t, p * phase_len + 1) - a.at(t, p * phase_len);
        }
    }
    return sum / static_cast<double>(T * T);
}

/// Round-level client drift: mean of the per-epoch squared distances over
/// the clients that actually trained. Absent (nullopt) when no client
/// survived the round; never coerced to zero.
inline std::optional<double> round_drift(const std::vector<std::vector<double>>& per_client_samples,
                                         std::size_t epochs) {
    if (epochs < 1) throw ConfigError("round_drift: epochs must be >= 1");
    if (per_client_samples.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& samples : per_client_samples) {
        if (samples.size() != epochs)
            throw ProtocolError("round_drift: client sample count != epochs");
        for (double s : samples) sum += s;
    }
    return sum / static_cast<double>(epochs * per_client_samples.size());
}

/// Per-task cosine distance between the classifier heads of two consecutive
/// server models; the head is the drift proxy for the whole task adapter.
inline std::map<std::size_t, double> cosine_drift(const GlobalModel& prev,
                                                  const GlobalModel& cur) {
    if (prev.task_count() != cur.task_count())
        throw LayoutError("cosine_drift: task count mismatch");
    std::map<std::size_t, double> out;
    for (std::size_t t = 0; t < prev.task_count(); ++t) {
        auto head = [](const TaskAdapter& a) {
            std::vector<double> h = a.head_w.data;
            h.insert(h.end(), a.head_b.begin(), a.head_b.end());
            return h;
        };
        const std::vector<double> hp = head(prev.adapter(t));
        const std::vector<double> hc = head(cur.adapter(t));
        if (hp.size() != hc.size()) throw LayoutError("cosine_drift: head shape mismatch");
        double dot = 0.0, np = 0.0, nc = 0.0;
        for (std::size_t i = 0; i < hp.size(); ++i) {
            dot += hp[i] * hc[i];
            np += hp[i] * hp[i];
            nc += hc[i] * hc[i];
        }
        if (np == 0.0 || nc == 0.0)
            throw UndefinedDistanceError("cosine_drift: zero head for task " + std::to_string(t));
        // Clamp the last-ulp excursions so recorded values stay in [0, 2].
        out[t] = std::min(2.0, std::max(0.0, 1.0 - dot / std::sqrt(np * nc)));
    }
    return out;
}

/// Per-round drift records accumulated by the training loop.
struct DriftSeries {
    std::vector<std::optional<double>> eq2;     // index r-1; absent on all-straggler rounds
    std::vector<std::vector<double>> cosine;    // [r-1][task]

    void push_round(std::optional<double> eq2_value, std::vector<double> cosine_row) {
        eq2.push_back(eq2_value);
        cosine.push_back(std::move(cosine_row));
    }
};

namespace detail {
inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

/// accuracy_matrix.csv: header "task,r1..rR", one row per task.
inline void write_accuracy_csv(const AccuracyMatrix& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("write_accuracy_csv: cannot open '" + path + "'");
    out << "task";
    for (std::size_t r = 1; r <= a.round_count(); ++r) out << ",r" << r;
    out << '\n';
    for (std::size_t t = 0; t < a.task_count(); ++t) {
        out << t;
        for (std::size_t r = 1; r <= a.round_count(); ++r) out << ',' << detail::fmt_g17(a.at(t, r));
        out << '\n';
    }
}

/// drift.csv: "round,eq2_drift,cos_t1..cos_tT"; missing eq2 cells stay empty.
inline void write_drift_csv(const DriftSeries& d, std::size_t tasks, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("write_drift_csv: cannot open '" + path + "'");
    out << "round,eq2_drift";
    for (std::size_t t = 1; t <= tasks; ++t) out << ",cos_t" << t;
    out << '\n';
    for (std::size_t r = 0; r < d.eq2.size(); ++r) {
        out << (r + 1) << ',';
        if (d.eq2[r]) out << detail::fmt_g17(*d.eq2[r]);
        for (std::size_t t = 0; t < tasks; ++t) out << ',' << detail::fmt_g17(d.cosine[r][t]);
        out << '\n';
    }
}

}  // namespace fedsim
