#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// What a client uploads after local training: the adapter delta for its
/// task, plus the sample count that weights it in FedAvg aggregation.
struct ClientUpdate {
    std::size_t client_id = 0;
    std::size_t task_id = 0;
    ParamVector delta;
    std::size_t sample_count = 0;
    std::uint64_t upload_bytes = 0;
};

enum class ServerKind { fedsgd, fedadam, fedadagrad, fedyogi };

inline const char* server_kind_name(ServerKind k) {
    switch (k) {
        case ServerKind::fedsgd: return "fedsgd";
        case ServerKind::fedadam: return "fedadam";
        case ServerKind::fedadagrad: return "fedadagrad";
        case ServerKind::fedyogi: return "fedyogi";
    }
    return "?";
}

inline bool is_adaptive(ServerKind k) { return k != ServerKind::fedsgd; }

/// Per-task server optimizer state for the FedOpt family: pseudo-gradient
/// momentum and (for adaptive kinds) the second moment, plus the shared
/// hyperparameters. The second moment starts at tau^2 so the first adaptive
/// step stays bounded.
struct ServerOptState {
    ServerKind kind = ServerKind::fedsgd;
    double eta = 1.0;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double tau = 1e-3;
    std::vector<ParamVector> momentum;       // per task
    std::vector<ParamVector> second_moment;  // per task, adaptive kinds
};

inline ServerOptState make_server_state(ServerKind kind, double eta, double beta1, double beta2,
                                        double tau, std::size_t tasks, const LayoutPtr& layout) {
    if (!(eta > 0.0)) throw ConfigError("server state: eta must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("server state: beta1 must be in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("server state: beta2 must be in [0, 1)");
    if (is_adaptive(kind) && !(tau > 0.0))
        throw ConfigError("server state: tau must be > 0 for adaptive kinds");
    ServerOptState st;
    st.kind = kind;
    st.eta = eta;
    st.beta1 = beta1;
    st.beta2 = beta2;
    st.tau = tau;
    for (std::size_t t = 0; t < tasks; ++t) {
        st.momentum.push_back(ParamVector::zeros(layout));
        ParamVector v = ParamVector::zeros(layout);
        if (is_adaptive(kind))
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = tau * tau;
        st.second_moment.push_back(std::move(v));
    }
    return st;
}

struct StragglerPolicy {
    double drop_prob = 0.0;
};

struct LocalTrainResult {
    ClientUpdate update;
    std::vector<double> drift_samples;  // squared adapter distance after each epoch
};

/// K epochs of mini-batch SGD on adapter(task) only, starting from the
/// server snapshot. Batch order is redrawn from the client stream each
/// epoch; a trailing partial batch is kept. After every epoch the squared
/// distance from the starting adapter is recorded as a drift sample.
/// An empty shard yields nullopt: the client skips this round.
inline std::optional<LocalTrainResult> local_train(const GlobalModel& snapshot, std::size_t task,
                                                   const Dataset& shard, std::size_t epochs,
                                                   double mu, std::size_t batch_size, Rng& rng) {
    if (shard.size() == 0) return std::nullopt;
    if (epochs < 1) throw ConfigError("local_train: epochs must be >= 1");
    if (mu < 0.0) throw ConfigError("local_train: mu must be >= 0");

    GlobalModel work = snapshot;  // backbone shared, adapters copied
    const ParamVector start = flatten_adapter(work.adapter(task), work.adapter_layout);
    ParamVector theta = start;

    const std::size_t n = shard.size();
    const std::size_t bs = (batch_size == 0 || batch_size > n) ? n : batch_size;
    std::vector<std::size_t> order(n);

    LocalTrainResult res;
    for (std::size_t k = 0; k < epochs; ++k) {
        // Each epoch's batch order is a pure function of the stream draws.
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (std::size_t pos = 0; pos < n; pos += bs) {
            const std::size_t len = std::min(bs, n - pos);
            Batch batch;
            batch.X = Matrix(len, shard.dim());
            batch.y.resize(len);
            for (std::size_t i = 0; i < len; ++i) {
                const std::size_t src = order[pos + i];
                std::copy_n(shard.X.data.begin() + src * shard.dim(), shard.dim(),
                            batch.X.data.begin() + i * shard.dim());
                batch.y[i] = shard.y[src];
            }
            auto [loss, grad] = loss_and_grad(work, task, batch);
            (void)loss;
            theta.axpy(-mu, grad);
            unflatten_adapter(theta, work.adapter(task));
        }
        res.drift_samples.push_back(euclid_sq(theta, start));
    }

    res.update.task_id = task;
    res.update.delta = theta - start;
    res.update.sample_count = n;
    res.update.upload_bytes = static_cast<std::uint64_t>(res.update.delta.size()) * 8;
    return res;
}

enum class Weighting { sample_weighted, unweighted_mean, unweighted_sum };

inline const char* weighting_name(Weighting w) {
    switch (w) {
        case Weighting::sample_weighted: return "sample_weighted";
        case Weighting::unweighted_mean: return "unweighted_mean";
        case Weighting::unweighted_sum: return "unweighted_sum";
    }
    return "?";
}

/// Combines one round's updates for a single task into the pseudo-gradient.
/// Summation always runs in ascending client_id order, so the result is
/// independent of arrival order. An empty list yields nullopt (round no-op).
inline std::optional<ParamVector> aggregate_pseudo_gradient(
    const std::vector<ClientUpdate>& updates, Weighting weighting) {
    if (updates.empty()) return std::nullopt;
    std::vector<const ClientUpdate*> ordered;
    ordered.reserve(updates.size());
    for (const auto& u : updates) {
        if (u.task_id != updates.front().task_id)
            throw LayoutError("aggregate_pseudo_gradient: mixed tasks in one aggregation");
        if (u.sample_count == 0)
            throw std::invalid_argument("aggregate_pseudo_gradient: update with zero sample count");
        ordered.push_back(&u);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

    ParamVector acc = ParamVector::zeros(ordered.front()->delta.layout());
    switch (weighting) {
        case Weighting::sample_weighted: {
            double total = 0.0;
            for (const ClientUpdate* u : ordered) {
                acc.axpy(static_cast<double>(u->sample_count), u->delta);
                total += static_cast<double>(u->sample_count);
            }
            acc *= 1.0 / total;
            break;
        }
        case Weighting::unweighted_mean: {
            for (const ClientUpdate* u : ordered) acc += u->delta;
            acc *= 1.0 / static_cast<double>(ordered.size());
            break;
        }
        case Weighting::unweighted_sum: {
            for (const ClientUpdate* u : ordered) acc += u->delta;
            break;
        }
    }
    return acc;
}

namespace detail {
inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}

/// One server update for one task. All kinds first fold the pseudo-gradient
/// into the momentum (beta1 = 0 degrades to plain replacement), then:
///   fedsgd:     P += eta * m
///   fedadagrad: v += m^2
///   fedyogi:    v -= (1 - beta2) * m^2 * sign(v - m^2)
///   fedadam:    v  = beta2 * v + (1 - beta2) * m^2
/// with the adaptive kinds stepping P += eta * m / (sqrt(v) + tau).
inline void server_step(ServerOptState& state, ParamVector& server_adapter, std::size_t task,
                        const ParamVector& pseudo_grad) {
    if (task >= state.momentum.size())
        throw MissingTaskError("server_step: no state for task " + std::to_string(task));
    ParamVector& m = state.momentum[task];
    m.check_same_layout(pseudo_grad, "server_step");
    server_adapter.check_same_layout(pseudo_grad, "server_step");
    if (is_adaptive(state.kind) && !(state.tau > 0.0))
        throw ConfigError("server_step: tau must be > 0 for adaptive kinds");

    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * pseudo_grad[i];

    if (state.kind == ServerKind::fedsgd) {
        server_adapter.axpy(state.eta, m);
        return;
    }

    ParamVector& v = state.second_moment[task];
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double m2 = m[i] * m[i];
        switch (state.kind) {
            case ServerKind::fedadagrad:
                v[i] += m2;
                break;
            case ServerKind::fedyogi:
                v[i] -= (1.0 - state.beta2) * m2 * detail::sign(v[i] - m2);
                break;
            case ServerKind::fedadam:
                v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * m2;
                break;
            case ServerKind::fedsgd:
                break;
        }
        server_adapter[i] += state.eta * m[i] / (std::sqrt(v[i]) + state.tau);
    }
}

/// Independently drops each client with probability drop_prob, consuming one
/// draw per client in the given order. Callers key the rng stream by round.
inline std::vector<std::size_t> apply_stragglers(const std::vector<std::size_t>& clients,
                                                 const StragglerPolicy& policy, Rng& rng) {
    if (policy.drop_prob < 0.0 || policy.drop_prob > 1.0)
        throw ConfigError("apply_stragglers: drop_prob must be in [0, 1]");
    std::vector<std::size_t> surviving;
    surviving.reserve(clients.size());
    for (std::size_t c : clients)
        if (rng.next_double() >= policy.drop_prob) surviving.push_back(c);
    return surviving;
}

/// Per-round communication accounting. Upload cost is what the listed
/// updates carried; broadcast cost charges one adapter-sized message per
/// distinct uploading client.
inline std::pair<std::uint64_t, std::uint64_t> comm_bytes(const std::vector<ClientUpdate>& updates,
                                                          std::size_t broadcast_param_count) {
    std::uint64_t c2s = 0;
    std::vector<std::size_t> recipients;
    for (const auto& u : updates) {
        c2s += u.upload_bytes;
        recipients.push_back(u.client_id);
    }
    std::sort(recipients.begin(), recipients.end());
    recipients.erase(std::unique(recipients.begin(), recipients.end()), recipients.end());
    const std::uint64_t s2c =
        static_cast<std::uint64_t>(broadcast_param_count) * 8 * recipients.size();
    return {c2s, s2c};
}

}  // namespace fedsim
