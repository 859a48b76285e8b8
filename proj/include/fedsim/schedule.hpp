#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// The three task-ordering regimes. fmtl resamples a task per (round,
/// client); sync_fcl walks tasks in order, one per phase, on every client;
/// async_fcl walks each client's private task permutation, one per phase.
enum class OrderingCase { fmtl, sync_fcl, async_fcl };

inline const char* ordering_name(OrderingCase c) {
    switch (c) {
        case OrderingCase::fmtl: return "fmtl";
        case OrderingCase::sync_fcl: return "sync";
        case OrderingCase::async_fcl: return "async";
    }
    return "?";
}

/// Pure function of (R, T, N, ordering, master_seed). Training splits into T
/// phases of Q = R/T rounds; a client stays on one task for a whole phase.
struct Schedule {
    std::size_t rounds = 0;     // R
    std::size_t tasks = 0;      // T
    std::size_t phase_len = 0;  // Q = R/T
    std::size_t clients = 0;    // N
    OrderingCase ordering = OrderingCase::async_fcl;
    std::uint64_t master_seed = 0;
    std::vector<std::vector<std::size_t>> permutations;  // [client][phase] -> task, async only

    /// 0-based phase of a 1-indexed round.
    std::size_t phase(std::size_t round) const { return (round - 1) / phase_len; }
};

inline Schedule build_schedule(std::size_t R, std::size_t T, std::size_t N, OrderingCase ordering,
                               std::uint64_t master_seed) {
    if (T == 0 || N == 0) throw ConfigError("build_schedule: T and N must be >= 1");
    if (R % T != 0)
        throw ConfigError("build_schedule: T=" + std::to_string(T) + " does not divide R=" +
                          std::to_string(R));
    Schedule s;
    s.rounds = R;
    s.tasks = T;
    s.phase_len = R / T;
    s.clients = N;
    s.ordering = ordering;
    s.master_seed = master_seed;
    if (ordering == OrderingCase::async_fcl) {
        Rng rng = derive_stream(master_seed, 0, 0, Purpose::schedule);
        for (std::size_t c = 0; c < N; ++c) {
            std::vector<std::size_t> perm(T);
            std::iota(perm.begin(), perm.end(), 0);
            rng.shuffle(perm);
            s.permutations.push_back(std::move(perm));
        }
    }
    return s;
}

/// Task assigned to client c in (1-indexed) round r.
inline std::size_t task_for(const Schedule& s, std::size_t round, std::size_t client) {
    if (round < 1 || round > s.rounds)
        throw std::out_of_range("task_for: round " + std::to_string(round) + " outside [1, R]");
    switch (s.ordering) {
        case OrderingCase::fmtl: {
            Rng rng = derive_stream(s.master_seed, round, client, Purpose::task_assign);
            return rng.next_below(s.tasks);
        }
        case OrderingCase::sync_fcl:
            return s.phase(round);
        case OrderingCase::async_fcl:
            return s.permutations[client][s.phase(round)];
    }
    throw std::logic_error("task_for: bad ordering");
}

/// Groups the surviving clients of a round into per-task participant sets.
/// Tasks with no participants are absent from the map.
inline std::map<std::size_t, std::vector<std::size_t>> participants(
    const Schedule& s, std::size_t round, const std::vector<std::size_t>& surviving) {
    std::map<std::size_t, std::vector<std::size_t>> by_task;
    for (std::size_t c : surviving) by_task[task_for(s, round, c)].push_back(c);
    return by_task;
}

/// Full per-round per-client assignment table for audit.
inline nlohmann::json schedule_to_json(const Schedule& s) {
    nlohmann::json rounds = nlohmann::json::array();
    for (std::size_t r = 1; r <= s.rounds; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < s.clients; ++c) row.push_back(task_for(s, r, c));
        rounds.push_back(std::move(row));
    }
    return {{"case", ordering_name(s.ordering)},
            {"rounds", s.rounds},
            {"tasks", s.tasks},
            {"phase_len", s.phase_len},
            {"clients", s.clients},
            {"assignment", std::move(rounds)}};
}

}  // namespace fedsim
