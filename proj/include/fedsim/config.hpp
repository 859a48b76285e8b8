#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/model.hpp"
#include "fedsim/schedule.hpp"

namespace fedsim {

/// Full experiment description. Defaults mirror the reference setup:
/// N=5 clients, T=10 tasks, R=300 rounds (Q=30), K=2 local epochs, client
/// SGD at mu=0.05, FEDADAM server at eta=0.5, IID partition, async ordering.
struct ExperimentConfig {
    // Data source: csv_path wins when nonempty, otherwise synthetic blobs.
    std::string csv_path;
    std::size_t synth_classes = 20;
    std::size_t synth_dim = 32;
    std::size_t synth_per_class = 100;
    double synth_spread = 0.3;

    std::size_t tasks = 10;         // T
    std::size_t clients = 5;        // N
    std::size_t rounds = 300;       // R
    std::size_t local_epochs = 2;   // K
    OrderingCase ordering = OrderingCase::async_fcl;

    double client_lr = 0.05;  // mu
    std::size_t batch_size = 32;  // 0 = full batch

    ServerKind server = ServerKind::fedadam;
    double eta = 0.5;
    double beta1 = kBeta1Unset;  // resolved per server kind when left unset
    double beta2 = 0.99;
    double tau = 1e-3;
    Weighting weighting = Weighting::sample_weighted;

    bool dirichlet = false;
    double dirichlet_alpha = 0.5;
    double drop_prob = 0.0;
    double test_fraction = 0.2;
    bool shuffle_classes = false;

    std::vector<std::size_t> layer_dims = {32, 24, 16};
    Activation activation = Activation::relu;
    std::size_t skip_window = 2;

    std::uint64_t master_seed = 1;
    std::string output_dir = "out";
    bool emit_svg = false;

    static constexpr double kBeta1Unset = -1.0;

    double resolved_beta1() const {
        if (beta1 != kBeta1Unset) return beta1;
        return server == ServerKind::fedsgd ? 0.0 : 0.9;
    }
};

namespace detail {

inline OrderingCase parse_ordering(const std::string& s) {
    if (s == "fmtl") return OrderingCase::fmtl;
    if (s == "sync") return OrderingCase::sync_fcl;
    if (s == "async") return OrderingCase::async_fcl;
    throw ConfigError("config: case must be fmtl|sync|async, got '" + s + "'");
}

inline ServerKind parse_server(const std::string& s) {
    if (s == "fedsgd") return ServerKind::fedsgd;
    if (s == "fedadam") return ServerKind::fedadam;
    if (s == "fedadagrad") return ServerKind::fedadagrad;
    if (s == "fedyogi") return ServerKind::fedyogi;
    throw ConfigError("config: server must be fedsgd|fedadam|fedadagrad|fedyogi, got '" + s + "'");
}

inline Weighting parse_weighting(const std::string& s) {
    if (s == "sample_weighted") return Weighting::sample_weighted;
    if (s == "unweighted_mean") return Weighting::unweighted_mean;
    if (s == "unweighted_sum") return Weighting::unweighted_sum;
    throw ConfigError("config: weighting must be sample_weighted|unweighted_mean|unweighted_sum");
}

inline double as_double(const std::string& key, const nlohmann::json& v) {
    try {
        if (v.is_string()) return std::stod(v.get<std::string>());
        return v.get<double>();
    } catch (...) {
        throw ConfigError("config: key '" + key + "' must be a number");
    }
}

inline std::uint64_t as_uint(const std::string& key, const nlohmann::json& v) {
    try {
        if (v.is_string()) return std::stoull(v.get<std::string>());
        if (v.is_number_integer() && v.get<long long>() < 0)
            throw ConfigError("config: key '" + key + "' must be nonnegative");
        return v.get<std::uint64_t>();
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        throw ConfigError("config: key '" + key + "' must be a nonnegative integer");
    }
}

inline bool as_bool(const std::string& key, const nlohmann::json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
    }
    throw ConfigError("config: key '" + key + "' must be a boolean");
}

inline std::string as_string(const std::string& key, const nlohmann::json& v) {
    if (!v.is_string()) throw ConfigError("config: key '" + key + "' must be a string");
    return v.get<std::string>();
}

}  // namespace detail

/// Applies one flat key to the config. Unknown keys and type mismatches
/// raise ConfigError naming the key. Setting alpha switches the partition to
/// dirichlet; an explicit later "partition" key still wins.
inline void set_config_key(ExperimentConfig& c, const std::string& key,
                           const nlohmann::json& value) {
    using namespace detail;
    if (key == "csv") c.csv_path = as_string(key, value);
    else if (key == "classes") c.synth_classes = as_uint(key, value);
    else if (key == "dim") c.synth_dim = as_uint(key, value);
    else if (key == "per_class") c.synth_per_class = as_uint(key, value);
    else if (key == "spread") c.synth_spread = as_double(key, value);
    else if (key == "tasks") c.tasks = as_uint(key, value);
    else if (key == "clients") c.clients = as_uint(key, value);
    else if (key == "rounds") c.rounds = as_uint(key, value);
    else if (key == "local_epochs") c.local_epochs = as_uint(key, value);
    else if (key == "case") c.ordering = parse_ordering(as_string(key, value));
    else if (key == "mu") c.client_lr = as_double(key, value);
    else if (key == "batch_size") c.batch_size = as_uint(key, value);
    else if (key == "server") c.server = parse_server(as_string(key, value));
    else if (key == "eta") c.eta = as_double(key, value);
    else if (key == "beta1") c.beta1 = as_double(key, value);
    else if (key == "beta2") c.beta2 = as_double(key, value);
    else if (key == "tau") c.tau = as_double(key, value);
    else if (key == "weighting") c.weighting = parse_weighting(as_string(key, value));
    else if (key == "partition") {
        const std::string s = as_string(key, value);
        if (s == "iid") c.dirichlet = false;
        else if (s == "dirichlet") c.dirichlet = true;
        else throw ConfigError("config: partition must be iid|dirichlet, got '" + s + "'");
    }
    else if (key == "alpha") {
        c.dirichlet_alpha = as_double(key, value);
        c.dirichlet = true;
    }
    else if (key == "drop_prob") c.drop_prob = as_double(key, value);
    else if (key == "test_fraction") c.test_fraction = as_double(key, value);
    else if (key == "shuffle_classes") c.shuffle_classes = as_bool(key, value);
    else if (key == "layer_dims") {
        std::vector<std::size_t> dims;
        if (value.is_array()) {
            for (const auto& v : value) dims.push_back(as_uint(key, v));
        } else if (value.is_string()) {
            std::stringstream ss(value.get<std::string>());
            std::string tok;
            while (std::getline(ss, tok, ','))
                if (!tok.empty()) dims.push_back(as_uint(key, nlohmann::json(tok)));
        } else {
            throw ConfigError("config: layer_dims must be an array or comma list");
        }
        if (dims.empty()) throw ConfigError("config: layer_dims must be nonempty");
        c.layer_dims = std::move(dims);
    }
    else if (key == "activation") {
        const std::string s = as_string(key, value);
        if (s == "relu") c.activation = Activation::relu;
        else if (s == "tanh") c.activation = Activation::tanh;
        else throw ConfigError("config: activation must be relu|tanh, got '" + s + "'");
    }
    else if (key == "skip_window") c.skip_window = as_uint(key, value);
    else if (key == "seed") c.master_seed = as_uint(key, value);
    else if (key == "out") c.output_dir = as_string(key, value);
    else if (key == "emit_svg") c.emit_svg = as_bool(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline void validate_config(const ExperimentConfig& c) {
    if (c.tasks == 0) throw ConfigError("config: tasks must be >= 1");
    if (c.clients == 0) throw ConfigError("config: clients must be >= 1");
    if (c.rounds == 0) throw ConfigError("config: rounds must be >= 1");
    if (c.rounds % c.tasks != 0)
        throw ConfigError("config: tasks=" + std::to_string(c.tasks) + " does not divide rounds=" +
                          std::to_string(c.rounds));
    if (c.local_epochs == 0) throw ConfigError("config: local_epochs must be >= 1");
    if (c.client_lr < 0.0) throw ConfigError("config: mu must be >= 0");
    if (!(c.eta > 0.0)) throw ConfigError("config: eta must be > 0");
    const double b1 = c.resolved_beta1();
    if (b1 < 0.0 || b1 >= 1.0) throw ConfigError("config: beta1 must be in [0, 1)");
    if (c.beta2 < 0.0 || c.beta2 >= 1.0) throw ConfigError("config: beta2 must be in [0, 1)");
    if (is_adaptive(c.server) && !(c.tau > 0.0))
        throw ConfigError("config: tau must be > 0 for adaptive server kinds");
    if (c.dirichlet && !(c.dirichlet_alpha > 0.0)) throw ConfigError("config: alpha must be > 0");
    if (c.drop_prob < 0.0 || c.drop_prob > 1.0)
        throw ConfigError("config: drop_prob must be in [0, 1]");
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0))
        throw ConfigError("config: test_fraction must be in (0, 1)");
    if (c.csv_path.empty()) {
        if (c.synth_classes < 2) throw ConfigError("config: classes must be >= 2");
        if (!(c.synth_spread > 0.0)) throw ConfigError("config: spread must be > 0");
    }
    BackboneSpec spec{c.csv_path.empty() ? c.synth_dim : 1, c.layer_dims, c.activation,
                      c.skip_window};
    spec.validate();
}

/// Loads a flat JSON config file (empty file = all defaults) and applies the
/// command-line overrides on top. Override values arrive as strings and are
/// coerced per key.
inline ExperimentConfig load_config(const std::string& path,
                                    const std::map<std::string, std::string>& overrides = {}) {
    ExperimentConfig c;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open '" + path + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string text = buf.str();
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(text);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
            }
            if (!j.is_object()) throw ConfigError("config: top level must be an object");
            for (const auto& [key, value] : j.items()) set_config_key(c, key, value);
        }
    }
    for (const auto& [key, value] : overrides) set_config_key(c, key, nlohmann::json(value));
    validate_config(c);
    return c;
}

/// Canonical echo of a resolved config; also the sweep/run reproduction
/// recipe. The output directory is deliberately omitted: it does not affect
/// the experiment, and the summary must not depend on where it is written.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    if (!c.csv_path.empty()) j["csv"] = c.csv_path;
    j["classes"] = c.synth_classes;
    j["dim"] = c.synth_dim;
    j["per_class"] = c.synth_per_class;
    j["spread"] = c.synth_spread;
    j["tasks"] = c.tasks;
    j["clients"] = c.clients;
    j["rounds"] = c.rounds;
    j["local_epochs"] = c.local_epochs;
    j["case"] = ordering_name(c.ordering);
    j["mu"] = c.client_lr;
    j["batch_size"] = c.batch_size;
    j["server"] = server_kind_name(c.server);
    j["eta"] = c.eta;
    j["beta1"] = c.resolved_beta1();
    j["beta2"] = c.beta2;
    j["tau"] = c.tau;
    j["weighting"] = weighting_name(c.weighting);
    j["partition"] = c.dirichlet ? "dirichlet" : "iid";
    j["alpha"] = c.dirichlet_alpha;
    j["drop_prob"] = c.drop_prob;
    j["test_fraction"] = c.test_fraction;
    j["shuffle_classes"] = c.shuffle_classes;
    j["layer_dims"] = c.layer_dims;
    j["activation"] = c.activation == Activation::relu ? "relu" : "tanh";
    j["skip_window"] = c.skip_window;
    j["seed"] = c.master_seed;
    j["emit_svg"] = c.emit_svg;
    return j;
}

}  // namespace fedsim
