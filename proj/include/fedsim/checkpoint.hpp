#pragma once

#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// Versioned JSON model checkpoint. nlohmann serializes doubles with the
// shortest round-trip representation, so save/load is bit-exact.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json spec_to_json(const BackboneSpec& s) {
    return {{"input_dim", s.input_dim},
            {"layer_dims", s.layer_dims},
            {"activation", s.activation == Activation::relu ? "relu" : "tanh"},
            {"skip_window", s.skip_window}};
}

inline BackboneSpec spec_from_json(const nlohmann::json& j) {
    BackboneSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    const std::string act = j.at("activation").get<std::string>();
    if (act == "relu")
        s.activation = Activation::relu;
    else if (act == "tanh")
        s.activation = Activation::tanh;
    else
        throw ParseError("checkpoint: unknown activation '" + act + "'");
    s.skip_window = j.at("skip_window").get<std::size_t>();
    s.validate();
    return s;
}

inline nlohmann::json model_to_json(const GlobalModel& model) {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["spec"] = spec_to_json(model.spec());
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < model.backbone->weights.size(); ++l)
        layers.push_back({{"weight", model.backbone->weights[l].data},
                          {"bias", model.backbone->biases[l]}});
    j["backbone"] = std::move(layers);
    nlohmann::json adapters = nlohmann::json::array();
    for (const TaskAdapter& a : model.adapters) {
        nlohmann::json ja;
        ja["task_id"] = a.task_id;
        ja["classes"] = a.classes();
        nlohmann::json proxies = nlohmann::json::array();
        for (const auto& p : a.proxies)
            proxies.push_back({{"from", p.from}, {"to", p.to}, {"weight", p.weight.data}});
        ja["proxies"] = std::move(proxies);
        nlohmann::json gates = nlohmann::json::array();
        for (const auto& g : a.gates)
            gates.push_back({{"from", g.from}, {"to", g.to}, {"logit", g.logit}});
        ja["gates"] = std::move(gates);
        ja["head_w"] = a.head_w.data;
        ja["head_b"] = a.head_b;
        adapters.push_back(std::move(ja));
    }
    j["adapters"] = std::move(adapters);
    return j;
}

inline GlobalModel model_from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version");
    const BackboneSpec spec = spec_from_json(j.at("spec"));
    const std::size_t L = spec.depth();

    auto backbone = std::make_shared<Backbone>();
    backbone->spec = spec;
    const auto& layers = j.at("backbone");
    if (layers.size() != L) throw ParseError("checkpoint: backbone layer count mismatch");
    for (std::size_t l = 1; l <= L; ++l) {
        Matrix w(spec.dim(l), spec.dim(l - 1));
        w.data = layers[l - 1].at("weight").get<std::vector<double>>();
        if (w.data.size() != w.rows * w.cols)
            throw ParseError("checkpoint: backbone weight size mismatch");
        backbone->weights.push_back(std::move(w));
        auto b = layers[l - 1].at("bias").get<std::vector<double>>();
        if (b.size() != spec.dim(l)) throw ParseError("checkpoint: backbone bias size mismatch");
        backbone->biases.push_back(std::move(b));
    }

    GlobalModel model;
    model.backbone = backbone;
    std::size_t classes = 0;
    for (const auto& ja : j.at("adapters")) {
        TaskAdapter a;
        a.task_id = ja.at("task_id").get<std::size_t>();
        classes = ja.at("classes").get<std::size_t>();
        for (const auto& jp : ja.at("proxies")) {
            ProxyBlock p;
            p.from = jp.at("from").get<std::size_t>();
            p.to = jp.at("to").get<std::size_t>();
            p.weight = Matrix(spec.dim(p.to), spec.dim(p.from));
            p.weight.data = jp.at("weight").get<std::vector<double>>();
            if (p.weight.data.size() != p.weight.rows * p.weight.cols)
                throw ParseError("checkpoint: proxy weight size mismatch");
            a.proxies.push_back(std::move(p));
        }
        for (const auto& jg : ja.at("gates"))
            a.gates.push_back({jg.at("from").get<std::size_t>(), jg.at("to").get<std::size_t>(),
                               jg.at("logit").get<double>()});
        a.head_w = Matrix(classes, spec.dim(L));
        a.head_w.data = ja.at("head_w").get<std::vector<double>>();
        if (a.head_w.data.size() != classes * spec.dim(L))
            throw ParseError("checkpoint: head size mismatch");
        a.head_b = ja.at("head_b").get<std::vector<double>>();
        model.adapters.push_back(std::move(a));
    }
    if (model.adapters.empty()) throw ParseError("checkpoint: no adapters");
    model.adapter_layout = make_adapter_layout(spec, classes);
    return model;
}

inline void save_model(const GlobalModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("save_model: cannot open '" + path + "'");
    out << model_to_json(model).dump(2) << "\n";
}

inline GlobalModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_model: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("load_model: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace fedsim
