#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class Activation { relu, tanh };

/// Architecture of the shared frozen backbone: an L-layer dense network
/// (L >= 2) plus the skip window k that bounds how far back per-task proxy
/// branches may reach (1 <= k <= L-1).
struct BackboneSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> layer_dims;  // d_1 .. d_L
    Activation activation = Activation::relu;
    std::size_t skip_window = 1;  // k

    std::size_t depth() const { return layer_dims.size(); }

    /// Width of layer l, with l = 0 meaning the input.
    std::size_t dim(std::size_t l) const { return l == 0 ? input_dim : layer_dims[l - 1]; }

    void validate() const {
        if (layer_dims.size() < 2) throw ConfigError("BackboneSpec: need at least 2 layers");
        if (input_dim == 0) throw ConfigError("BackboneSpec: input_dim must be >= 1");
        for (std::size_t d : layer_dims)
            if (d == 0) throw ConfigError("BackboneSpec: layer dims must be >= 1");
        if (skip_window < 1 || skip_window > layer_dims.size() - 1)
            throw ConfigError("BackboneSpec: skip_window must be in [1, L-1]");
    }

    /// First layer a proxy into layer l may start from: max(l-k, 1).
    std::size_t proxy_lo(std::size_t l) const {
        return l > skip_window ? l - skip_window : 1;
    }

    bool operator==(const BackboneSpec&) const = default;
};

/// Frozen shared feature extractor. Weights are set once at initialization
/// and never mutated; clients and server share one instance by pointer.
struct Backbone {
    BackboneSpec spec;
    std::vector<Matrix> weights;              // weights[l-1]: d_l x d_{l-1}
    std::vector<std::vector<double>> biases;  // biases[l-1]: d_l
};

struct ProxyBlock {
    std::size_t from = 0;  // l'
    std::size_t to = 0;    // l
    Matrix weight;         // d_to x d_from
};

struct GateLogit {
    std::size_t from = 0;
    std::size_t to = 0;    // from == to gates the backbone layer itself
    double logit = 0.0;
};

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Per-task trainable parameters: linear proxy branches inside the skip
/// window, one logistic-parameterized gate per branch and per backbone layer
/// (so the gate value always lies in (0,1)), and the classifier head.
/// Proxies and gates are kept in canonical order: destination layer
/// ascending, source layer ascending, with each layer's diagonal gate last.
struct TaskAdapter {
    std::size_t task_id = 0;
    std::vector<ProxyBlock> proxies;
    std::vector<GateLogit> gates;
    Matrix head_w;               // classes x d_L
    std::vector<double> head_b;  // classes

    std::size_t classes() const { return head_w.rows; }
};

/// Builds the flat layout shared by every adapter of a model: proxy blocks,
/// then gate logits, then head weights and bias.
inline LayoutPtr make_adapter_layout(const BackboneSpec& spec, std::size_t classes) {
    const std::size_t L = spec.depth();
    std::vector<LayoutEntry> entries;
    std::size_t off = 0;
    auto push = [&](std::string name, std::size_t len) {
        entries.push_back({std::move(name), off, len});
        off += len;
    };
    for (std::size_t l = 1; l <= L; ++l)
        for (std::size_t f = spec.proxy_lo(l); f < l; ++f)
            push("proxy_" + std::to_string(f) + "_" + std::to_string(l),
                 spec.dim(l) * spec.dim(f));
    for (std::size_t l = 1; l <= L; ++l)
        for (std::size_t f = spec.proxy_lo(l); f <= l; ++f)
            push("alpha_" + std::to_string(f) + "_" + std::to_string(l), 1);
    push("head_w", classes * spec.dim(L));
    push("head_b", classes);
    return std::make_shared<const Layout>(std::move(entries));
}

/// Server-side (and per-client working copy) model state: one frozen shared
/// backbone plus an independent adapter per task. Training one task can never
/// touch another task's parameters.
struct GlobalModel {
    std::shared_ptr<const Backbone> backbone;
    std::vector<TaskAdapter> adapters;
    LayoutPtr adapter_layout;

    const BackboneSpec& spec() const { return backbone->spec; }
    std::size_t task_count() const { return adapters.size(); }

    const TaskAdapter& adapter(std::size_t task) const {
        if (task >= adapters.size())
            throw MissingTaskError("GlobalModel: no adapter for task " + std::to_string(task));
        return adapters[task];
    }
    TaskAdapter& adapter(std::size_t task) {
        if (task >= adapters.size())
            throw MissingTaskError("GlobalModel: no adapter for task " + std::to_string(task));
        return adapters[task];
    }
};

/// Flattens an adapter into the model's canonical layout. Round-trips
/// bit-exactly with unflatten_adapter.
inline ParamVector flatten_adapter(const TaskAdapter& a, const LayoutPtr& layout) {
    std::vector<double> data;
    data.reserve(layout->total_length());
    for (const auto& p : a.proxies) data.insert(data.end(), p.weight.data.begin(), p.weight.data.end());
    for (const auto& g : a.gates) data.push_back(g.logit);
    data.insert(data.end(), a.head_w.data.begin(), a.head_w.data.end());
    data.insert(data.end(), a.head_b.begin(), a.head_b.end());
    return ParamVector(layout, std::move(data));
}

inline void unflatten_adapter(const ParamVector& v, TaskAdapter& a) {
    std::size_t off = 0;
    const std::vector<double>& d = v.data();
    for (auto& p : a.proxies) {
        std::copy_n(d.begin() + off, p.weight.size(), p.weight.data.begin());
        off += p.weight.size();
    }
    for (auto& g : a.gates) g.logit = d[off++];
    std::copy_n(d.begin() + off, a.head_w.size(), a.head_w.data.begin());
    off += a.head_w.size();
    std::copy_n(d.begin() + off, a.head_b.size(), a.head_b.begin());
    off += a.head_b.size();
    if (off != d.size()) throw LayoutError("unflatten_adapter: length mismatch");
}

/// Initializes backbone N(0, 1/sqrt(fan_in)), proxies N(0, 0.01/sqrt(fan_in)),
/// gate logits 0 (gates at 0.5), heads N(0, 1/sqrt(d_L)), biases 0. Draws are
/// consumed in a fixed order, so equal (spec, rng) gives bit-identical models.
inline GlobalModel init_model(const BackboneSpec& spec, std::size_t tasks,
                              std::size_t classes_per_task, Rng& rng) {
    spec.validate();
    if (tasks < 1) throw ConfigError("init_model: tasks must be >= 1");
    if (classes_per_task < 1) throw ConfigError("init_model: classes_per_task must be >= 1");
    const std::size_t L = spec.depth();

    auto backbone = std::make_shared<Backbone>();
    backbone->spec = spec;
    for (std::size_t l = 1; l <= L; ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.dim(l - 1)));
        backbone->weights.push_back(gaussian_fill(rng, spec.dim(l), spec.dim(l - 1), scale));
        backbone->biases.emplace_back(spec.dim(l), 0.0);
    }

    GlobalModel model;
    model.backbone = backbone;
    model.adapter_layout = make_adapter_layout(spec, classes_per_task);
    for (std::size_t t = 0; t < tasks; ++t) {
        TaskAdapter a;
        a.task_id = t;
        for (std::size_t l = 1; l <= L; ++l)
            for (std::size_t f = spec.proxy_lo(l); f < l; ++f) {
                const double scale = 0.01 / std::sqrt(static_cast<double>(spec.dim(f)));
                a.proxies.push_back({f, l, gaussian_fill(rng, spec.dim(l), spec.dim(f), scale)});
            }
        for (std::size_t l = 1; l <= L; ++l)
            for (std::size_t f = spec.proxy_lo(l); f <= l; ++f)
                a.gates.push_back({f, l, 0.0});
        a.head_w = gaussian_fill(rng, classes_per_task, spec.dim(L),
                                 1.0 / std::sqrt(static_cast<double>(spec.dim(L))));
        a.head_b.assign(classes_per_task, 0.0);
        model.adapters.push_back(std::move(a));
    }
    return model;
}

namespace detail {

inline double apply_act(Activation act, double z) {
    return act == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through z and act(z); for tanh the cached output is reused.
inline double act_deriv(Activation act, double z, double a) {
    return act == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

// Gate values for one adapter: diag[l] for backbone layers, proxy_gate[i]
// parallel to adapter.proxies. Relies on the canonical gate order.
struct GateValues {
    std::vector<double> diag;        // index 1..L
    std::vector<double> proxy_gate;  // parallel to proxies
};

inline GateValues gate_values(const TaskAdapter& a, std::size_t L) {
    GateValues gv;
    gv.diag.assign(L + 1, 0.0);
    gv.proxy_gate.reserve(a.proxies.size());
    for (const auto& g : a.gates) {
        if (g.from == g.to)
            gv.diag[g.to] = logistic(g.logit);
        else
            gv.proxy_gate.push_back(logistic(g.logit));
    }
    return gv;
}

}  // namespace detail

/// Activation cache from one forward pass; holds everything backprop needs.
struct ForwardTrace {
    std::vector<std::vector<double>> x;          // x[0]..x[L], combined activations
    std::vector<std::vector<double>> z;          // z[1]..z[L], backbone pre-activations
    std::vector<std::vector<double>> gout;       // act(z[l])
    std::vector<std::vector<double>> proxy_out;  // parallel to adapter.proxies
    std::vector<double> logits;
};

/// Gated forward pass for one input:
///   x_l = a_{l,l} act(W_l x_{l-1} + b_l) + sum_{l'} a_{l',l} P^{(l',l)} x_{l'}
/// with logits = head x_L + bias. Proxy branches are purely linear; the
/// nonlinearity lives inside the backbone layer only.
inline ForwardTrace forward(const GlobalModel& model, std::size_t task,
                            const std::vector<double>& input) {
    const TaskAdapter& a = model.adapter(task);
    const Backbone& bb = *model.backbone;
    const std::size_t L = bb.spec.depth();
    if (input.size() != bb.spec.input_dim)
        throw std::invalid_argument("forward: input dimension mismatch");

    const detail::GateValues gv = detail::gate_values(a, L);
    ForwardTrace tr;
    tr.x.resize(L + 1);
    tr.z.resize(L + 1);
    tr.gout.resize(L + 1);
    tr.proxy_out.resize(a.proxies.size());
    tr.x[0] = input;

    std::size_t pi = 0;
    for (std::size_t l = 1; l <= L; ++l) {
        std::vector<double> z = bb.weights[l - 1].matvec(tr.x[l - 1]);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += bb.biases[l - 1][i];
        std::vector<double> g(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            g[i] = detail::apply_act(bb.spec.activation, z[i]);

        std::vector<double> x(z.size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = gv.diag[l] * g[i];

        while (pi < a.proxies.size() && a.proxies[pi].to == l) {
            const ProxyBlock& p = a.proxies[pi];
            std::vector<double> pout = p.weight.matvec(tr.x[p.from]);
            const double gate = gv.proxy_gate[pi];
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += gate * pout[i];
            tr.proxy_out[pi] = std::move(pout);
            ++pi;
        }
        tr.z[l] = std::move(z);
        tr.gout[l] = std::move(g);
        tr.x[l] = std::move(x);
    }

    tr.logits = a.head_w.matvec(tr.x[L]);
    for (std::size_t i = 0; i < tr.logits.size(); ++i) tr.logits[i] += a.head_b[i];
    return tr;
}

/// Numerically stable softmax.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

struct Batch {
    Matrix X;  // n x input_dim
    std::vector<std::size_t> y;
};

/// Mean softmax cross-entropy over the batch and its exact gradient with
/// respect to the task adapter only (proxies, gate logits, head). The frozen
/// backbone receives no gradient, but gradients do flow through it to reach
/// earlier proxy branches.
inline std::pair<double, ParamVector> loss_and_grad(const GlobalModel& model, std::size_t task,
                                                    const Batch& batch) {
    const TaskAdapter& a = model.adapter(task);
    const Backbone& bb = *model.backbone;
    const std::size_t L = bb.spec.depth();
    const std::size_t n = batch.X.rows;
    if (n == 0) throw EmptyBatchError("loss_and_grad: empty batch");
    for (std::size_t s : batch.y)
        if (s >= a.classes())
            throw std::invalid_argument("loss_and_grad: label out of range");

    const detail::GateValues gv = detail::gate_values(a, L);

    // Gradient accumulators mirror the adapter structure.
    std::vector<Matrix> d_proxy;
    d_proxy.reserve(a.proxies.size());
    for (const auto& p : a.proxies) d_proxy.emplace_back(p.weight.rows, p.weight.cols);
    std::vector<double> d_gate(a.gates.size(), 0.0);
    Matrix d_head_w(a.head_w.rows, a.head_w.cols);
    std::vector<double> d_head_b(a.head_b.size(), 0.0);

    // Positions of each gate in the adapter's gate list, split as in GateValues.
    std::vector<std::size_t> diag_gate_idx(L + 1, 0), proxy_gate_idx;
    proxy_gate_idx.reserve(a.proxies.size());
    for (std::size_t i = 0; i < a.gates.size(); ++i) {
        if (a.gates[i].from == a.gates[i].to)
            diag_gate_idx[a.gates[i].to] = i;
        else
            proxy_gate_idx.push_back(i);
    }

    double loss = 0.0;
    std::vector<double> row(batch.X.cols);
    for (std::size_t s = 0; s < n; ++s) {
        std::copy_n(batch.X.data.begin() + s * batch.X.cols, batch.X.cols, row.begin());
        const ForwardTrace tr = forward(model, task, row);

        const std::vector<double> p = softmax(tr.logits);
        const double m = *std::max_element(tr.logits.begin(), tr.logits.end());
        double lse = 0.0;
        for (double v : tr.logits) lse += std::exp(v - m);
        loss += m + std::log(lse) - tr.logits[batch.y[s]];

        std::vector<double> dlogits = p;
        dlogits[batch.y[s]] -= 1.0;

        // Head.
        for (std::size_t r = 0; r < d_head_w.rows; ++r) {
            for (std::size_t c = 0; c < d_head_w.cols; ++c)
                d_head_w.at(r, c) += dlogits[r] * tr.x[L][c];
            d_head_b[r] += dlogits[r];
        }

        // Reverse accumulation over layers; gx[l] = dLoss/dx_l.
        std::vector<std::vector<double>> gx(L + 1);
        for (std::size_t l = 0; l <= L; ++l) gx[l].assign(bb.spec.dim(l), 0.0);
        gx[L] = a.head_w.matvec_t(dlogits);

        std::size_t pi = a.proxies.size();
        for (std::size_t l = L; l >= 1; --l) {
            const std::vector<double>& g = gx[l];

            // Backbone branch: gate logit, then flow into x_{l-1}.
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * tr.gout[l][i];
            const double gl = gv.diag[l];
            d_gate[diag_gate_idx[l]] += dot * gl * (1.0 - gl);

            std::vector<double> gz(g.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                gz[i] = gl * g[i] * detail::act_deriv(bb.spec.activation, tr.z[l][i], tr.gout[l][i]);
            const std::vector<double> gprev = bb.weights[l - 1].matvec_t(gz);
            for (std::size_t i = 0; i < gprev.size(); ++i) gx[l - 1][i] += gprev[i];

            // Proxy branches ending at l (walk the canonical order backwards).
            while (pi > 0 && a.proxies[pi - 1].to == l) {
                --pi;
                const ProxyBlock& pb = a.proxies[pi];
                const double gate = gv.proxy_gate[pi];
                double pdot = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) pdot += g[i] * tr.proxy_out[pi][i];
                d_gate[proxy_gate_idx[pi]] += pdot * gate * (1.0 - gate);

                Matrix& dP = d_proxy[pi];
                const std::vector<double>& xf = tr.x[pb.from];
                for (std::size_t r = 0; r < dP.rows; ++r)
                    for (std::size_t c = 0; c < dP.cols; ++c)
                        dP.at(r, c) += gate * g[r] * xf[c];

                const std::vector<double> gfrom = pb.weight.matvec_t(g);
                for (std::size_t i = 0; i < gfrom.size(); ++i)
                    gx[pb.from][i] += gate * gfrom[i];
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    loss *= inv_n;
    std::vector<double> flat;
    flat.reserve(model.adapter_layout->total_length());
    for (const auto& m : d_proxy)
        for (double v : m.data) flat.push_back(v * inv_n);
    for (double v : d_gate) flat.push_back(v * inv_n);
    for (double v : d_head_w.data) flat.push_back(v * inv_n);
    for (double v : d_head_b) flat.push_back(v * inv_n);
    return {loss, ParamVector(model.adapter_layout, std::move(flat))};
}

/// Fraction of argmax-correct predictions; ties break to the lowest class.
inline double accuracy(const GlobalModel& model, std::size_t task, const Batch& test) {
    if (test.X.rows == 0) throw EmptyBatchError("accuracy: empty test set");
    std::size_t correct = 0;
    std::vector<double> row(test.X.cols);
    for (std::size_t s = 0; s < test.X.rows; ++s) {
        std::copy_n(test.X.data.begin() + s * test.X.cols, test.X.cols, row.begin());
        const ForwardTrace tr = forward(model, task, row);
        std::size_t best = 0;
        for (std::size_t i = 1; i < tr.logits.size(); ++i)
            if (tr.logits[i] > tr.logits[best]) best = i;
        if (best == test.y[s]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.X.rows);
}

}  // namespace fedsim
