#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "fedsim/checkpoint.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

// Independent recursive evaluator of the gated forward rule. Recomputes
// every activation from scratch instead of caching, and reads the adapter
// fields directly; shares nothing with forward() except the data structures.
std::vector<double> naive_x(const GlobalModel& m, std::size_t task,
                            const std::vector<double>& input, std::size_t l) {
    if (l == 0) return input;
    const Backbone& bb = *m.backbone;
    const TaskAdapter& a = m.adapter(task);
    auto gate = [&](std::size_t from, std::size_t to) {
        for (const auto& g : a.gates)
            if (g.from == from && g.to == to) return 1.0 / (1.0 + std::exp(-g.logit));
        FAIL("gate not found");
        return 0.0;
    };

    const std::vector<double> prev = naive_x(m, task, input, l - 1);
    std::vector<double> z = bb.weights[l - 1].matvec(prev);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] += bb.biases[l - 1][i];
        const double act = bb.spec.activation == Activation::relu ? std::max(0.0, z[i])
                                                                  : std::tanh(z[i]);
        out[i] = gate(l, l) * act;
    }
    for (const auto& p : a.proxies) {
        if (p.to != l) continue;
        const std::vector<double> src = naive_x(m, task, input, p.from);
        const std::vector<double> pout = p.weight.matvec(src);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += gate(p.from, l) * pout[i];
    }
    return out;
}

std::vector<double> naive_logits(const GlobalModel& m, std::size_t task,
                                 const std::vector<double>& input) {
    const TaskAdapter& a = m.adapter(task);
    const std::vector<double> xl = naive_x(m, task, input, m.spec().depth());
    std::vector<double> logits = a.head_w.matvec(xl);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += a.head_b[i];
    return logits;
}

// Mean cross-entropy computed straight from forward() logits; the loss side
// of the finite-difference oracle.
double ce_loss(const GlobalModel& m, std::size_t task, const Batch& batch) {
    double loss = 0.0;
    std::vector<double> row(batch.X.cols);
    for (std::size_t s = 0; s < batch.X.rows; ++s) {
        std::copy_n(batch.X.data.begin() + s * batch.X.cols, batch.X.cols, row.begin());
        const auto tr = forward(m, task, row);
        double mx = tr.logits[0];
        for (double v : tr.logits) mx = std::max(mx, v);
        double lse = 0.0;
        for (double v : tr.logits) lse += std::exp(v - mx);
        loss += mx + std::log(lse) - tr.logits[batch.y[s]];
    }
    return loss / static_cast<double>(batch.X.rows);
}

GlobalModel small_model(std::uint64_t seed, Activation act, std::size_t tasks = 2) {
    Rng rng = derive_stream(seed, 0, 0, Purpose::model_init);
    BackboneSpec spec{5, {6, 4, 3}, act, 2};
    return init_model(spec, tasks, 3, rng);
}

Batch random_batch(const GlobalModel& m, std::size_t n, std::uint64_t seed) {
    Rng rng = derive_stream(seed, 0, 0, Purpose::data_synth);
    Batch b;
    b.X = Matrix(n, m.spec().input_dim);
    for (double& v : b.X.data) v = rng.next_gaussian();
    b.y.resize(n);
    for (auto& y : b.y) y = rng.next_below(m.adapter(0).classes());
    return b;
}

}  // namespace

TEST_CASE("init_model is deterministic and structured as specified") {
    GlobalModel a = small_model(5, Activation::relu);
    GlobalModel b = small_model(5, Activation::relu);
    REQUIRE(flatten_adapter(a.adapter(0), a.adapter_layout).data() ==
            flatten_adapter(b.adapter(0), b.adapter_layout).data());
    REQUIRE(a.backbone->weights[0].data == b.backbone->weights[0].data);

    Rng rng = derive_stream(1, 0, 0, Purpose::model_init);
    GlobalModel one = init_model(BackboneSpec{4, {4, 4}, Activation::relu, 1}, 1, 2, rng);
    REQUIRE(one.task_count() == 1);

    // L=3, k=2: proxies {(1,2),(1,3),(2,3)}, gates add diagonals {(1,1),(2,2),(3,3)}.
    const TaskAdapter& ad = a.adapter(0);
    REQUIRE(ad.proxies.size() == 3);
    REQUIRE((ad.proxies[0].from == 1 && ad.proxies[0].to == 2));
    REQUIRE((ad.proxies[1].from == 1 && ad.proxies[1].to == 3));
    REQUIRE((ad.proxies[2].from == 2 && ad.proxies[2].to == 3));
    REQUIRE(ad.gates.size() == 6);
    for (const auto& g : ad.gates) REQUIRE(g.logit == 0.0);
}

TEST_CASE("spec validation rejects bad shapes") {
    REQUIRE_THROWS_AS((BackboneSpec{4, {4}, Activation::relu, 1}.validate()), ConfigError);
    REQUIRE_THROWS_AS((BackboneSpec{4, {4, 4}, Activation::relu, 2}.validate()), ConfigError);
    REQUIRE_THROWS_AS((BackboneSpec{0, {4, 4}, Activation::relu, 1}.validate()), ConfigError);
}

TEST_CASE("forward matches the naive recursive evaluator") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        for (Activation act : {Activation::relu, Activation::tanh}) {
            GlobalModel m = small_model(seed, act);
            // Perturb gates away from the 0.5 initialization for a harder check.
            Rng grng = derive_stream(seed, 9, 9, Purpose::model_init);
            for (auto& g : m.adapter(1).gates) g.logit = grng.next_gaussian();
            Rng xrng = derive_stream(seed, 1, 0, Purpose::data_synth);
            for (int trial = 0; trial < 5; ++trial) {
                std::vector<double> x(m.spec().input_dim);
                for (double& v : x) v = xrng.next_gaussian();
                const auto tr = forward(m, 1, x);
                const auto expect = naive_logits(m, 1, x);
                REQUIRE(tr.logits.size() == expect.size());
                for (std::size_t i = 0; i < expect.size(); ++i)
                    REQUIRE(tr.logits[i] == Catch::Approx(expect[i]).epsilon(1e-12).margin(1e-12));
            }
        }
    }
}

TEST_CASE("gates at 1 with zero proxies reduce to the plain backbone composition") {
    GlobalModel m = small_model(7, Activation::tanh);
    TaskAdapter& a = m.adapter(0);
    for (auto& p : a.proxies) p.weight.data.assign(p.weight.size(), 0.0);
    // logistic(40) rounds to exactly 1.0 in double; logistic(-40) times a zero
    // proxy output contributes exactly 0.
    for (auto& g : a.gates) g.logit = (g.from == g.to) ? 40.0 : -40.0;

    std::vector<double> x(m.spec().input_dim, 0.25);
    const auto tr = forward(m, 0, x);

    std::vector<double> h = x;
    for (std::size_t l = 1; l <= m.spec().depth(); ++l) {
        h = m.backbone->weights[l - 1].matvec(h);
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = std::tanh(h[i] + m.backbone->biases[l - 1][i]);
    }
    std::vector<double> logits = a.head_w.matvec(h);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += a.head_b[i];
    for (std::size_t i = 0; i < logits.size(); ++i) REQUIRE(tr.logits[i] == logits[i]);
}

TEST_CASE("zero input with relu and zero biases yields the head bias") {
    GlobalModel m = small_model(8, Activation::relu);
    TaskAdapter& a = m.adapter(0);
    a.head_b = {0.5, -0.25, 1.0};
    std::vector<double> x(m.spec().input_dim, 0.0);
    const auto tr = forward(m, 0, x);
    // x=0 kills every linear map regardless of gates; only the bias survives.
    REQUIRE(tr.logits == std::vector<double>{0.5, -0.25, 1.0});
}

TEST_CASE("forward rejects unknown task and wrong input size") {
    GlobalModel m = small_model(9, Activation::relu);
    std::vector<double> x(m.spec().input_dim, 0.0);
    REQUIRE_THROWS_AS(forward(m, 5, x), MissingTaskError);
    std::vector<double> bad(m.spec().input_dim + 1, 0.0);
    REQUIRE_THROWS_AS(forward(m, 0, bad), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng = derive_stream(31, 0, 0, Purpose::data_synth);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> logits(5);
        for (double& v : logits) v = 10.0 * rng.next_gaussian();
        const auto p = softmax(logits);
        double sum = 0.0;
        for (double v : p) {
            REQUIRE(v >= 0.0);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    const double eps = 1e-5;
    int checked = 0;
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        GlobalModel m = small_model(seed, Activation::tanh);
        Rng grng = derive_stream(seed, 3, 3, Purpose::model_init);
        for (auto& g : m.adapter(0).gates) g.logit = 0.5 * grng.next_gaussian();
        const Batch batch = random_batch(m, 4, seed + 1000);

        const auto [loss, grad] = loss_and_grad(m, 0, batch);
        REQUIRE(std::isfinite(loss));

        ParamVector theta = flatten_adapter(m.adapter(0), m.adapter_layout);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double orig = theta[i];
            theta[i] = orig + eps;
            unflatten_adapter(theta, m.adapter(0));
            const double up = ce_loss(m, 0, batch);
            theta[i] = orig - eps;
            unflatten_adapter(theta, m.adapter(0));
            const double down = ce_loss(m, 0, batch);
            theta[i] = orig;
            unflatten_adapter(theta, m.adapter(0));

            const double fd = (up - down) / (2.0 * eps);
            const double denom = std::max({1e-6, std::abs(fd), std::abs(grad[i])});
            REQUIRE(std::abs(grad[i] - fd) / denom < 1e-4);
            ++checked;
        }
    }
    REQUIRE(checked > 1000);
}

TEST_CASE("relu gradient also passes finite differences on a safe seed") {
    GlobalModel m = small_model(4242, Activation::relu);
    const Batch batch = random_batch(m, 4, 77);
    const auto [loss, grad] = loss_and_grad(m, 0, batch);
    (void)loss;
    ParamVector theta = flatten_adapter(m.adapter(0), m.adapter_layout);
    const double eps = 1e-5;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = theta[i];
        theta[i] = orig + eps;
        unflatten_adapter(theta, m.adapter(0));
        const double up = ce_loss(m, 0, batch);
        theta[i] = orig - eps;
        unflatten_adapter(theta, m.adapter(0));
        const double down = ce_loss(m, 0, batch);
        theta[i] = orig;
        unflatten_adapter(theta, m.adapter(0));
        const double fd = (up - down) / (2.0 * eps);
        const double denom = std::max({1e-6, std::abs(fd), std::abs(grad[i])});
        REQUIRE(std::abs(grad[i] - fd) / denom < 1e-4);
    }
}

TEST_CASE("loss behaviour: duplicated rows, separation limit, empty batch") {
    GlobalModel m = small_model(55, Activation::tanh);
    const Batch batch = random_batch(m, 3, 56);

    Batch doubled;
    doubled.X = Matrix(6, batch.X.cols);
    std::copy(batch.X.data.begin(), batch.X.data.end(), doubled.X.data.begin());
    std::copy(batch.X.data.begin(), batch.X.data.end(),
              doubled.X.data.begin() + batch.X.data.size());
    doubled.y = batch.y;
    doubled.y.insert(doubled.y.end(), batch.y.begin(), batch.y.end());

    const auto [l1, g1] = loss_and_grad(m, 0, batch);
    const auto [l2, g2] = loss_and_grad(m, 0, doubled);
    REQUIRE(l2 == Catch::Approx(l1).epsilon(1e-12));
    for (std::size_t i = 0; i < g1.size(); ++i)
        REQUIRE(g2[i] == Catch::Approx(g1[i]).epsilon(1e-9).margin(1e-12));

    // Huge positive margin on the true class drives the loss to zero.
    TaskAdapter& a = m.adapter(0);
    a.head_w.data.assign(a.head_w.size(), 0.0);
    a.head_b = {100.0, 0.0, 0.0};
    Batch sep;
    sep.X = Matrix(2, m.spec().input_dim, 0.1);
    sep.y = {0, 0};
    const auto [lsep, gsep] = loss_and_grad(m, 0, sep);
    (void)gsep;
    REQUIRE(lsep < 1e-12);

    Batch empty;
    empty.X = Matrix(0, m.spec().input_dim);
    REQUIRE_THROWS_AS(loss_and_grad(m, 0, empty), EmptyBatchError);
}

TEST_CASE("flatten/unflatten round-trips bit-exactly") {
    GlobalModel m = small_model(66, Activation::relu);
    Rng rng = derive_stream(66, 1, 1, Purpose::model_init);
    ParamVector v = flatten_adapter(m.adapter(1), m.adapter_layout);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.next_gaussian();
    unflatten_adapter(v, m.adapter(1));
    const ParamVector w = flatten_adapter(m.adapter(1), m.adapter_layout);
    REQUIRE(w.data() == v.data());
}

TEST_CASE("training one task never touches other adapters or the backbone") {
    GlobalModel m = small_model(77, Activation::tanh);
    const auto backbone_before = m.backbone->weights[0].data;
    const ParamVector other_before = flatten_adapter(m.adapter(1), m.adapter_layout);

    const Batch batch = random_batch(m, 4, 78);
    for (int step = 0; step < 10; ++step) {
        const auto [loss, grad] = loss_and_grad(m, 0, batch);
        (void)loss;
        ParamVector theta = flatten_adapter(m.adapter(0), m.adapter_layout);
        theta.axpy(-0.1, grad);
        unflatten_adapter(theta, m.adapter(0));
    }
    REQUIRE(m.backbone->weights[0].data == backbone_before);
    REQUIRE(flatten_adapter(m.adapter(1), m.adapter_layout).data() == other_before.data());
}

TEST_CASE("accuracy counts argmax hits with low-index tie break") {
    GlobalModel m = small_model(88, Activation::relu);
    TaskAdapter& a = m.adapter(0);
    a.head_w.data.assign(a.head_w.size(), 0.0);
    a.head_b = {0.0, 0.0, 0.0};  // constant tied logits; argmax resolves to class 0

    Batch test;
    test.X = Matrix(4, m.spec().input_dim, 0.0);
    test.y = {0, 0, 0, 0};
    REQUIRE(accuracy(m, 0, test) == 1.0);
    test.y = {1, 2, 1, 2};
    REQUIRE(accuracy(m, 0, test) == 0.0);

    Batch empty;
    empty.X = Matrix(0, m.spec().input_dim);
    REQUIRE_THROWS_AS(accuracy(m, 0, empty), EmptyBatchError);
}

TEST_CASE("random model on balanced binary data sits near 0.5 accuracy") {
    Rng rng = derive_stream(99, 0, 0, Purpose::model_init);
    GlobalModel m = init_model(BackboneSpec{8, {8, 6}, Activation::tanh, 1}, 1, 2, rng);
    Batch test;
    const std::size_t n = 10000;
    test.X = Matrix(n, 8);
    Rng drng = derive_stream(99, 0, 0, Purpose::data_synth);
    for (double& v : test.X.data) v = drng.next_gaussian();
    test.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) test.y[i] = i % 2;
    const double a = accuracy(m, 0, test);
    REQUIRE(a > 0.48);
    REQUIRE(a < 0.52);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    GlobalModel m = small_model(123, Activation::tanh, 3);
    Rng rng = derive_stream(123, 2, 2, Purpose::model_init);
    for (auto& g : m.adapter(2).gates) g.logit = rng.next_gaussian();

    const auto path = std::filesystem::temp_directory_path() / "fedsim_ckpt_test.json";
    save_model(m, path.string());
    const GlobalModel r = load_model(path.string());
    std::filesystem::remove(path);

    REQUIRE(r.spec() == m.spec());
    REQUIRE(r.task_count() == m.task_count());
    for (std::size_t l = 0; l < m.backbone->weights.size(); ++l) {
        REQUIRE(r.backbone->weights[l].data == m.backbone->weights[l].data);
        REQUIRE(r.backbone->biases[l] == m.backbone->biases[l]);
    }
    for (std::size_t t = 0; t < m.task_count(); ++t)
        REQUIRE(flatten_adapter(r.adapter(t), r.adapter_layout).data() ==
                flatten_adapter(m.adapter(t), m.adapter_layout).data());
}
