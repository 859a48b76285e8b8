#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

LayoutPtr simple_layout(std::size_t n) {
    return std::make_shared<const Layout>(std::vector<LayoutEntry>{{"w", 0, n}});
}

ParamVector random_pv(const LayoutPtr& layout, Rng& rng) {
    std::vector<double> d(layout->total_length());
    for (double& v : d) v = rng.next_gaussian();
    return ParamVector(layout, std::move(d));
}

}  // namespace

TEST_CASE("layout validates contiguous offsets") {
    REQUIRE_NOTHROW(Layout({{"a", 0, 3}, {"b", 3, 2}}));
    REQUIRE_THROWS_AS(Layout({{"a", 0, 3}, {"b", 4, 2}}), LayoutError);
    const Layout l({{"a", 0, 3}, {"b", 3, 2}});
    REQUIRE(l.total_length() == 5);
    REQUIRE(l.find("b").offset == 3);
    REQUIRE_THROWS_AS(l.find("c"), LayoutError);
}

TEST_CASE("arithmetic requires identical layouts") {
    auto la = simple_layout(3);
    auto lb = std::make_shared<const Layout>(std::vector<LayoutEntry>{{"x", 0, 3}});
    ParamVector a(la, {1, 2, 3});
    ParamVector b(lb, {1, 1, 1});
    REQUIRE_THROWS_AS(a += b, LayoutError);
    REQUIRE_THROWS_AS(euclid_sq(a, b), LayoutError);

    // Same content under a distinct but equal layout object is fine.
    auto la2 = std::make_shared<const Layout>(std::vector<LayoutEntry>{{"w", 0, 3}});
    ParamVector c(la2, {1, 1, 1});
    REQUIRE_NOTHROW(a += c);
    REQUIRE(a.data() == std::vector<double>{2, 3, 4});
}

TEST_CASE("euclid_sq basic values") {
    auto l = simple_layout(2);
    ParamVector a(l, {1, 2});
    ParamVector b(l, {0, 0});
    REQUIRE(euclid_sq(a, a) == 0.0);
    REQUIRE(euclid_sq(a, b) == 5.0);
    REQUIRE(euclid_sq(a, b) == euclid_sq(b, a));
}

TEST_CASE("euclid_sq matches scalar loop oracle on random vectors") {
    auto l = simple_layout(1000);
    Rng rng = derive_stream(21, 0, 0, Purpose::model_init);
    const ParamVector a = random_pv(l, rng);
    const ParamVector b = random_pv(l, rng);
    double expect = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) expect += (a[i] - b[i]) * (a[i] - b[i]);
    const double got = euclid_sq(a, b);
    REQUIRE(std::abs(got - expect) <= 1e-12 * std::abs(expect));
}

TEST_CASE("euclid_sq is nonnegative and zero iff equal") {
    auto l = simple_layout(16);
    Rng rng = derive_stream(22, 0, 0, Purpose::model_init);
    for (int trial = 0; trial < 50; ++trial) {
        ParamVector a = random_pv(l, rng);
        ParamVector b = random_pv(l, rng);
        REQUIRE(euclid_sq(a, b) >= 0.0);
        REQUIRE(euclid_sq(a, a) == 0.0);
        if (a.data() != b.data()) REQUIRE(euclid_sq(a, b) > 0.0);
    }
}

TEST_CASE("cosine_dist basic values and range") {
    auto l = simple_layout(2);
    ParamVector x(l, {1, 0});
    ParamVector y(l, {0, 1});
    ParamVector nx(l, {-1, 0});
    REQUIRE(cosine_dist(x, x) == 0.0);
    REQUIRE(cosine_dist(x, y) == 1.0);
    REQUIRE(cosine_dist(x, nx) == 2.0);

    ParamVector zero(l, {0, 0});
    REQUIRE_THROWS_AS(cosine_dist(x, zero), UndefinedDistanceError);

    auto l10 = simple_layout(10);
    Rng rng = derive_stream(23, 0, 0, Purpose::model_init);
    for (int trial = 0; trial < 200; ++trial) {
        const ParamVector a = random_pv(l10, rng);
        const ParamVector b = random_pv(l10, rng);
        const double d = cosine_dist(a, b);
        REQUIRE(d >= -1e-12);
        REQUIRE(d <= 2.0 + 1e-12);
    }
}

TEST_CASE("summation of a fixed operand order is bit-reproducible") {
    auto l = simple_layout(64);
    Rng rng = derive_stream(24, 0, 0, Purpose::model_init);
    std::vector<ParamVector> vs;
    for (int i = 0; i < 8; ++i) vs.push_back(random_pv(l, rng));

    auto sum_all = [&] {
        ParamVector acc = ParamVector::zeros(l);
        for (const auto& v : vs) acc += v;
        return acc;
    };
    REQUIRE(sum_all().data() == sum_all().data());
}

TEST_CASE("axpy and scaling") {
    auto l = simple_layout(3);
    ParamVector a(l, {1, 2, 3});
    ParamVector g(l, {10, 10, 10});
    a.axpy(-0.1, g);
    REQUIRE(a[0] == Catch::Approx(0.0));
    a *= 2.0;
    REQUIRE(a[1] == Catch::Approx(2.0));
}
