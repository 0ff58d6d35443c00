#include <doctest.h>

#include "langdaug/errors.hpp"
#include "langdaug/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace langdaug;

TEST_CASE("streams are reproducible and label-separated") {
    RngStream a(42, {{"x", 1}});
    RngStream b(42, {{"x", 1}});
    RngStream c(42, {{"x", 2}});
    RngStream d(43, {{"x", 1}});
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
        CHECK(va != c.next_u64());
        CHECK(va != d.next_u64());
    }
    const auto child1 = a.child("y", 0);
    const auto child2 = RngStream(42, {{"x", 1}, {"y", 0}});
    CHECK(child1.key() == child2.key());
}

TEST_CASE("children do not depend on parent draw position") {
    RngStream a(5, {{"root", 0}});
    const auto before = a.child("c", 3);
    for (int i = 0; i < 17; ++i) a.normal();
    const auto after = a.child("c", 3);
    CHECK(before.key() == after.key());
}

TEST_CASE("normal moments") {
    RngStream rng(11, {{"moments", 0}});
    const int n = 200000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    CHECK(std::abs(s / n) < 5.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    CHECK(std::abs(s4 / n - 3.0) < 0.1);
}

TEST_CASE("uniform and signs") {
    RngStream rng(3, {{"u", 0}});
    double s = 0;
    int plus = 0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        s += u;
        plus += rng.sign() > 0;
    }
    CHECK(std::abs(s / 1e5 - 0.5) < 0.01);
    CHECK(std::abs(plus / 1e5 - 0.5) < 0.01);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 70000; ++i) ++hits[rng.uniform_index(7)];
    for (int h : hits) CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("permutation is a permutation") {
    RngStream rng(1, {{"perm", 0}});
    auto p = random_permutation(50, rng);
    std::vector<std::size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(50);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    CHECK(p != iota);
}

TEST_CASE("adam on a parabola matches reference trajectory") {
    Vector t(1);
    t << 1.0;
    auto state = AdamState::fresh(1, {0.05, 0.9, 0.99, 1e-8});
    for (int i = 0; i < 100; ++i) adam_update(t, 2.0 * t, state);
    CHECK(t[0] == doctest::Approx(-0.0009233780984723225).epsilon(1e-12));
    CHECK(state.step_count == 100);
}

TEST_CASE("adam_step is pure") {
    Vector p = Vector::Ones(3);
    const auto s0 = AdamState::fresh(3);
    const auto [p1, s1] = adam_step(p, Vector::Constant(3, 0.5), s0);
    const auto [p2, s2] = adam_step(p, Vector::Constant(3, 0.5), s0);
    CHECK(p1 == p2);
    CHECK(s0.step_count == 0);
    CHECK(s1.step_count == 1);
    // first step moves by lr in the sign direction
    CHECK((p - p1).cwiseAbs().maxCoeff() == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("finite differences of a known function") {
    const ScalarFunction f = [](const Vector& x) { return std::sin(x[0]) * x[1] + x[1] * x[1] * x[1]; };
    Vector x(2);
    x << 0.3, -1.2;
    Vector g(2);
    g << std::cos(0.3) * -1.2, std::sin(0.3) + 3 * 1.44;
    CHECK(max_relative_error(finite_diff_grad(f, x), g) < 1e-8);
    const std::vector<Eigen::Index> coords{1};
    const Vector partial = finite_diff_grad(f, x, coords);
    CHECK(partial[0] == 0.0);
    CHECK(partial[1] == doctest::Approx(g[1]).epsilon(1e-8));
}

TEST_CASE("finite differences reject non-finite values") {
    const ScalarFunction f = [](const Vector& x) { return x[0] > 0 ? std::log(-1.0) : 0.0; };
    CHECK_THROWS_AS(finite_diff_grad(f, Vector::Zero(1)), NumericError);
}

TEST_CASE("parallel_for covers every index once at any job count") {
    for (int jobs : {1, 2, 5}) {
        std::vector<int> hits(37, 0);
        parallel_for(hits.size(), jobs, [&](std::size_t i) { hits[i] += 1; });
        CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
}

TEST_CASE("parallel_for propagates exceptions") {
    CHECK_THROWS_AS(parallel_for(8, 3, [](std::size_t i) { if (i == 5) throw ConfigError("boom"); }), ConfigError);
}

TEST_CASE("checksums see every byte") {
    Vector a = Vector::LinSpaced(10, 0, 1);
    Vector b = a;
    b[7] = std::nextafter(b[7], 2.0);
    CHECK(checksum(a) == checksum(Vector(a)));
    CHECK(checksum(a) != checksum(b));
}

TEST_CASE("warning handler is replaceable") {
    std::string seen;
    auto old = set_warning_handler([&](std::string_view m) { seen = m; });
    warn("careful");
    set_warning_handler(old);
    CHECK(seen == "careful");
}
