#include <doctest.h>

#include "langdaug/errors.hpp"
#include "langdaug/langevin.hpp"

#include <cmath>

using namespace langdaug;

TEST_CASE("single step matches the update rule") {
    const Vector x = (Vector(2) << 1.0, 2.0).finished();
    const Vector g = (Vector(2) << 0.5, -1.0).finished();
    const Vector n = (Vector(2) << 0.1, 0.2).finished();
    const Vector out = langevin_step(x, g, 0.4, n);
    CHECK(out[0] == doctest::Approx(1.0 - 0.08 * 0.5 + 0.04));
    CHECK(out[1] == doctest::Approx(2.0 + 0.08 + 0.08));
    CHECK_THROWS_AS(langevin_step(x, Vector(Vector::Zero(3)), 0.4, n), DimensionError);
    CHECK_THROWS_AS(langevin_step(x, g, -0.1, n), ConfigError);
}

TEST_CASE("stored steps follow offset and stride") {
    LangevinConfig c;
    c.n_steps = 40;
    c.store_offset = 3;
    c.store_stride = 3;
    const auto s = c.stored_steps();
    CHECK(s.size() == 13);
    CHECK(s.front() == 3);
    CHECK(s.back() == 39);
    c.store_offset = 40;
    c.store_stride = 1;
    CHECK(c.stored_steps() == std::vector<int>{40});
    c.store_stride = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("chains are reproducible from their stream") {
    EnergyParams q{EnergyArch::quadratic_family(3), Vector::Zero(3)};
    LangevinConfig c{0.3, 20, 5, 5, std::nullopt, false};
    const RngStream rng(1, {{"chain", 0}});
    const auto a = run_chain(Vector::Ones(3), q, c, rng);
    const auto b = run_chain(Vector::Ones(3), q, c, rng);
    REQUIRE(a.stored.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.stored[i].x == b.stored[i].x);
    CHECK(run_chain_final(Vector::Ones(3), q, c, rng) == a.stored.back().x);
}

TEST_CASE("zero step size leaves the start unchanged") {
    EnergyParams q{EnergyArch::quadratic_family(2), Vector::Ones(2)};
    const LangevinConfig c{0.0, 10, 1, 10, std::nullopt, false};
    CHECK(run_chain_final(Vector::Zero(2), q, c, RngStream(0, {{"z", 0}})) == Vector::Zero(2));
}

TEST_CASE("short-run mean on a quadratic contracts geometrically") {
    // x_K = theta + (1 - a^2/2)^K (x0 - theta) + noise with zero mean
    EnergyParams q{EnergyArch::quadratic_family(1), Vector::Constant(1, 2.0)};
    const LangevinConfig c{0.5, 10, 1, 10, std::nullopt, false};
    const int n = 20000;
    double s = 0;
    for (int i = 0; i < n; ++i) s += run_chain_final(Vector::Zero(1), q, c, RngStream(3, {{"c", i}}))[0];
    const double expected = 2.0 - 2.0 * std::pow(1.0 - 0.125, 10);
    CHECK(std::abs(s / n - expected) < 0.03);
}

TEST_CASE("channel hook pins the chosen channel") {
    const Vector orig = Vector::LinSpaced(6, 0.0, 0.5);
    const Vector it = Vector::Constant(6, 9.0);
    const Vector out = channel_replace_hook(it, orig, 1, 3);
    for (int i = 0; i < 6; ++i) CHECK(out[i] == (i % 3 == 1 ? orig[i] : 9.0));
    CHECK_THROWS_AS(channel_replace_hook(it, orig, 3, 3), ConfigError);

    EnergyParams conv = init_energy_params(EnergyArch::conv_net(8, 8, 3, 1), 2);
    Vector x0(conv.arch.input_size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = 0.01 * static_cast<double>(i % 50);
    const LangevinConfig c{0.2, 5, 1, 5, 0, true};
    const Vector x = run_chain_final(x0, conv, c, RngStream(1, {{"h", 0}}));
    for (Eigen::Index i = 0; i < x.size(); i += 3) CHECK(x[i] == x0[i]);
    CHECK((x - x0).norm() > 0.0);
}

TEST_CASE("divergence is reported with the step and prior energy") {
    EnergyParams q{EnergyArch::quadratic_family(1), Vector::Zero(1)};
    const LangevinConfig c{1e200, 5, 1, 5, std::nullopt, false};
    try {
        run_chain_final(Vector::Ones(1), q, c, RngStream(0, {{"d", 0}}));
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() >= 1);
        CHECK(std::isfinite(e.energy()));
    }
}

TEST_CASE("clamping keeps iterates in the unit box") {
    EnergyParams q{EnergyArch::quadratic_family(4), Vector::Constant(4, 5.0)};
    const LangevinConfig c{1.0, 30, 1, 1, std::nullopt, true};
    const auto rec = run_chain(Vector::Constant(4, 0.5), q, c, RngStream(0, {{"c", 0}}));
    for (const auto& s : rec.stored) CHECK((s.x.array() >= 0.0 && s.x.array() <= 1.0).all());
}
