#include <doctest.h>

#include "langdaug/errors.hpp"
#include "langdaug/experiment_config.hpp"

using namespace langdaug;
using nlohmann::json;

namespace {
std::string config_error(const json& doc) {
    try {
        parse_experiment_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}
}  // namespace

TEST_CASE("minimal config resolves every default") {
    const auto c = parse_experiment_config({{"base_seed", 7}});
    CHECK(c.base_seed == 7);
    CHECK(c.data.n_domains == 4);
    CHECK(c.data.specs.size() == 4);
    CHECK(c.langevin.ld.n_steps == 40);
    CHECK(c.langevin.ld.stored_count() == 13);
    CHECK(c.segmenter.train.mix_ratio == 0.5);
    CHECK(c.ebm.cd.ld.stored_steps() == std::vector<int>{c.ebm.cd.ld.n_steps});
    CHECK(c.data.seed != 0);
}

TEST_CASE("resolved config parses back to itself") {
    const json doc = {{"base_seed", 3},
                      {"ebm", {{"kind", "mlp"}, {"hidden_width", 5}, {"grad_clip", 2.5}}},
                      {"augment", {{"samples_per_chain", 5}}},
                      {"theory", {{"family", "poisson"}, {"betas", {0.1, 0.2}}, {"coverage", {{"L", 1.5}}}}},
                      {"sweep", {{"axis", "beta"}, {"values", {0.5, 1.0}}}}};
    const auto c = parse_experiment_config(doc);
    const auto resolved = to_json(c);
    CHECK(to_json(parse_experiment_config(resolved)) == resolved);
    CHECK(c.augmentation_langevin().stored_count() == 5);
    CHECK(c.energy_arch().kind == EnergyKind::mlp);
    REQUIRE(c.theory.coverage.lipschitz_loss.has_value());
    CHECK(*c.theory.coverage.lipschitz_loss == 1.5);
}

TEST_CASE("strictness") {
    CHECK(config_error(json::object()).find("base_seed") != std::string::npos);
    CHECK(config_error({{"base_seed", -1}}).find("base_seed") != std::string::npos);
    CHECK(config_error({{"base_seed", 1}, {"extra", 1}}).find("config.extra") != std::string::npos);
    CHECK(config_error({{"base_seed", 1}, {"ebm", {{"adam", {{"lrr", 0.1}}}}}}).find("config.ebm.adam.lrr") !=
          std::string::npos);
    CHECK(config_error({{"base_seed", 1}, {"ebm", {{"n_iters", 1.5}}}}).find("integer") != std::string::npos);
    CHECK(config_error({{"base_seed", 1}, {"langevin", {{"step_size", "big"}}}}).find("number") != std::string::npos);
    CHECK(config_error({{"base_seed", 1}, {"langevin", {{"step_size", nullptr}}}}).find("null") != std::string::npos);
    CHECK_FALSE(config_error({{"base_seed", 1}, {"sweep", {{"axis", "lr"}}}}).empty());
    CHECK_FALSE(config_error({{"base_seed", 1}, {"augment", {{"samples_per_chain", 41}}}}).empty());
    CHECK_FALSE(config_error({{"base_seed", 1}, {"data", {{"n_domains", 5}}}}).empty());
    CHECK_FALSE(config_error({{"base_seed", 1}, {"theory", {{"betas", {0.1, -0.1}}}}}).empty());
}

TEST_CASE("seed override reaches every module") {
    auto c = parse_experiment_config({{"base_seed", 1}});
    const auto before = to_json(c);
    c.apply_seed(2);
    CHECK(c.base_seed == 2);
    CHECK(c.ebm.cd.base_seed == 2);
    CHECK(to_json(c) != before);
}

TEST_CASE("channel hook follows the data") {
    auto gray = parse_experiment_config({{"base_seed", 1}});
    CHECK_FALSE(gray.augmentation_langevin().hook_channel.has_value());
    auto rgb = parse_experiment_config({{"base_seed", 1}, {"data", {{"channels", 3}}}});
    REQUIRE(rgb.augmentation_langevin().hook_channel.has_value());
    CHECK(*rgb.augmentation_langevin().hook_channel == 0);
    auto off = parse_experiment_config({{"base_seed", 1}, {"data", {{"channels", 3}}}, {"langevin", {{"hook", "off"}}}});
    CHECK_FALSE(off.augmentation_langevin().hook_channel.has_value());
}

TEST_CASE("missing config file is a config error") {
    CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
}
