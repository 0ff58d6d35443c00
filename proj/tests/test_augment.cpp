#include <doctest.h>

#include "langdaug/augment.hpp"
#include "langdaug/errors.hpp"

#include <filesystem>
#include <set>

using namespace langdaug;

namespace {

std::vector<DomainSpec> first_specs(std::size_t n) {
    auto specs = default_domain_specs();
    specs.resize(n);
    return specs;
}

struct Fixture {
    MultiDomainDataset data = generate_benchmark(3, 10, 16, first_specs(3), 4);
    std::map<DomainPair, EnergyParams> ebms;
    LangevinConfig ld{0.05, 9, 3, 3, std::nullopt, true};

    Fixture() {
        const auto arch = EnergyArch::conv_net(16, 16, 1, 1);
        for (int s = 0; s < 3; ++s)
            for (int t = 0; t < 3; ++t)
                if (s != t) ebms[{s, t}] = init_energy_params(arch, static_cast<std::uint64_t>(10 * s + t));
    }
};

}  // namespace

TEST_CASE("source domains take the train split") {
    Fixture f;
    const std::vector<int> ids{0, 2};
    const auto src = source_domains(f.data, ids);
    REQUIRE(src.size() == 2);
    CHECK(src[1].domain_id == 2);
    CHECK(src[1].images.size() == f.data.domains[2].train.size());
    CHECK(src[1].origin_index == f.data.domains[2].train);
}

TEST_CASE("augmented entries: counts, labels and provenance") {
    Fixture f;
    const auto src = source_domains(f.data);
    const auto aug = generate_augmented(src, f.ebms, f.ld, 1, 1);
    const std::size_t n_train = f.data.domains[0].train.size();
    CHECK(aug.size() == 3 * 2 * n_train * 3);
    CHECK(aug.skipped_chains == 0);
    for (const auto& [key, count] : aug.counts()) CHECK(count == n_train);
    for (const auto& e : aug.entries) {
        CHECK(e.source != e.target);
        CHECK((e.mask == f.data.domains[e.source].masks[e.origin_index]).all());
        CHECK((e.image.array() >= 0.0).all());
        CHECK((e.image.array() <= 1.0).all());
        CHECK((e.step == 3 || e.step == 6 || e.step == 9));
    }
    CHECK(aug.ebm_checksums.size() == 6);
}

TEST_CASE("augmentation does not depend on job count") {
    Fixture f;
    const auto src = source_domains(f.data);
    const auto a = generate_augmented(src, f.ebms, f.ld, 1, 1);
    const auto b = generate_augmented(src, f.ebms, f.ld, 1, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.entries[i].image == b.entries[i].image);
}

TEST_CASE("missing EBM is a config error") {
    Fixture f;
    f.ebms.erase({1, 2});
    const auto src = source_domains(f.data);
    CHECK_THROWS_AS(generate_augmented(src, f.ebms, f.ld, 1, 1), ConfigError);
}

TEST_CASE("augmented set roundtrips through disk") {
    Fixture f;
    const auto src = source_domains(f.data);
    const auto aug = generate_augmented(src, f.ebms, f.ld, 2, 1);
    const auto dir = std::filesystem::temp_directory_path() / "langdaug_test_augment";
    std::filesystem::remove_all(dir);
    save_augmented(aug, dir);
    const auto back = load_augmented(dir);
    REQUIRE(back.size() == aug.size());
    CHECK(back.ebm_checksums == aug.ebm_checksums);
    CHECK(back.shape == aug.shape);
    for (std::size_t i = 0; i < aug.size(); i += 7) {
        CHECK(back.entries[i].image == aug.entries[i].image);
        CHECK((back.entries[i].mask == aug.entries[i].mask).all());
        CHECK(back.entries[i].origin_index == aug.entries[i].origin_index);
        CHECK(back.entries[i].step == aug.entries[i].step);
    }
    CHECK_THROWS_AS(load_augmented(dir / "absent"), MissingArtifactError);
}

TEST_CASE("training stream visits each source sample once per epoch") {
    const auto batches = assemble_training_stream(37, 100, 0.5, 8, 3, 0);
    std::multiset<std::size_t> src;
    std::size_t aug = 0, total = 0;
    for (const auto& b : batches) {
        for (const auto& s : b) {
            if (s.augmented) {
                ++aug;
                CHECK(s.index < 100);
            } else {
                src.insert(s.index);
            }
            ++total;
        }
    }
    CHECK(src.size() == 37);
    CHECK(std::set<std::size_t>(src.begin(), src.end()).size() == 37);
    CHECK(static_cast<double>(aug) / static_cast<double>(total) == doctest::Approx(0.5).epsilon(0.1));
    CHECK(assemble_training_stream(37, 100, 0.5, 8, 3, 0) == batches);
    CHECK(assemble_training_stream(37, 100, 0.5, 8, 3, 1) != batches);
}

TEST_CASE("stream edge cases") {
    for (const auto& b : assemble_training_stream(20, 0, 0.0, 4, 1))
        for (const auto& s : b) CHECK_FALSE(s.augmented);
    CHECK_THROWS_AS(assemble_training_stream(20, 0, 0.5, 4, 1), ConfigError);
    CHECK_THROWS_AS(assemble_training_stream(20, 5, 1.5, 4, 1), ConfigError);
}
