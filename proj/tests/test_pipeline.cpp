#include <doctest.h>

#include "langdaug/errors.hpp"
#include "langdaug/pipeline.hpp"

using namespace langdaug;

namespace {

MultiDomainDataset small_benchmark() { return generate_benchmark(4, 10, 16, default_domain_specs(), 5); }

// Returns the sources' own training images as the "augmented" set, optionally leaking one domain.
AugBuilder copy_builder(std::optional<int> leak = std::nullopt) {
    return [leak](const MultiDomainDataset& data, std::span<const int> ids, int) {
        AugmentedDataset out;
        out.shape = data.shape;
        std::vector<int> use(ids.begin(), ids.end());
        if (leak) use.push_back(*leak);
        for (const auto& s : source_domains(data, use)) {
            for (std::size_t i = 0; i < s.images.size(); ++i) {
                const int target = s.domain_id == use.front() ? use.back() : use.front();
                out.entries.push_back({s.images[i], s.masks[i], s.domain_id, target, 1, s.origin_index[i]});
            }
        }
        return out;
    };
}

}  // namespace

TEST_CASE("samples per chain to offset and stride") {
    CHECK(stride_for_samples(40, 13) == std::pair{3, 3});
    CHECK(stride_for_samples(40, 5) == std::pair{8, 8});
    CHECK(stride_for_samples(40, 1) == std::pair{40, 40});
    CHECK(stride_for_samples(10, 10) == std::pair{1, 1});
    for (int k : {20, 40, 41, 97})
        for (int s = 1; s <= k; ++s) {
            const auto [offset, stride] = stride_for_samples(k, s);
            LangevinConfig c{1.0, k, stride, offset, std::nullopt, false};
            CHECK(c.stored_count() == static_cast<std::size_t>(s));
        }
    CHECK_THROWS_AS(stride_for_samples(10, 11), ConfigError);
    CHECK_THROWS_AS(stride_for_samples(10, 0), ConfigError);
}

TEST_CASE("leakage is detected from entries and model provenance") {
    AugmentedDataset aug;
    aug.entries.push_back({Vector::Zero(1), Mask::Zero(1), 0, 1, 1, 0});
    CHECK_NOTHROW(check_no_leakage(aug, 2));
    CHECK_THROWS_AS(check_no_leakage(aug, 1), LeakageError);
    aug.ebm_checksums[{0, 2}] = "abc";
    CHECK_THROWS_AS(check_no_leakage(aug, 2), LeakageError);
}

TEST_CASE("leave-one-out runs every fold, seed and arm") {
    const auto data = small_benchmark();
    LooOptions o;
    o.seg.epochs = 2;
    o.seg.mix_ratio = 0.5;
    o.seeds = 2;
    o.base_seed = 1;
    const auto r = leave_one_out_eval(data, copy_builder(), o);
    CHECK(r.rows.size() == 4 * 2 * 2);
    CHECK(r.folds.size() == 4);
    for (const auto& f : r.folds) {
        CHECK(f.sources.size() == 3);
        CHECK(std::find(f.sources.begin(), f.sources.end(), f.held_out) == f.sources.end());
    }
    for (const auto& row : r.rows) CHECK(row.dice.size() == 10);
    const auto csv = r.to_csv();
    CHECK(csv.rfind("fold,method,seed,mean_dice,mean_iou\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);

    o.jobs = 3;
    CHECK(leave_one_out_eval(data, copy_builder(), o).to_csv() == csv);
}

TEST_CASE("leave-one-out refuses leaked folds") {
    const auto data = small_benchmark();
    LooOptions o;
    o.seg.epochs = 1;
    o.seeds = 1;
    o.folds = {2};
    CHECK_THROWS_AS(leave_one_out_eval(data, copy_builder(2), o), LeakageError);
    o.folds = {9};
    CHECK_THROWS_AS(leave_one_out_eval(data, copy_builder(), o), ConfigError);
}

TEST_CASE("segmenter seeds are shared across arms and distinct across folds") {
    CHECK(segmenter_seed(1, 0, 0) == segmenter_seed(1, 0, 0));
    CHECK(segmenter_seed(1, 0, 0) != segmenter_seed(1, 1, 0));
    CHECK(segmenter_seed(1, 0, 0) != segmenter_seed(1, 0, 1));
}

TEST_CASE("langevin builder trains each ordered pair once") {
    const auto data = generate_benchmark(3, 8, 16, {default_domain_specs()[0], default_domain_specs()[1], default_domain_specs()[2]}, 2);
    CdConfig cd;
    cd.n_iters = 2;
    cd.batch_size = 4;
    cd.ld = {0.1, 5, 1, 5, std::nullopt, true};
    LangevinConfig ld{0.05, 6, 3, 3, std::nullopt, true};
    LangevinAugBuilder builder(EnergyArch::conv_net(16, 16, 1, 1), cd, ld, 3);
    const std::vector<int> first{0, 1};
    const auto a = builder(data, first, 1);
    CHECK(builder.models().size() == 2);
    const auto theta01 = builder.models().at({0, 1}).params.theta;
    const std::vector<int> second{0, 1, 2};
    const auto b = builder(data, second, 2);
    CHECK(builder.models().size() == 6);
    CHECK(builder.models().at({0, 1}).params.theta == theta01);
    CHECK(a.size() == 2 * data.domains[0].train.size() * 2);
    CHECK(b.size() == 6 * data.domains[0].train.size() * 2);
    for (const auto& e : b.entries) {
        const auto& d = data.domains[static_cast<std::size_t>(e.source)];
        CHECK((e.mask == d.masks[e.origin_index]).all());
    }
}
