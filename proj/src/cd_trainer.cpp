#include "langdaug/cd_trainer.hpp"

#include "langdaug/tensor_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <mutex>
#include <regex>

namespace langdaug {

void CdConfig::validate() const {
    if (n_iters < 0) throw ConfigError("cd: n_iters must be >= 0");
    if (batch_size < 1) throw ConfigError("cd: batch_size must be >= 1");
    if (ld.n_steps < 1) throw ConfigError("cd: Langevin n_steps must be >= 1");
    ld.validate();
    if (!(adam.lr > 0.0)) throw ConfigError("cd: learning rate must be positive");
    if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("cd: grad_clip must be positive");
    if (checkpoint_every < 0) throw ConfigError("cd: checkpoint_every must be >= 0");
}

std::string TrainTrace::to_csv() const {
    std::string out = "iter,cd_surrogate,grad_norm\n";
    for (const auto& e : entries) out += fmt::format("{},{:.17g},{:.17g}\n", e.iter, e.cd_surrogate, e.grad_norm);
    return out;
}

Vector cd_gradient(const EnergyParams& params, std::span<const Vector> pos_batch, std::span<const Vector> neg_batch) {
    if (pos_batch.empty() || neg_batch.empty()) throw ConfigError("cd_gradient: empty batch");
    return energy_grad_params_mean(params, pos_batch) - energy_grad_params_mean(params, neg_batch);
}

namespace {

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m, RngStream& rng) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(m);
    return pool;
}

}  // namespace

CdTrainer::CdTrainer(std::span<const Vector> source, std::span<const Vector> target, EnergyParams init,
                     CdConfig config, DomainPair pair)
    : source_(source), target_(target), params_(std::move(init)), config_(std::move(config)), pair_(pair) {
    config_.validate();
    if (source_.empty() || target_.empty()) throw ConfigError("train_ebm: source and target must be non-empty");
    if (pair_.first >= 0 && pair_.first == pair_.second) throw ConfigError("train_ebm: source and target domain must differ");
    const auto cap = std::min(source_.size(), target_.size());
    if (static_cast<std::size_t>(config_.batch_size) > cap) {
        throw ConfigError(fmt::format("train_ebm: batch_size {} exceeds smallest domain size {}", config_.batch_size, cap));
    }
    adam_ = AdamState::fresh(params_.theta.size(), config_.adam);
}

CdTrainer::StepResult CdTrainer::step() {
    const long t = iter_;
    auto rng = derive_stream(config_.base_seed, {{"cd_source", pair_.first}, {"cd_target", pair_.second}, {"iter", t}});
    const auto b = static_cast<std::size_t>(config_.batch_size);
    auto pick_rng = rng.child("batch", 0);
    const auto pos_idx = sample_without_replacement(target_.size(), b, pick_rng);
    const auto start_idx = sample_without_replacement(source_.size(), b, pick_rng);

    std::vector<Vector> pos;
    std::vector<Vector> neg;
    pos.reserve(b);
    neg.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        pos.push_back(target_[pos_idx[i]]);
        try {
            neg.push_back(run_chain_final(source_[start_idx[i]], params_, config_.ld, rng.child("chain", static_cast<std::int64_t>(i))));
        } catch (const DivergenceError& e) {
            throw TrainingError(fmt::format("CD iteration {}: {}", t, e.what()), t);
        }
    }

    StepResult result;
    result.gradient = cd_gradient(params_, pos, neg);
    if (!result.gradient.allFinite()) throw TrainingError(fmt::format("CD iteration {}: non-finite gradient", t), t);
    result.entry = {t, energy_mean(params_, pos) - energy_mean(params_, neg), result.gradient.norm()};

    Vector applied = result.gradient;
    if (config_.grad_clip && result.entry.grad_norm > *config_.grad_clip) {
        applied *= *config_.grad_clip / result.entry.grad_norm;
    }
    adam_update(params_.theta, applied, adam_);
    trace_.entries.push_back(result.entry);
    ++iter_;

    if (config_.checkpoint_every > 0 && iter_ % config_.checkpoint_every == 0) {
        save_energy_params(params_,
                           config_.checkpoint_dir / fmt::format("ckpt_{}_{}_iter{}", pair_.first, pair_.second, iter_),
                           pair_);
    }
    return result;
}

std::pair<EnergyParams, TrainTrace> train_ebm(std::span<const Vector> source, std::span<const Vector> target,
                                              const EnergyArch& arch, const CdConfig& config, DomainPair pair) {
    auto init_seed = derive_stream(config.base_seed, {{"ebm_init_source", pair.first}, {"ebm_init_target", pair.second}}).next_u64();
    CdTrainer trainer(source, target, init_energy_params(arch, init_seed), config, pair);
    for (int i = 0; i < config.n_iters; ++i) trainer.step();
    return {trainer.params(), trainer.trace()};
}

std::map<DomainPair, PairModel> train_all_pairs(std::span<const DomainSamples> domains, const EnergyArch& arch,
                                                const CdConfig& config, int jobs) {
    if (domains.size() < 2) throw ConfigError("train_all_pairs: need at least 2 domains");
    std::vector<std::pair<std::size_t, std::size_t>> work;
    for (std::size_t i = 0; i < domains.size(); ++i)
        for (std::size_t j = 0; j < domains.size(); ++j)
            if (i != j) work.emplace_back(i, j);

    std::vector<std::optional<PairModel>> results(work.size());
    parallel_for(work.size(), jobs, [&](std::size_t w) {
        const auto& src = domains[work[w].first];
        const auto& tgt = domains[work[w].second];
        const DomainPair pair{src.domain_id, tgt.domain_id};
        try {
            auto [params, trace] = train_ebm(src.samples, tgt.samples, arch, config, pair);
            results[w] = PairModel{std::move(params), std::move(trace)};
        } catch (const TrainingError& e) {
            throw TrainingError(fmt::format("pair ({}, {}): {}", pair.first, pair.second, e.what()), e.iteration());
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("pair ({}, {}): {}", pair.first, pair.second, e.what()));
        }
    });

    std::map<DomainPair, PairModel> out;
    for (std::size_t w = 0; w < work.size(); ++w) {
        out.emplace(DomainPair{domains[work[w].first].domain_id, domains[work[w].second].domain_id},
                    std::move(*results[w]));
    }
    return out;
}

void save_pair_models(const std::map<DomainPair, PairModel>& models, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [pair, model] : models) {
        save_energy_params(model.params, dir / fmt::format("ebm_{}_{}", pair.first, pair.second), pair);
        std::ofstream(dir / fmt::format("trace_{}_{}.csv", pair.first, pair.second)) << model.trace.to_csv();
    }
}

std::map<DomainPair, EnergyParams> load_pair_models(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw MissingArtifactError(fmt::format("model directory {} not found", dir.string()));
    static const std::regex name_re(R"(ebm_(-?\d+)_(-?\d+)\.meta\.json)");
    std::vector<std::filesystem::path> found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) found.push_back(entry.path());
    std::sort(found.begin(), found.end());

    std::map<DomainPair, EnergyParams> out;
    for (const auto& path : found) {
        std::smatch m;
        const auto name = path.filename().string();
        if (!std::regex_match(name, m, name_re)) continue;
        const auto base = dir / fmt::format("ebm_{}_{}", m[1].str(), m[2].str());
        auto [params, pair] = load_energy_params(base);
        const DomainPair key = pair.value_or(DomainPair{std::stoi(m[1].str()), std::stoi(m[2].str())});
        out.emplace(key, std::move(params));
    }
    if (out.empty()) throw MissingArtifactError(fmt::format("no ebm_<i>_<j> models in {}", dir.string()));
    return out;
}

}  // namespace langdaug
