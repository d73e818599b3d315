#include "langseg/ablation.hpp"

#include <filesystem>

#include "langseg/errors.hpp"

namespace langseg {

namespace {
constexpr std::uint64_t kStreamInit = 10;
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names = {
      "full", "no_language_loss", "no_multi_scale", "no_language_guidance"};
  return names;
}

void apply_variant(const std::string& name, ModelConfig& model,
                   TrainConfig& train) {
  if (name == "full") return;
  if (name == "no_language_loss") {
    train.loss.lambda_triplet = 0;
    return;
  }
  if (name == "no_multi_scale") {
    model.levels = 1;
    train.loss.lambda_multi_scale = 0;
    return;
  }
  if (name == "no_language_guidance") {
    model.zero_language = true;
    train.loss.lambda_triplet = 0;
    return;
  }
  throw ConfigError("unknown ablation variant: " + name);
}

std::size_t holdout_begin(std::size_t n) { return n - n / 5; }

void init_run_params(ParamStore& params, const ModelConfig& model,
                     std::size_t vocab_size, std::uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, kStreamInit));
  init_model(params, model, vocab_size, rng);
}

std::vector<ReportRow> run_ablation(const TrainConfig& base_train,
                                    const ModelConfig& base_model,
                                    const std::vector<SegSample>& dataset,
                                    const Vocabulary& vocab,
                                    const std::vector<std::string>& variants,
                                    const std::string& out_dir) {
  if (variants.empty()) throw ContractError("run_ablation: no variants given");
  const std::size_t split = holdout_begin(dataset.size());
  if (split == 0 || split == dataset.size()) {
    throw DataError("dataset too small for an 80/20 split: " +
                    std::to_string(dataset.size()) + " samples");
  }
  const std::vector<SegSample> train_set(dataset.begin(),
                                         dataset.begin() + split);
  const std::vector<SegSample> holdout(dataset.begin() + split, dataset.end());

  std::vector<ReportRow> rows;
  rows.reserve(variants.size());
  for (const std::string& name : variants) {
    ModelConfig model = base_model;
    TrainConfig tcfg = base_train;
    apply_variant(name, model, tcfg);

    ParamStore params;
    init_run_params(params, model, vocab.size(), tcfg.seed);
    AdamState adam;
    const std::string variant_dir =
        (std::filesystem::path(out_dir) / name).string();
    train(tcfg, model, train_set, vocab, params, adam, variant_dir);
    rows.push_back({name, evaluate(params, model, holdout, vocab)});
  }
  return rows;
}

}  // namespace langseg
