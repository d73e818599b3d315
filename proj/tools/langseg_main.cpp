#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "langseg/ablation.hpp"
#include "langseg/checkpoint.hpp"
#include "langseg/config.hpp"
#include "langseg/gradcheck.hpp"
#include "langseg/losses.hpp"
#include "langseg/metrics.hpp"
#include "langseg/pnm.hpp"
#include "langseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace langseg;

namespace {

// exit codes: 0 success, 2 usage/config, 3 numeric failure, 4 artifact mismatch
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitArtifact = 4;

// A bad flag value is a usage problem, not bad data.
Scenario parse_scenario_flag(const std::string& name) {
  try {
    return parse_scenario(name);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

std::size_t thread_limit() {
  const char* env = std::getenv("LANGSEG_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) {
    throw ConfigError("LANGSEG_THREADS must be a positive integer, got '" +
                      std::string(env) + "'");
  }
  return std::size_t(v);
}

Vocabulary load_vocab(const RunConfig& cfg) {
  if (cfg.vocab_path.empty()) return builtin_vocabulary();
  return Vocabulary::load_file(cfg.vocab_path);
}

std::vector<SegSample> load_samples(const RunConfig& cfg,
                                    const std::string& override_dir) {
  const std::string dir = override_dir.empty() ? cfg.dataset_dir : override_dir;
  if (dir.empty()) throw ConfigError("no dataset directory configured");
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    throw ConfigError("dataset not found: " + dir);
  }
  return load_dataset(dir);
}

struct CommonFlags {
  std::string config_path;
  std::string dataset_dir;
  std::string out_dir;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path);
  if (!flags.dataset_dir.empty()) cfg.dataset_dir = flags.dataset_dir;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  return cfg;
}

int cmd_synth(std::size_t n, std::uint64_t seed, const std::string& scenario,
              std::size_t height, std::size_t width, const std::string& out) {
  std::vector<Scenario> cycle;
  if (scenario == "mixed") {
    cycle = {Scenario::clean, Scenario::occluded, Scenario::cluttered,
             Scenario::lowres};
  } else {
    cycle = {parse_scenario_flag(scenario)};
  }
  std::vector<SegSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples.push_back(
        generate_scene(seed + i, height, width, cycle[i % cycle.size()]));
  }
  write_dataset(samples, out);
  std::cout << (fs::path(out) / "manifest.json").string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& resume_path) {
  Vocabulary vocab = load_vocab(cfg);
  std::vector<SegSample> data = load_samples(cfg, "");

  fs::create_directories(cfg.out_dir);
  {
    // effective config including overlays, for reproducing the run
    std::ofstream out(fs::path(cfg.out_dir) / "config.resolved.json",
                      std::ios::binary);
    out << run_config_to_json(cfg);
  }

  ParamStore params;
  init_run_params(params, cfg.model, vocab.size(), cfg.train.seed);
  AdamState adam;
  std::size_t start_step = 0;
  if (!resume_path.empty()) {
    start_step = load_checkpoint(resume_path, params, adam,
                                 model_config_hash(cfg.model, vocab.size()));
  }
  TrainResult result = train(cfg.train, cfg.model, data, vocab, params, adam,
                             cfg.out_dir, start_step);
  std::cout << result.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& scenario) {
  Vocabulary vocab = load_vocab(cfg);
  std::vector<SegSample> data = load_samples(cfg, "");

  ParamStore params;
  init_run_params(params, cfg.model, vocab.size(), cfg.train.seed);
  AdamState adam;
  load_checkpoint(checkpoint_path, params, adam,
                  model_config_hash(cfg.model, vocab.size()));

  std::optional<Scenario> filter;
  if (!scenario.empty()) filter = parse_scenario_flag(scenario);
  MetricReport report = evaluate(params, cfg.model, data, vocab, filter);

  fs::create_directories(cfg.out_dir);
  write_report_json((fs::path(cfg.out_dir) / "report.json").string(), report);
  std::vector<ReportRow> rows = {{"overall", report}};
  for (const auto& [name, sub] : report.per_scenario) rows.push_back({name, sub});
  write_report_csv((fs::path(cfg.out_dir) / "report.csv").string(), rows);

  // predicted masks, named like the inputs so they pair up one-to-one
  const fs::path pred_dir = fs::path(cfg.out_dir) / "predictions";
  fs::create_directories(pred_dir);
  char name[32];
  std::size_t index = 0;
  for (const SegSample& sample : data) {
    if (filter && sample.scenario != *filter) {
      ++index;
      continue;
    }
    Tensor pred = hard_mask(
        predict_mask(sample.image, tokenize(sample.prompt, vocab), cfg.model, params));
    std::snprintf(name, sizeof name, "%06zu.pgm", index++);
    save_pgm((pred_dir / name).string(), pred);
  }

  std::printf("mIoU %.4f  pixel accuracy %.4f  (%llu pixels)\n", report.miou,
              report.pixel_accuracy,
              static_cast<unsigned long long>(report.pixels));
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  Vocabulary vocab = load_vocab(cfg);
  std::vector<SegSample> data = load_samples(cfg, "");

  std::vector<ReportRow> rows = run_ablation(cfg.train, cfg.model, data, vocab,
                                             ablation_variants(), cfg.out_dir);
  const std::string table = (fs::path(cfg.out_dir) / "ablation.csv").string();
  write_report_csv(table, rows);
  for (const ReportRow& row : rows) {
    std::printf("%-22s mIoU %.4f  PA %.4f  class IoU %.4f\n", row.name.c_str(),
                row.report.miou, row.report.pixel_accuracy,
                row.report.mean_class_iou);
  }
  std::cout << table << "\n";
  return 0;
}

// Seeded micro-model: 8x8 canvas, two pyramid levels, three classes. Small
// enough that central differences over every loss stay well under a minute.
int cmd_gradcheck(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.feature_width = 6;
  cfg.embed_dim = 8;
  cfg.levels = 2;
  cfg.num_classes = 3;

  Vocabulary vocab = builtin_vocabulary();
  ParamStore params;
  init_run_params(params, cfg, vocab.size(), seed);

  SplitMix64 rng(derive_seed(seed, 99));
  std::vector<Tensor> images, gts;
  std::vector<TokenSequence> seqs;
  const std::vector<std::string> prompts = {"a scene with red circle",
                                            "a scene with blue square"};
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor img({3, cfg.height, cfg.width});
    for (auto& v : img.values()) v = rng.next_double();
    Tensor gt({cfg.height, cfg.width});
    for (auto& v : gt.values()) v = double(rng.next_below(cfg.num_classes));
    images.push_back(std::move(img));
    gts.push_back(std::move(gt));
    seqs.push_back(tokenize(prompts[i], vocab));
  }

  LossWeights weights;
  auto batch = [&](ParamStore& p) {
    std::vector<DecoderOutputs> outs;
    for (std::size_t i = 0; i < images.size(); ++i) {
      outs.push_back(forward_model(make_leaf(images[i]), seqs[i], cfg, p));
    }
    return batch_loss(outs, gts, weights);
  };

  struct Target {
    const char* name;
    std::function<Var(ParamStore&)> fn;
  };
  const std::vector<Target> targets = {
      {"gen", [&](ParamStore& p) { return batch(p).gen; }},
      {"triplet", [&](ParamStore& p) { return batch(p).triplet; }},
      {"seg", [&](ParamStore& p) { return batch(p).seg; }},
      {"multi_scale", [&](ParamStore& p) { return batch(p).multi_scale; }},
      {"total", [&](ParamStore& p) { return batch(p).total; }},
  };

  bool all_pass = true;
  for (const Target& target : targets) {
    GradCheckReport report = grad_check(target.fn, params);
    std::printf("%-12s max rel err %.3e  %s\n", target.name, report.worst,
                report.pass ? "ok" : "FAIL");
    if (!report.pass) {
      std::printf("%s\n", format_report(report).c_str());
      all_pass = false;
    }
  }
  if (!all_pass) {
    std::fprintf(stderr, "gradient check failed\n");
    return kExitNumeric;
  }
  std::printf("all gradients verified\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-guided semantic segmentation pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::size_t synth_n = 0;
  std::uint64_t synth_seed = 7;
  std::string synth_scenario = "clean";
  std::string synth_out;
  std::size_t synth_height = 64, synth_width = 64;
  synth->add_option("--n", synth_n, "number of samples")->required();
  synth->add_option("--seed", synth_seed, "base seed; sample i uses seed+i");
  synth->add_option("--scenario", synth_scenario,
                    "clean|occluded|cluttered|lowres|mixed");
  synth->add_option("--height", synth_height, "canvas height");
  synth->add_option("--width", synth_width, "canvas width");
  synth->add_option("--out", synth_out, "output directory")->required();

  // shared train/eval/ablate flags
  CommonFlags train_flags, eval_flags, ablate_flags;
  auto add_common = [](CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config_path, "config.json path");
    if (config_required) opt->required();
    cmd->add_option("--dataset", flags.dataset_dir, "dataset directory override");
    cmd->add_option("--out", flags.out_dir, "output directory override");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, train_flags, true);
  std::string resume_path;
  std::optional<std::size_t> steps_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<double> lr_override;
  std::string schedule_override;
  train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");
  train_cmd->add_option("--steps", steps_override, "step count override");
  train_cmd->add_option("--seed", seed_override, "seed override");
  train_cmd->add_option("--lr", lr_override, "learning rate override");
  train_cmd->add_option("--schedule", schedule_override, "joint|alternating");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval_flags, true);
  std::string eval_checkpoint, eval_scenario;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--scenario", eval_scenario, "restrict to one scenario");

  auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation table");
  add_common(ablate_cmd, ablate_flags, true);

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "verify gradients");
  std::uint64_t gradcheck_seed = 42;
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "micro-model seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    (void)thread_limit();  // validated; current kernels are single-threaded
    if (synth->parsed()) {
      if (synth_n < 1) throw ConfigError("--n must be at least 1");
      return cmd_synth(synth_n, synth_seed, synth_scenario, synth_height,
                       synth_width, synth_out);
    }
    if (train_cmd->parsed()) {
      RunConfig cfg = resolve_config(train_flags);
      if (steps_override) cfg.train.steps = *steps_override;
      if (seed_override) cfg.train.seed = *seed_override;
      if (lr_override) cfg.train.lr = *lr_override;
      if (!schedule_override.empty()) {
        cfg.train.schedule = parse_schedule(schedule_override);
      }
      cfg.train.validate();
      return cmd_train(cfg, resume_path);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(resolve_config(eval_flags), eval_checkpoint, eval_scenario);
    }
    if (ablate_cmd->parsed()) return cmd_ablate(resolve_config(ablate_flags));
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_seed);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ArtifactMismatchError& e) {
    std::fprintf(stderr, "artifact mismatch: %s\n", e.what());
    return kExitArtifact;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  }
}
