#include "langseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "langseg/errors.hpp"

namespace langseg {

namespace {

using nlohmann::json;

// Object view that tracks which keys were consumed; leftovers are typos.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_ + " must be a JSON object");
    }
    for (const auto& [key, value] : j_.items()) unseen_.insert(key);
  }

  template <class T>
  void get(const std::string& key, T& target) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    unseen_.erase(key);
    try {
      target = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  bool child(const std::string& key, json& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    unseen_.erase(key);
    out = *it;
    return true;
  }

  void finish() const {
    if (!unseen_.empty()) {
      throw ConfigError("unknown config key " + path_ + "." + *unseen_.begin());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> unseen_;
};

void parse_loss(const json& j, LossWeights& loss) {
  StrictObject o(j, "train.loss");
  o.get("lambda_gen", loss.lambda_gen);
  o.get("lambda_triplet", loss.lambda_triplet);
  o.get("lambda_seg", loss.lambda_seg);
  o.get("lambda_multi_scale", loss.lambda_multi_scale);
  o.get("margin", loss.margin);
  o.get("eps", loss.eps);
  o.finish();
}

void parse_train(const json& j, TrainConfig& train) {
  StrictObject o(j, "train");
  o.get("lr", train.lr);
  o.get("batch_size", train.batch_size);
  o.get("steps", train.steps);
  o.get("beta1", train.beta1);
  o.get("beta2", train.beta2);
  o.get("adam_eps", train.adam_eps);
  o.get("seed", train.seed);
  o.get("augment_flip", train.augment_flip);
  o.get("augment_crop", train.augment_crop);
  o.get("augment_jitter", train.augment_jitter);
  o.get("checkpoint_interval", train.checkpoint_interval);
  o.get("clip_norm", train.clip_norm);
  std::string schedule;
  o.get("schedule", schedule);
  if (!schedule.empty()) train.schedule = parse_schedule(schedule);
  json loss;
  if (o.child("loss", loss)) parse_loss(loss, train.loss);
  o.finish();
}

void parse_model(const json& j, ModelConfig& model) {
  StrictObject o(j, "model");
  o.get("height", model.height);
  o.get("width", model.width);
  o.get("feature_width", model.feature_width);
  o.get("embed_dim", model.embed_dim);
  o.get("levels", model.levels);
  o.get("num_classes", model.num_classes);
  o.get("zero_language", model.zero_language);
  o.finish();
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  RunConfig cfg;
  StrictObject o(j, origin);
  json sub;
  if (o.child("model", sub)) parse_model(sub, cfg.model);
  if (o.child("train", sub)) parse_train(sub, cfg.train);
  o.get("dataset_dir", cfg.dataset_dir);
  o.get("out_dir", cfg.out_dir);
  o.get("vocab_path", cfg.vocab_path);
  o.finish();
  cfg.train.validate();
  if (cfg.model.levels < 1) throw ConfigError("model.levels must be at least 1");
  if (cfg.model.num_classes < 2) {
    throw ConfigError("model.num_classes must be at least 2");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["model"] = {{"height", cfg.model.height},
                {"width", cfg.model.width},
                {"feature_width", cfg.model.feature_width},
                {"embed_dim", cfg.model.embed_dim},
                {"levels", cfg.model.levels},
                {"num_classes", cfg.model.num_classes},
                {"zero_language", cfg.model.zero_language}};
  j["train"] = {{"lr", cfg.train.lr},
                {"batch_size", cfg.train.batch_size},
                {"steps", cfg.train.steps},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"adam_eps", cfg.train.adam_eps},
                {"seed", cfg.train.seed},
                {"schedule", schedule_name(cfg.train.schedule)},
                {"augment_flip", cfg.train.augment_flip},
                {"augment_crop", cfg.train.augment_crop},
                {"augment_jitter", cfg.train.augment_jitter},
                {"checkpoint_interval", cfg.train.checkpoint_interval},
                {"clip_norm", cfg.train.clip_norm},
                {"loss",
                 {{"lambda_gen", cfg.train.loss.lambda_gen},
                  {"lambda_triplet", cfg.train.loss.lambda_triplet},
                  {"lambda_seg", cfg.train.loss.lambda_seg},
                  {"lambda_multi_scale", cfg.train.loss.lambda_multi_scale},
                  {"margin", cfg.train.loss.margin},
                  {"eps", cfg.train.loss.eps}}}};
  j["dataset_dir"] = cfg.dataset_dir;
  j["out_dir"] = cfg.out_dir;
  j["vocab_path"] = cfg.vocab_path;
  return j.dump(2) + "\n";
}

}  // namespace langseg
