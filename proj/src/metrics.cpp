#include "langseg/metrics.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "langseg/errors.hpp"

namespace langseg {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ContractError("confusion matrix needs classes");
}

namespace {

std::size_t checked_id(double v, std::size_t classes, const char* which) {
  long id = std::lround(v);
  if (v != double(id) || id < 0 || std::size_t(id) >= classes) {
    throw DataError(std::string(which) + " mask value " + std::to_string(v) +
                    " is not a class id below " + std::to_string(classes));
  }
  return std::size_t(id);
}

}  // namespace

void ConfusionMatrix::accumulate(const Tensor& pred, const Tensor& gt) {
  if (!pred.same_shape(gt) || pred.rank() != 2) {
    throw DataError("confusion accumulate: shape mismatch " +
                    shape_to_string(pred.shape()) + " vs " +
                    shape_to_string(gt.shape()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t g = checked_id(gt[i], classes_, "ground-truth");
    const std::size_t p = checked_id(pred[i], classes_, "predicted");
    ++counts_[g * classes_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) {
    throw ContractError("confusion merge: class count mismatch");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::at(std::size_t gt, std::size_t pred) const {
  if (gt >= classes_ || pred >= classes_) {
    throw ContractError("confusion at: index out of range");
  }
  return counts_[gt * classes_ + pred];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (std::uint64_t c : counts_) t += c;
  return t;
}

MetricReport metrics(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  const std::uint64_t total = cm.total();
  if (total == 0) throw ContractError("metrics: empty confusion matrix");

  MetricReport report;
  report.pixels = total;
  report.class_iou.assign(c, -1.0);
  std::uint64_t trace = 0;
  double iou_sum = 0, fg_iou_sum = 0;
  std::size_t present = 0, fg_present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    trace += cm.at(k, k);
    if (row == 0) {
      report.ignored.push_back(k);
      continue;
    }
    const std::uint64_t inter = cm.at(k, k);
    const std::uint64_t uni = row + col - inter;
    const double iou = double(inter) / double(uni);
    report.class_iou[k] = iou;
    iou_sum += iou;
    ++present;
    if (k > 0) {
      fg_iou_sum += iou;
      ++fg_present;
    }
  }
  if (present == 0) throw ContractError("metrics: no class present in ground truth");
  report.miou = iou_sum / double(present);
  report.mean_class_iou = fg_present > 0 ? fg_iou_sum / double(fg_present) : 0.0;
  report.pixel_accuracy = double(trace) / double(total);
  return report;
}

MetricReport evaluate(ParamStore& params, const ModelConfig& cfg,
                      const std::vector<SegSample>& samples,
                      const Vocabulary& vocab, std::optional<Scenario> filter) {
  ConfusionMatrix overall(cfg.num_classes);
  std::map<std::string, ConfusionMatrix> per_scenario;
  std::size_t used = 0;
  for (const SegSample& sample : samples) {
    if (filter && sample.scenario != *filter) continue;
    ++used;
    TokenSequence seq = tokenize(sample.prompt, vocab);
    Tensor pred = hard_mask(predict_mask(sample.image, seq, cfg, params));
    overall.accumulate(pred, sample.mask);
    auto [it, inserted] = per_scenario.try_emplace(
        scenario_name(sample.scenario), cfg.num_classes);
    it->second.accumulate(pred, sample.mask);
  }
  if (used == 0) throw ContractError("evaluate: no samples match the filter");
  MetricReport report = metrics(overall);
  for (const auto& [name, cm] : per_scenario) {
    report.per_scenario.emplace(name, metrics(cm));
  }
  return report;
}

namespace {

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["miou"] = r.miou;
  j["pixel_accuracy"] = r.pixel_accuracy;
  j["mean_class_iou"] = r.mean_class_iou;
  j["mean_class_iou_definition"] =
      "unweighted mean IoU over foreground classes present in ground truth";
  nlohmann::json ious = nlohmann::json::array();
  for (double v : r.class_iou) {
    if (v < 0) {
      ious.push_back(nullptr);
    } else {
      ious.push_back(v);
    }
  }
  j["class_iou"] = ious;
  j["ignored_classes"] = r.ignored;
  j["pixels"] = r.pixels;
  if (!r.per_scenario.empty()) {
    nlohmann::json sub;
    for (const auto& [name, rep] : r.per_scenario) {
      sub[name] = report_to_json(rep);
    }
    j["scenarios"] = sub;
  }
  return j;
}

}  // namespace

void write_report_json(const std::string& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path);
  out << report_to_json(report).dump(2) << "\n";
}

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path);
  out << "name,miou,pixel_accuracy,mean_class_iou\n";
  char line[160];
  for (const ReportRow& row : rows) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f\n", row.name.c_str(),
                  row.report.miou, row.report.pixel_accuracy,
                  row.report.mean_class_iou);
    out << line;
  }
}

}  // namespace langseg
