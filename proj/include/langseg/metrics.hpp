#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "langseg/data_synth.hpp"
#include "langseg/decoder.hpp"

namespace langseg {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  // counts[gt][pred] += 1 per pixel; masks are [H x W] of class ids.
  void accumulate(const Tensor& pred, const Tensor& gt);
  void merge(const ConfusionMatrix& other);

  std::uint64_t at(std::size_t gt, std::size_t pred) const;
  std::uint64_t total() const;
  std::size_t num_classes() const { return classes_; }

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct MetricReport {
  double miou = 0;             // mean IoU over classes present in ground truth
  double pixel_accuracy = 0;   // trace / total
  double mean_class_iou = 0;   // mean over present foreground classes
  std::vector<double> class_iou;       // per class; -1 marks an ignored class
  std::vector<std::size_t> ignored;    // classes with no ground-truth pixels
  std::uint64_t pixels = 0;
  std::map<std::string, MetricReport> per_scenario;
};

MetricReport metrics(const ConfusionMatrix& cm);

// Runs the model over the samples (optionally one scenario only), argmax with
// low-id tie break, and aggregates overall plus per-scenario reports.
MetricReport evaluate(ParamStore& params, const ModelConfig& cfg,
                      const std::vector<SegSample>& samples,
                      const Vocabulary& vocab,
                      std::optional<Scenario> filter = std::nullopt);

void write_report_json(const std::string& path, const MetricReport& report);

struct ReportRow {
  std::string name;
  MetricReport report;
};

// name,miou,pixel_accuracy,mean_class_iou per row
void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);

}  // namespace langseg
