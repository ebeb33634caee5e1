#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctiunet/data.hpp"
#include "ctiunet/tensor.hpp"

namespace ctiunet {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Both inputs binary with equal shapes; ValidationError otherwise.
ConfusionCounts confusion(const Tensor4& pred, const Tensor4& gt);

// 2tp / (2tp + fp + fn); 1 when prediction and truth are both empty.
double dsc(const ConfusionCounts& c);
// tp / (tp + fp + fn); 1 when prediction and truth are both empty.
double iou(const ConfusionCounts& c);

struct SampleScore {
  Condition condition = Condition::kSynthetic;
  double dsc = 0.0;
  double iou = 0.0;
  std::string id;
};

struct ConditionRow {
  std::string label;
  std::size_t n = 0;
  double dsc_mean = 0.0;  // fraction in [0, 1]
  double iou_mean = 0.0;
};

struct MetricsReport {
  std::vector<ConditionRow> conditions;  // conditions with samples, fixed order
  ConditionRow all;                      // sample-weighted over everything
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string timestamp;

  const ConditionRow* find(std::string_view label) const;
  // Fixed-width table with the report condition columns followed by "All";
  // percentages with two decimals.
  std::string render_table(const std::string& method = "Our Method") const;
  // condition, n, dsc_mean, iou_mean (percent), preceded by '#' metadata lines.
  std::string to_tsv() const;
};

// Columns shown by render_table, ending with "All"; Synthetic appears only
// when such samples exist.
std::vector<std::string> report_columns(const MetricsReport& report);

MetricsReport aggregate(const std::vector<SampleScore>& scores);

}  // namespace ctiunet
