#include "ctiunet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ctiunet/errors.hpp"

namespace ctiunet {
namespace {

// Order-independent mean: sum of sorted values.
double stable_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
}

}  // namespace

ConfusionCounts confusion(const Tensor4& pred, const Tensor4& gt) {
  if (pred.shape() != gt.shape()) {
    throw ValidationError("prediction " + pred.shape().str() +
                          " and ground truth " + gt.shape().str() + " differ");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double g = gt[i];
    if ((p != 0.0 && p != 1.0) || (g != 0.0 && g != 1.0)) {
      throw ValidationError("confusion counts need binary inputs");
    }
    if (p == 1.0) {
      (g == 1.0 ? c.tp : c.fp)++;
    } else {
      (g == 1.0 ? c.fn : c.tn)++;
    }
  }
  return c;
}

double dsc(const ConfusionCounts& c) {
  const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
  if (den == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

double iou(const ConfusionCounts& c) {
  const std::uint64_t den = c.tp + c.fp + c.fn;
  if (den == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(den);
}

const ConditionRow* MetricsReport::find(std::string_view label) const {
  if (label == "All") return &all;
  for (const auto& r : conditions)
    if (r.label == label) return &r;
  return nullptr;
}

std::vector<std::string> report_columns(const MetricsReport& report) {
  std::vector<std::string> cols;
  for (Condition c : kAllConditions) {
    if (c == Condition::kSynthetic && !report.find(condition_label(c))) continue;
    cols.emplace_back(condition_label(c));
  }
  cols.emplace_back("All");
  return cols;
}

std::string MetricsReport::render_table(const std::string& method) const {
  const std::vector<std::string> cols = report_columns(*this);
  auto render_block = [&](const std::string& title, auto cell) {
    std::vector<std::string> header{"Method"};
    std::vector<std::string> values{method};
    header.insert(header.end(), cols.begin(), cols.end());
    for (const auto& col : cols) {
      const ConditionRow* row = find(col);
      values.push_back(row && row->n > 0 ? cell(*row) : "-");
    }
    std::ostringstream os;
    os << title << "\n";
    for (const auto* line : {&header, &values}) {
      for (std::size_t i = 0; i < line->size(); ++i) {
        const std::size_t width = std::max(header[i].size(), values[i].size());
        if (i > 0) os << " | ";
        os << (i + 1 == line->size() ? (*line)[i] : pad((*line)[i], width));
      }
      os << "\n";
    }
    return os.str();
  };
  std::ostringstream os;
  os << render_block("DSC (%)", [](const ConditionRow& r) { return percent(r.dsc_mean); });
  os << "\n";
  os << render_block("IoU (%)", [](const ConditionRow& r) { return percent(r.iou_mean); });
  os << "\n";
  os << render_block("Samples", [](const ConditionRow& r) { return std::to_string(r.n); });
  return os.str();
}

std::string MetricsReport::to_tsv() const {
  std::ostringstream os;
  os << "# seed=" << seed << "\n";
  os << "# config_hash=" << config_hash << "\n";
  os << "# timestamp=" << timestamp << "\n";
  os << "condition\tn\tdsc_mean\tiou_mean\n";
  auto row = [&](const ConditionRow& r) {
    os << r.label << "\t" << r.n << "\t" << percent(r.dsc_mean) << "\t"
       << percent(r.iou_mean) << "\n";
  };
  for (const auto& r : conditions) row(r);
  row(all);
  return os.str();
}

MetricsReport aggregate(const std::vector<SampleScore>& scores) {
  MetricsReport report;
  std::vector<double> all_dsc, all_iou;
  for (Condition c : kAllConditions) {
    std::vector<double> d, j;
    for (const SampleScore& s : scores) {
      if (s.condition != c) continue;
      d.push_back(s.dsc);
      j.push_back(s.iou);
    }
    if (d.empty()) continue;
    all_dsc.insert(all_dsc.end(), d.begin(), d.end());
    all_iou.insert(all_iou.end(), j.begin(), j.end());
    report.conditions.push_back(
        {std::string(condition_label(c)), d.size(), stable_mean(d), stable_mean(j)});
  }
  report.all = {"All", all_dsc.size(), stable_mean(all_dsc), stable_mean(all_iou)};
  return report;
}

}  // namespace ctiunet
