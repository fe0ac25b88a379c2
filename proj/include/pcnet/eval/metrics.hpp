#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pcnet/engine/tensor.hpp"

namespace pcnet::eval {

namespace metrics_detail {

template <Element T>
double as_score(T v) {
  const auto d = static_cast<double>(v);
  if (!std::isfinite(d)) throw DataError("metrics: non-finite prediction");
  return d;
}

template <Element U>
bool as_label(U v) {
  if (v != U{0} && v != U{1}) throw DataError("metrics: ground truth must be binary");
  return v == U{1};
}

inline void require_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": prediction " + a.str() + " does not match truth " + b.str());
}

}  // namespace metrics_detail

/// Rank-based AUC: the probability that a random positive outscores a random
/// negative, ties counting one half. Works on score/label vectors.
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the number of (positive, negative) pairs won, kept integral so the
  // result is exact up to the final division.
  std::uint64_t wins2 = 0, negatives_below = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? group_pos : group_neg)++;
      ++j;
    }
    wins2 += group_pos * (2 * negatives_below + group_neg);
    negatives_below += group_neg;
    pos += group_pos;
    neg += group_neg;
    i = j;
  }
  if (pos == 0 || neg == 0) throw DataError("roc_auc: single-class ground truth");
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

template <Element T, Element U>
double roc_auc(const Tensor<T>& pred, const Tensor<U>& truth) {
  metrics_detail::require_same(pred.shape(), truth.shape(), "roc_auc");
  std::vector<double> s(pred.numel());
  std::vector<bool> l(pred.numel());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = metrics_detail::as_score(pred[i]);
    l[i] = metrics_detail::as_label(truth[i]);
  }
  return roc_auc(s, l);
}

inline constexpr double kThreshold = 0.5;

struct Counts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

/// Metrics of one evaluation. A ratio whose denominator is zero, or an AUC
/// over single-class ground truth, is left empty and printed as "undefined".
struct EvalReport {
  std::string region = "all";
  Counts counts;
  std::optional<double> auc, acc, sp, se, dice;

  void derive_ratios() {
    const auto& c = counts;
    auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
      if (den == 0) return std::nullopt;
      return static_cast<double>(num) / static_cast<double>(den);
    };
    acc = ratio(c.tp + c.tn, c.total());
    sp = ratio(c.tn, c.tn + c.fp);
    se = ratio(c.tp, c.tp + c.fn);
    dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  }
};

/// Confusion counts with pred >= threshold as positive.
template <Element T, Element U>
Counts count_confusion(const Tensor<T>& pred, const Tensor<U>& truth, double threshold = kThreshold) {
  metrics_detail::require_same(pred.shape(), truth.shape(), "threshold_metrics");
  Counts c;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const bool p = metrics_detail::as_score(pred[i]) >= threshold, t = metrics_detail::as_label(truth[i]);
    (p ? (t ? c.tp : c.fp) : (t ? c.fn : c.tn))++;
  }
  return c;
}

template <Element T, Element U>
EvalReport threshold_metrics(const Tensor<T>& pred, const Tensor<U>& truth, double threshold = kThreshold) {
  EvalReport r;
  r.counts = count_confusion(pred, truth, threshold);
  r.derive_ratios();
  return r;
}

/// Full report over the voxels where `region` is 1 (everywhere when absent).
template <Element T, Element U>
EvalReport evaluate_region(const Tensor<T>& pred, const Tensor<U>& truth,
                           const std::optional<Tensor<std::uint8_t>>& region = std::nullopt,
                           double threshold = kThreshold) {
  metrics_detail::require_same(pred.shape(), truth.shape(), "evaluate_region");
  if (region && region->shape() != pred.shape())
    throw ShapeError("evaluate_region: region mask " + region->shape().str() + " does not match " + pred.shape().str());
  std::vector<double> s;
  std::vector<bool> l;
  EvalReport r;
  r.region = region ? "subregion" : "all";
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (region) {
      if ((*region)[i] > 1) throw DataError("evaluate_region: region mask must be binary");
      if (!(*region)[i]) continue;
    }
    const double p = metrics_detail::as_score(pred[i]);
    const bool t = metrics_detail::as_label(truth[i]);
    s.push_back(p);
    l.push_back(t);
    (p >= threshold ? (t ? r.counts.tp : r.counts.fp) : (t ? r.counts.fn : r.counts.tn))++;
  }
  if (s.empty()) throw DataError("evaluate_region: empty region");
  r.derive_ratios();
  try {
    r.auc = roc_auc(s, l);
  } catch (const DataError&) {
    r.auc = std::nullopt;
  }
  return r;
}

/// Per-field mean over the reports where the field is defined; counts are summed.
inline EvalReport mean_report(const std::vector<EvalReport>& reports) {
  EvalReport m;
  if (!reports.empty()) m.region = reports.front().region;
  auto mean = [&](std::optional<double> EvalReport::*field) -> std::optional<double> {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : reports)
      if (r.*field) {
        sum += *(r.*field);
        ++n;
      }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  for (const auto& r : reports) {
    m.counts.tp += r.counts.tp;
    m.counts.fp += r.counts.fp;
    m.counts.tn += r.counts.tn;
    m.counts.fn += r.counts.fn;
  }
  m.auc = mean(&EvalReport::auc);
  m.acc = mean(&EvalReport::acc);
  m.sp = mean(&EvalReport::sp);
  m.se = mean(&EvalReport::se);
  m.dice = mean(&EvalReport::dice);
  return m;
}

// Serialization. Field order is fixed: AUC, Acc, Sp, Se, Dice, then counts.

inline std::string format_value(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_value(const std::string& s) {
  if (s == "undefined") return std::nullopt;
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DataError("report: bad value '" + s + "'");
  return v;
}

inline void write_text(std::ostream& os, const EvalReport& r) {
  os << "region = " << r.region << '\n'
     << "auc = " << format_value(r.auc) << '\n'
     << "acc = " << format_value(r.acc) << '\n'
     << "sp = " << format_value(r.sp) << '\n'
     << "se = " << format_value(r.se) << '\n'
     << "dice = " << format_value(r.dice) << '\n'
     << "tp = " << r.counts.tp << '\n'
     << "fp = " << r.counts.fp << '\n'
     << "tn = " << r.counts.tn << '\n'
     << "fn = " << r.counts.fn << '\n';
}

inline constexpr const char* kCsvHeader = "case,region,AUC,Acc,Sp,Se,Dice,tp,fp,tn,fn";

inline std::string csv_row(const std::string& name, const EvalReport& r) {
  return name + ',' + r.region + ',' + format_value(r.auc) + ',' + format_value(r.acc) + ',' + format_value(r.sp) +
         ',' + format_value(r.se) + ',' + format_value(r.dice) + ',' + std::to_string(r.counts.tp) + ',' +
         std::to_string(r.counts.fp) + ',' + std::to_string(r.counts.tn) + ',' + std::to_string(r.counts.fn);
}

}  // namespace pcnet::eval
