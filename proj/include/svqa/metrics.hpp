#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "svqa/answer.hpp"
#include "svqa/generators.hpp"
#include "svqa/vocab.hpp"

namespace svqa {

// Lowercase word tokens with punctuation dropped; the unit for both ROUGE
// scores.
inline std::vector<std::string> rouge_tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (std::string& t : word_tokenize(text)) {
    if (t == "," || t == "." || t == "?") continue;
    out.push_back(std::move(t));
  }
  return out;
}

namespace detail {

inline double f_measure(double precision, double recall) {
  const double s = precision + recall;
  return s > 0 ? 2.0 * precision * recall / s : 0.0;
}

}  // namespace detail

// Bigram-overlap F-measure (beta = 1). Sequences shorter than two tokens have
// no bigrams: equal short sequences score 1, otherwise 0.
inline double rouge2(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_tokenize(candidate);
  const auto r = rouge_tokenize(reference);
  if (c.size() < 2 || r.size() < 2) return c == r ? 1.0 : 0.0;
  std::map<std::pair<std::string_view, std::string_view>, long> counts;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) ++counts[{c[i], c[i + 1]}];
  long overlap = 0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    auto it = counts.find({r[i], r[i + 1]});
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(c.size() - 1);
  const double q = static_cast<double>(overlap) / static_cast<double>(r.size() - 1);
  return detail::f_measure(p, q);
}

// LCS-based F-measure (beta = 1).
inline double rougeL(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_tokenize(candidate);
  const auto r = rouge_tokenize(reference);
  if (c.empty() && r.empty()) return 1.0;
  if (c.empty() || r.empty()) return 0.0;
  std::vector<long> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j) {
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[r.size()]);
  return detail::f_measure(lcs / static_cast<double>(c.size()),
                           lcs / static_cast<double>(r.size()));
}

// One evaluated sample: what was asked, what came back, and the truth. The
// contract between evaluation runs and metric aggregation.
struct PredictionRecord {
  std::string id;
  GeneratorId truth = GeneratorId::Real;
  std::string question;
  std::string generated;
  ParsedAnswer parsed;
};

struct DetectionMetrics {
  double acc = 0, f1 = 0;
  long tp = 0, fp = 0, fn = 0, tn = 0, unparseable = 0;
};

struct AttributionMetrics {
  double acc = 0, f1 = 0, rouge2_mean = 0, rougeL_mean = 0;
};

// Fake is the positive class. An unparseable answer is wrong against either
// truth: it counts toward accuracy's denominator and, on a fake sample,
// as a missed positive.
inline DetectionMetrics detection_metrics(const std::vector<PredictionRecord>& records) {
  DetectionMetrics m;
  for (const PredictionRecord& rec : records) {
    const bool truth_fake = is_fake(rec.truth);
    if (rec.parsed.unparseable()) {
      ++m.unparseable;
      if (truth_fake) ++m.fn;
      continue;
    }
    const bool pred_fake = rec.parsed.is_fake();
    if (truth_fake && pred_fake) ++m.tp;
    else if (truth_fake) ++m.fn;
    else if (pred_fake) ++m.fp;
    else ++m.tn;
  }
  const long total = static_cast<long>(records.size());
  m.acc = total > 0 ? static_cast<double>(m.tp + m.tn) / total : 0.0;
  const long denom = 2 * m.tp + m.fp + m.fn;
  m.f1 = denom > 0 ? 2.0 * m.tp / static_cast<double>(denom) : 1.0;
  return m;
}

// Scored over one testing subset's population (its fakes plus the shared real
// pool). Attribution correctness is the exact (is_fake, model_name) pair;
// family alone never counts. F1 is the binary score of the subset's own class
// against everything else in the population.
inline AttributionMetrics attribution_metrics(const std::vector<PredictionRecord>& records,
                                              GeneratorId subset) {
  if (!is_fake(subset)) throw std::invalid_argument("attribution_metrics: subset must be a fake generator");
  if (records.empty()) throw std::invalid_argument("attribution_metrics: empty subset");
  AttributionMetrics m;
  long correct = 0, tp = 0, fp = 0, fn = 0;
  double r2 = 0, rl = 0;
  for (const PredictionRecord& rec : records) {
    const bool truth_pos = rec.truth == subset;
    const bool pred_pos = rec.parsed.is_fake() && rec.parsed.model_name == subset;
    if (truth_pos && pred_pos) ++tp;
    else if (truth_pos) ++fn;
    else if (pred_pos) ++fp;
    const bool exact = is_fake(rec.truth)
                           ? pred_pos || (rec.parsed.is_fake() && rec.parsed.model_name == rec.truth)
                           : rec.parsed.is_real();
    if (exact) ++correct;
    const std::string ref = render_label(rec.truth);
    r2 += rouge2(rec.generated, ref);
    rl += rougeL(rec.generated, ref);
  }
  const double n = static_cast<double>(records.size());
  m.acc = correct / n;
  const long denom = 2 * tp + fp + fn;
  m.f1 = denom > 0 ? 2.0 * tp / static_cast<double>(denom) : 1.0;
  m.rouge2_mean = r2 / n;
  m.rougeL_mean = rl / n;
  return m;
}

// Rows: truth {real, fake}. Cols: parsed {real, fake, unparseable}, so the
// cell sum always equals the evaluated population.
struct BinaryMatrix {
  std::array<std::array<long, 3>, 2> cells{};
  long total() const {
    long t = 0;
    for (const auto& row : cells)
      for (long c : row) t += c;
    return t;
  }
};

// Over fake samples detected as fake. Rows: truth family {gan, diffusion};
// cols: parsed category {gan, diffusion, none}.
struct FamilyMatrix {
  std::array<std::array<long, 3>, 2> cells{};
  long total() const {
    long t = 0;
    for (const auto& row : cells)
      for (long c : row) t += c;
    return t;
  }
};

// Over fake samples detected as fake. Rows: the 12 fake generators; cols: the
// 12 generator names plus a none column for detected fakes with no parsed
// source.
struct ModelMatrix {
  std::array<std::array<long, 13>, 12> cells{};
  long total() const {
    long t = 0;
    for (const auto& row : cells)
      for (long c : row) t += c;
    return t;
  }
};

inline int fake_index(GeneratorId g) {
  for (std::size_t i = 0; i < kAllFakes.size(); ++i)
    if (kAllFakes[i] == g) return static_cast<int>(i);
  throw std::invalid_argument("fake_index: not a fake generator");
}

struct ConfusionMatrices {
  BinaryMatrix binary;
  FamilyMatrix family;
  ModelMatrix model;
};

inline ConfusionMatrices confusion_matrices(const std::vector<PredictionRecord>& records) {
  ConfusionMatrices out;
  for (const PredictionRecord& rec : records) {
    const int row = is_fake(rec.truth) ? 1 : 0;
    const int col = rec.parsed.unparseable() ? 2 : (rec.parsed.is_fake() ? 1 : 0);
    ++out.binary.cells[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
    if (!is_fake(rec.truth) || !rec.parsed.is_fake()) continue;
    const int frow = family_of(rec.truth) == Family::Gan ? 0 : 1;
    int fcol = 2;
    if (rec.parsed.model_category == Family::Gan) fcol = 0;
    else if (rec.parsed.model_category == Family::Diffusion) fcol = 1;
    ++out.family.cells[static_cast<std::size_t>(frow)][static_cast<std::size_t>(fcol)];
    const int mrow = fake_index(rec.truth);
    const int mcol = rec.parsed.model_name ? fake_index(*rec.parsed.model_name) : 12;
    ++out.model.cells[static_cast<std::size_t>(mrow)][static_cast<std::size_t>(mcol)];
  }
  return out;
}

// Per-subset scores plus the matrices that belong to that subset's run.
struct SubsetReport {
  std::string subset;
  long population = 0;
  long fake_count = 0;
  long real_count = 0;
  DetectionMetrics detection;
  AttributionMetrics attribution;
  BinaryMatrix binary;
  FamilyMatrix family;
};

// Full evaluation battery for one run. Averages are unweighted across
// subsets; the model-level matrix aggregates every subset's detected fakes.
struct MetricsReport {
  std::vector<SubsetReport> subsets;
  double avg_detection_acc = 0, avg_detection_f1 = 0;
  double avg_attribution_acc = 0, avg_attribution_f1 = 0;
  double avg_rouge2 = 0, avg_rougeL = 0;
  ModelMatrix model_matrix;

  void finalize_averages() {
    if (subsets.empty()) return;
    const double n = static_cast<double>(subsets.size());
    avg_detection_acc = avg_detection_f1 = 0;
    avg_attribution_acc = avg_attribution_f1 = avg_rouge2 = avg_rougeL = 0;
    for (const SubsetReport& s : subsets) {
      avg_detection_acc += s.detection.acc;
      avg_detection_f1 += s.detection.f1;
      avg_attribution_acc += s.attribution.acc;
      avg_attribution_f1 += s.attribution.f1;
      avg_rouge2 += s.attribution.rouge2_mean;
      avg_rougeL += s.attribution.rougeL_mean;
    }
    avg_detection_acc /= n;
    avg_detection_f1 /= n;
    avg_attribution_acc /= n;
    avg_attribution_f1 /= n;
    avg_rouge2 /= n;
    avg_rougeL /= n;
  }
};

}  // namespace svqa
