#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mia/textseg.hpp"

namespace mia {

/// Mann-Whitney AUC: share of (member, non-member) pairs in which the member
/// scores higher, ties counting one half. Unknown labels are rejected.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

/// Largest TPR among thresholds (distinct scores, predicting member when
/// score >= threshold) whose FPR does not exceed `fpr_target`.
double tpr_at_fpr(std::span<const double> scores, std::span<const Label> labels,
                  double fpr_target = 0.05);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // +inf for the (0, 0) corner
};

/// Operating points from the strictest threshold to the loosest; starts at
/// (0, 0) and ends at (1, 1).
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const Label> labels);
double trapezoid_auc(std::span<const RocPoint> points);

struct Histogram {
  double lo = 0.0;
  double hi = 2.0;
  std::size_t bins = 40;
  std::map<std::string, std::vector<std::uint64_t>> counts;  // label name -> bin counts

  double edge(std::size_t k) const;
  std::size_t bin_of(double x) const;
};

/// Bins values per label; values outside [lo, hi) land in the edge bins.
Histogram relative_score_histogram(const std::map<Label, std::vector<double>>& values,
                                   double lo = 0.0, double hi = 2.0, std::size_t bins = 40);

struct ScoreRow {
  std::string doc_id;
  Label label = Label::unknown;
  double score = 0.0;
  bool valid = true;
};

struct ReportCost {
  std::uint64_t total_queries = 0;
  std::uint64_t total_retries = 0;
  std::uint64_t cached_hits = 0;
  std::uint64_t sentinels = 0;
};

struct EvalReport {
  std::string method;
  double auc = 0.5;
  std::vector<std::pair<double, double>> tpr_at;  // (fpr target, tpr)
  std::vector<RocPoint> roc;
  std::vector<ScoreRow> rows;
  std::optional<Histogram> histogram;
  std::string parameters_json = "{}";  // method settings echoed into the report
  ReportCost cost;
};

inline constexpr double kDefaultFprTargetsData[] = {0.05};
inline constexpr std::span<const double> kDefaultFprTargets{kDefaultFprTargetsData};

/// Computes metrics over the valid, labelled rows.
EvalReport build_report(std::string method, std::vector<ScoreRow> rows,
                        std::span<const double> fpr_targets = kDefaultFprTargets);

/// Rounds to 12 significant digits, the precision of every emitted number.
double round12(double x);

/// Canonical report JSON (schema "v1"); `with_cost` false gives the digested form.
std::string report_json(const EvalReport& report, bool with_cost = true);
/// SHA-256 over the canonical JSON without the cost block.
std::string report_digest(const EvalReport& report);

/// Writes report.json, scores.tsv, roc.csv, histogram.csv and report.sha256.
/// Returns the digest.
std::string emit_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace mia
