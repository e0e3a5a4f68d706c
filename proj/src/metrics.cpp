#include "mia/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mia/digest.hpp"
#include "mia/errors.hpp"

namespace mia {
namespace {

using json = nlohmann::json;

struct Counts {
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

// Indices sorted by descending score.
std::vector<std::size_t> check_and_order(std::span<const double> scores,
                                         std::span<const Label> labels, Counts& counts) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw DataError("NaN score");
    if (labels[i] == Label::member) {
      ++counts.positives;
    } else if (labels[i] == Label::non_member) {
      ++counts.negatives;
    } else {
      throw DataError("unlabelled document in metric input");
    }
  }
  if (counts.positives == 0 || counts.negatives == 0) {
    throw DataError("metrics need at least one member and one non-member");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// Calls visit(tp, fp, threshold) after each group of tied scores.
template <typename Visit>
void sweep(std::span<const double> scores, std::span<const Label> labels,
           const std::vector<std::size_t>& order, Visit visit) {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == Label::member ? tp : fp) += 1;
      ++i;
    }
    visit(tp, fp, s);
  }
}

json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round12(x);
}

std::string fmt12(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  Counts counts;
  auto order = check_and_order(scores, labels, counts);
  // Twice the Mann-Whitney U, accumulated in integers over ascending groups.
  std::reverse(order.begin(), order.end());
  std::uint64_t twice_u = 0;
  std::uint64_t negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == Label::member ? pos : neg) += 1;
      ++i;
    }
    twice_u += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(counts.positives) * static_cast<double>(counts.negatives));
}

double tpr_at_fpr(std::span<const double> scores, std::span<const Label> labels,
                  double fpr_target) {
  Counts counts;
  const auto order = check_and_order(scores, labels, counts);
  double best = 0.0;
  sweep(scores, labels, order, [&](std::uint64_t tp, std::uint64_t fp, double) {
    const double fpr = static_cast<double>(fp) / static_cast<double>(counts.negatives);
    if (fpr <= fpr_target) {
      best = std::max(best, static_cast<double>(tp) / static_cast<double>(counts.positives));
    }
  });
  return best;
}

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const Label> labels) {
  Counts counts;
  const auto order = check_and_order(scores, labels, counts);
  std::vector<RocPoint> points{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  sweep(scores, labels, order, [&](std::uint64_t tp, std::uint64_t fp, double s) {
    points.push_back({static_cast<double>(fp) / static_cast<double>(counts.negatives),
                      static_cast<double>(tp) / static_cast<double>(counts.positives), s});
  });
  return points;
}

double trapezoid_auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

double Histogram::edge(std::size_t k) const {
  return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
}

std::size_t Histogram::bin_of(double x) const {
  if (!(x >= lo)) return 0;
  const double pos = (x - lo) / (hi - lo) * static_cast<double>(bins);
  if (pos >= static_cast<double>(bins)) return bins - 1;
  return static_cast<std::size_t>(pos);
}

Histogram relative_score_histogram(const std::map<Label, std::vector<double>>& values, double lo,
                                   double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw ConfigError("histogram needs bins > 0 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.bins = bins;
  std::size_t total = 0;
  for (const auto& [label, xs] : values) {
    auto& counts = h.counts[to_string(label)];
    counts.assign(bins, 0);
    for (double x : xs) {
      if (std::isnan(x)) continue;
      ++counts[h.bin_of(x)];
      ++total;
    }
  }
  if (total == 0) throw DataError("no relative scores to bin");
  return h;
}

EvalReport build_report(std::string method, std::vector<ScoreRow> rows,
                        std::span<const double> fpr_targets) {
  EvalReport report;
  report.method = std::move(method);
  report.rows = std::move(rows);
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& r : report.rows) {
    if (!r.valid || r.label == Label::unknown) continue;
    scores.push_back(r.score);
    labels.push_back(r.label);
  }
  report.auc = roc_auc(scores, labels);
  report.roc = roc_points(scores, labels);
  for (double t : fpr_targets) report.tpr_at.emplace_back(t, tpr_at_fpr(scores, labels, t));
  return report;
}

double round12(double x) {
  if (!std::isfinite(x)) return x;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return std::strtod(buf, nullptr);
}

std::string report_json(const EvalReport& report, bool with_cost) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"doc_id", r.doc_id},
                    {"label", to_string(r.label)},
                    {"score", number(r.score)},
                    {"valid", r.valid}});
  }
  json tpr = json::array();
  for (const auto& [target, value] : report.tpr_at) {
    tpr.push_back({{"fpr", number(target)}, {"tpr", number(value)}});
  }
  json roc = json::array();
  for (const auto& p : report.roc) {
    roc.push_back({number(p.fpr), number(p.tpr), number(p.threshold)});
  }
  json out = {{"schema", "v1"},
              {"method", report.method},
              {"auc", number(report.auc)},
              {"tpr_at", tpr},
              {"roc_points", roc},
              {"score_rows", rows},
              {"parameters", json::parse(report.parameters_json)}};
  if (report.histogram) {
    const auto& h = *report.histogram;
    out["histogram"] = {{"range", {number(h.lo), number(h.hi)}}, {"bins", h.bins},
                        {"counts", h.counts}};
  }
  if (with_cost) {
    out["cost"] = {{"total_queries", report.cost.total_queries},
                   {"total_retries", report.cost.total_retries},
                   {"cached_hits", report.cost.cached_hits},
                   {"sentinels", report.cost.sentinels}};
  }
  return out.dump(2);
}

std::string report_digest(const EvalReport& report) {
  return sha256_hex(report_json(report, false));
}

std::string emit_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create report directory " + dir.string());
  write_text(dir / "report.json", report_json(report, true) + "\n");

  std::string tsv = "doc_id\tlabel\tscore\tvalid\n";
  for (const auto& r : report.rows) {
    tsv += r.doc_id + '\t' + to_string(r.label) + '\t' + fmt12(r.score) + '\t' +
           (r.valid ? "1" : "0") + '\n';
  }
  write_text(dir / "scores.tsv", tsv);

  std::string roc = "fpr,tpr,threshold\n";
  for (const auto& p : report.roc) {
    roc += fmt12(p.fpr) + ',' + fmt12(p.tpr) + ',' + fmt12(p.threshold) + '\n';
  }
  write_text(dir / "roc.csv", roc);

  std::string hist;
  if (report.histogram) {
    const auto& h = *report.histogram;
    hist = "# relative score ratio, range [" + fmt12(h.lo) + ", " + fmt12(h.hi) + "), " +
           std::to_string(h.bins) + " bins, out-of-range values clipped to edge bins\n";
    hist += "bin_lo,bin_hi";
    for (const auto& [label, counts] : h.counts) hist += "," + label;
    hist += '\n';
    for (std::size_t k = 0; k < h.bins; ++k) {
      hist += fmt12(h.edge(k)) + ',' + fmt12(h.edge(k + 1));
      for (const auto& [label, counts] : h.counts) hist += "," + std::to_string(counts[k]);
      hist += '\n';
    }
  } else {
    hist = "# no relative scores for this method\nbin_lo,bin_hi\n";
  }
  write_text(dir / "histogram.csv", hist);

  const std::string digest = report_digest(report);
  write_text(dir / "report.sha256", digest + "\n");
  return digest;
}

}  // namespace mia
