#pragma once

// Offline summaries over exported metrics logs: clean each participant's
// samples, z-score them per participant, then tabulate by condition and
// order with paired per-participant differences.

#include "neurochat/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace neurochat::analysis {

struct InsufficientData : Error {
  using Error::Error;
};

inline constexpr std::size_t kMinSamples = 10;

enum class Condition { kExperimental, kControl };

inline const char* to_string(Condition c) { return c == Condition::kExperimental ? "experimental" : "control"; }

inline Condition parse_condition(const std::string& s) {
  if (s == "experimental") return Condition::kExperimental;
  if (s == "control") return Condition::kControl;
  throw FormatError("condition must be experimental or control: " + s);
}

struct Block {
  Condition condition = Condition::kControl;
  int order = 1;
  std::vector<double> samples;
};

struct ParticipantRecord {
  std::string id;
  std::vector<Block> blocks;

  bool has(Condition c) const {
    return std::any_of(blocks.begin(), blocks.end(), [&](const Block& b) { return b.condition == c && !b.samples.empty(); });
  }
  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.samples.size();
    return n;
  }
};

// ---- statistics --------------------------------------------------------------------

inline double mean(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ddof = 1 for the sample sd, 0 for the population sd.
inline double sd(const std::vector<double>& v, int ddof) {
  if (v.size() <= static_cast<std::size_t>(ddof)) return std::nan("");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - static_cast<std::size_t>(ddof)));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Drops non-finite values, then (single pass) values more than 3 sample
// sd from the mean of the finite set. Nothing is removed when sd = 0.
inline std::vector<double> clean(const std::vector<double>& samples) {
  std::vector<double> finite;
  finite.reserve(samples.size());
  for (double x : samples)
    if (std::isfinite(x)) finite.push_back(x);
  if (finite.size() < kMinSamples) {
    throw InsufficientData("need at least " + std::to_string(kMinSamples) + " finite samples, got " +
                           std::to_string(finite.size()));
  }
  const double m = mean(finite);
  const double s = sd(finite, 1);
  if (!(s > 0.0)) return finite;
  std::vector<double> out;
  out.reserve(finite.size());
  for (double x : finite)
    if (std::abs(x - m) <= 3.0 * s) out.push_back(x);
  return out;
}

struct Warning {
  std::string participant;
  std::string message;
};

// Cleans each participant's samples pooled over all blocks; block
// membership is kept. Participants with too little data are dropped.
inline std::vector<ParticipantRecord> clean_records(const std::vector<ParticipantRecord>& records,
                                                    std::vector<Warning>& warnings) {
  std::vector<ParticipantRecord> out;
  for (const auto& p : records) {
    std::vector<double> pooled;
    for (const auto& b : p.blocks) pooled.insert(pooled.end(), b.samples.begin(), b.samples.end());
    std::vector<double> finite;
    for (double x : pooled)
      if (std::isfinite(x)) finite.push_back(x);
    if (finite.size() < kMinSamples) {
      warnings.push_back({p.id, "excluded: fewer than " + std::to_string(kMinSamples) + " usable samples"});
      continue;
    }
    const double m = mean(finite);
    const double s = sd(finite, 1);
    ParticipantRecord c{p.id, {}};
    for (const auto& b : p.blocks) {
      Block nb{b.condition, b.order, {}};
      for (double x : b.samples)
        if (std::isfinite(x) && (!(s > 0.0) || std::abs(x - m) <= 3.0 * s)) nb.samples.push_back(x);
      c.blocks.push_back(std::move(nb));
    }
    out.push_back(std::move(c));
  }
  return out;
}

// x -> (x - mu_p) / sigma_p with mu_p, sigma_p (population sd) pooled over
// both conditions. Participants missing a condition or with sigma_p = 0 are
// excluded with a warning.
inline std::vector<ParticipantRecord> zscore_per_participant(const std::vector<ParticipantRecord>& records,
                                                             std::vector<Warning>& warnings) {
  std::vector<ParticipantRecord> out;
  for (const auto& p : records) {
    if (!p.has(Condition::kExperimental) || !p.has(Condition::kControl)) {
      warnings.push_back({p.id, "excluded: both conditions are required"});
      continue;
    }
    std::vector<double> pooled;
    for (const auto& b : p.blocks) pooled.insert(pooled.end(), b.samples.begin(), b.samples.end());
    const double mu = mean(pooled);
    const double sigma = sd(pooled, 0);
    if (!(sigma > 0.0)) {
      warnings.push_back({p.id, "excluded: zero variance"});
      continue;
    }
    ParticipantRecord z{p.id, {}};
    for (const auto& b : p.blocks) {
      Block nb{b.condition, b.order, {}};
      nb.samples.reserve(b.samples.size());
      for (double x : b.samples) nb.samples.push_back((x - mu) / sigma);
      z.blocks.push_back(std::move(nb));
    }
    out.push_back(std::move(z));
  }
  return out;
}

inline std::vector<double> condition_samples(const ParticipantRecord& p, Condition c) {
  std::vector<double> v;
  for (const auto& b : p.blocks)
    if (b.condition == c) v.insert(v.end(), b.samples.begin(), b.samples.end());
  return v;
}

// ---- summaries ---------------------------------------------------------------------------

// Statistics over participant means (each participant counts once).
struct SummaryRow {
  Condition condition;
  std::optional<int> order;  // nullopt: all orders
  std::size_t participants = 0;
  std::size_t samples = 0;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;  // sample sd; NaN when participants < 2
};

struct PairedRow {
  std::string participant;
  double experimental_mean = 0.0;
  double control_mean = 0.0;
  double difference = 0.0;  // experimental - control
  int experimental_order = 0;
};

struct Summary {
  std::vector<SummaryRow> rows;
  std::vector<PairedRow> paired;
  double mean_difference = 0.0;
  std::vector<Warning> warnings;
};

inline Summary condition_summary(const std::vector<ParticipantRecord>& zscored) {
  Summary s;
  for (auto cond : {Condition::kExperimental, Condition::kControl}) {
    for (std::optional<int> order : {std::optional<int>(1), std::optional<int>(2), std::optional<int>()}) {
      SummaryRow row{cond, order};
      std::vector<double> means;
      for (const auto& p : zscored) {
        std::vector<double> v;
        for (const auto& b : p.blocks)
          if (b.condition == cond && (!order || b.order == *order)) v.insert(v.end(), b.samples.begin(), b.samples.end());
        if (v.empty()) continue;
        means.push_back(analysis::mean(v));
        row.samples += v.size();
      }
      row.participants = means.size();
      row.mean = analysis::mean(means);
      row.median = analysis::median(means);
      row.sd = analysis::sd(means, 1);
      s.rows.push_back(row);
    }
  }
  std::vector<double> diffs;
  for (const auto& p : zscored) {
    const auto e = condition_samples(p, Condition::kExperimental);
    const auto c = condition_samples(p, Condition::kControl);
    if (e.empty() || c.empty()) continue;
    PairedRow r{p.id, mean(e), mean(c), 0.0, 0};
    r.difference = r.experimental_mean - r.control_mean;
    for (const auto& b : p.blocks)
      if (b.condition == Condition::kExperimental) r.experimental_order = b.order;
    diffs.push_back(r.difference);
    s.paired.push_back(r);
  }
  s.mean_difference = mean(diffs);
  return s;
}

// Whole pipeline: clean, z-score, summarize.
inline Summary analyze(const std::vector<ParticipantRecord>& records) {
  std::vector<Warning> warnings;
  const auto cleaned = clean_records(records, warnings);
  const auto z = zscore_per_participant(cleaned, warnings);
  auto s = condition_summary(z);
  s.warnings = std::move(warnings);
  return s;
}

// ---- CSV output --------------------------------------------------------------------------

inline std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string summary_csv(const Summary& s) {
  std::ostringstream out;
  out << "# engagement z-scored per participant (population sd, pooled over both conditions); outliers beyond 3 sample "
         "sd removed in one pass; statistics below are over participant means, sd is the sample sd (n-1)\n";
  out << "condition,order,participants,samples,mean,median,sd,flag\n";
  for (const auto& r : s.rows) {
    out << to_string(r.condition) << ',' << (r.order ? std::to_string(*r.order) : std::string("all")) << ','
        << r.participants << ',' << r.samples << ',' << fmt(r.mean) << ',' << fmt(r.median) << ',' << fmt(r.sd) << ','
        << (r.participants == 1 ? "n=1" : r.participants == 0 ? "empty" : "") << '\n';
  }
  return out.str();
}

inline std::string paired_csv(const Summary& s) {
  std::ostringstream out;
  out << "participant,experimental_order,experimental_mean,control_mean,difference\n";
  for (const auto& r : s.paired) {
    out << r.participant << ',' << r.experimental_order << ',' << fmt(r.experimental_mean) << ','
        << fmt(r.control_mean) << ',' << fmt(r.difference) << '\n';
  }
  out << "# mean_difference," << fmt(s.mean_difference) << ",participants," << s.paired.size() << '\n';
  return out.str();
}

inline std::string warnings_csv(const Summary& s) {
  std::ostringstream out;
  out << "participant,message\n";
  for (const auto& w : s.warnings) out << w.participant << ',' << w.message << '\n';
  return out.str();
}

// ---- inputs ------------------------------------------------------------------------------

struct ManifestRow {
  std::string session;
  std::string participant;
  Condition condition = Condition::kControl;
  int order = 1;
};

// CSV with header session,participant,condition,order.
inline std::vector<ManifestRow> parse_manifest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "session,participant,condition,order") {
    throw FormatError("manifest header must be session,participant,condition,order");
  }
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() != 4) throw FormatError("manifest line " + std::to_string(lineno) + ": expected 4 columns");
    ManifestRow r{cols[0], cols[1], parse_condition(cols[2]), 0};
    if (cols[3] != "1" && cols[3] != "2") throw FormatError("manifest line " + std::to_string(lineno) + ": order must be 1 or 2");
    r.order = cols[3][0] - '0';
    if (r.session.empty() || r.participant.empty()) throw FormatError("manifest line " + std::to_string(lineno) + ": empty id");
    rows.push_back(std::move(r));
  }
  return rows;
}

struct MetricsSamples {
  std::vector<double> values;  // NaN where the field was missing
  std::size_t stale_skipped = 0;
  std::size_t bad_lines = 0;
};

// Reads "sample" records from a metrics log. Stale samples are skipped as
// the stand-in for excluding disconnected segments.
inline MetricsSamples parse_metrics(std::istream& in, const std::string& field = "e_norm") {
  MetricsSamples m;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++m.bad_lines;
      continue;
    }
    if (j.value("type", std::string()) != "sample") continue;
    if (j.value("stale", false)) {
      ++m.stale_skipped;
      continue;
    }
    const auto it = j.find(field);
    m.values.push_back(it != j.end() && it->is_number() ? it->get<double>() : std::nan(""));
  }
  return m;
}

// Sessions are looked up as <input>/<session>.jsonl, then
// <input>/<session>/metrics.jsonl.
inline std::vector<ParticipantRecord> load_records(const std::filesystem::path& input,
                                                   const std::vector<ManifestRow>& manifest,
                                                   const std::string& field, std::vector<Warning>& warnings) {
  std::map<std::string, ParticipantRecord> by_id;
  for (const auto& row : manifest) {
    auto path = input / (row.session + ".jsonl");
    if (!std::filesystem::exists(path)) path = input / row.session / "metrics.jsonl";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("no metrics log for session " + row.session + " under " + input.string());
    const auto m = parse_metrics(in, field);
    if (m.bad_lines) warnings.push_back({row.participant, row.session + ": " + std::to_string(m.bad_lines) + " unreadable lines"});
    auto& p = by_id[row.participant];
    p.id = row.participant;
    p.blocks.push_back({row.condition, row.order, m.values});
  }
  std::vector<ParticipantRecord> out;
  for (auto& [id, p] : by_id) out.push_back(std::move(p));
  return out;
}

}  // namespace neurochat::analysis
