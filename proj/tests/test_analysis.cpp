#include "neurochat/analysis/analysis.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace neurochat::analysis;
using neurochat::FormatError;

namespace {

// Textbook two-pass formulas, written out independently.
double oracle_mean(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

double oracle_sd(const std::vector<double>& v, bool sample) {
  const double m = oracle_mean(v);
  long double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(static_cast<double>(ss / (v.size() - (sample ? 1 : 0))));
}

ParticipantRecord participant(const std::string& id, std::vector<double> exp, std::vector<double> ctl, int exp_order = 1) {
  return {id, {{Condition::kExperimental, exp_order, std::move(exp)}, {Condition::kControl, 3 - exp_order, std::move(ctl)}}};
}

std::vector<double> noise(std::mt19937_64& rng, std::size_t n, double mu, double sd) {
  std::normal_distribution<double> d(mu, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Clean, SingleOutlierRemoved) {
  std::vector<double> v(100, 0.0);
  v.push_back(10.0);
  // 10 lies beyond 3 sample sd of the whole list.
  EXPECT_GT(std::abs(10.0 - oracle_mean(v)), 3.0 * oracle_sd(v, true));
  const auto c = clean(v);
  EXPECT_EQ(c.size(), 100u);
  EXPECT_EQ(std::count(c.begin(), c.end(), 10.0), 0);
}

TEST(Clean, IdenticalValuesKept) {
  const std::vector<double> v(20, 0.37);
  EXPECT_EQ(clean(v), v);
}

TEST(Clean, NonFiniteDroppedFirst) {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  auto with = v;
  with.insert(with.begin() + 3, std::nan(""));
  with.push_back(std::numeric_limits<double>::infinity());
  EXPECT_EQ(clean(with), v);
}

TEST(Clean, TooFewSamplesRefused) {
  EXPECT_THROW(clean({1, 2, 3}), InsufficientData);
  std::vector<double> nine(9, 1.0);
  nine.push_back(std::nan(""));
  EXPECT_THROW(clean(nine), InsufficientData);
}

TEST(Clean, MatchesBruteForceRuleProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto v = noise(rng, 10 + rng() % 200, 0.0, 1.0);
    for (int k = 0; k < 3; ++k) v[rng() % v.size()] = std::normal_distribution<double>(0, 8)(rng);
    const double m = oracle_mean(v);
    const double s = oracle_sd(v, true);
    std::vector<double> expect;
    for (double x : v)
      if (std::abs(x - m) <= 3 * s) expect.push_back(x);
    EXPECT_EQ(clean(v), expect);
  }
}

TEST(Clean, IdempotentWhenNothingExceeds) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v;
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 50; ++i) v.push_back(u(rng));
    const auto once = clean(v);
    EXPECT_EQ(once, v);  // uniform data never reach 3 sd
    EXPECT_EQ(clean(once), once);
  }
}

TEST(ZScore, TwoPointSymmetry) {
  std::vector<Warning> w;
  const auto z = zscore_per_participant({participant("p", {0}, {2})}, w);
  ASSERT_EQ(z.size(), 1u);
  EXPECT_DOUBLE_EQ(z[0].blocks[0].samples[0], -1.0);
  EXPECT_DOUBLE_EQ(z[0].blocks[1].samples[0], 1.0);
}

TEST(ZScore, ShiftInvarianceAndZeroMeanProperty) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto e = noise(rng, 5 + rng() % 50, 0.3, 2.0);
    auto c = noise(rng, 5 + rng() % 50, -0.1, 1.0);
    const double shift = std::uniform_real_distribution<double>(-100, 100)(rng);
    auto e2 = e, c2 = c;
    for (auto& x : e2) x += shift;
    for (auto& x : c2) x += shift;
    std::vector<Warning> w;
    const auto a = zscore_per_participant({participant("p", e, c)}, w);
    const auto b = zscore_per_participant({participant("p", e2, c2)}, w);
    std::vector<double> pooled;
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < a[0].blocks[k].samples.size(); ++i) {
        EXPECT_NEAR(a[0].blocks[k].samples[i], b[0].blocks[k].samples[i], 1e-9);
        pooled.push_back(a[0].blocks[k].samples[i]);
      }
    }
    EXPECT_NEAR(oracle_mean(pooled), 0.0, 1e-12);
    EXPECT_NEAR(oracle_sd(pooled, false), 1.0, 1e-12);
    // Sign of the within-participant condition difference survives.
    EXPECT_EQ(oracle_mean(e) > oracle_mean(c), oracle_mean(a[0].blocks[0].samples) > oracle_mean(a[0].blocks[1].samples));
  }
}

TEST(ZScore, ZeroVarianceAndMissingConditionExcluded) {
  std::vector<Warning> w;
  const auto z = zscore_per_participant(
      {participant("flat", {1, 1}, {1, 1}), ParticipantRecord{"half", {{Condition::kControl, 1, {1, 2, 3}}}},
       participant("ok", {1, 2}, {3, 4})},
      w);
  ASSERT_EQ(z.size(), 1u);
  EXPECT_EQ(z[0].id, "ok");
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].participant, "flat");
  EXPECT_EQ(w[1].participant, "half");
}

TEST(Summary, ShiftedConditionGivesPositiveDifferences) {
  std::mt19937_64 rng(17);
  std::vector<ParticipantRecord> recs;
  long double exp_total = 0, ctl_total = 0;
  for (int p = 0; p < 12; ++p) {
    auto ctl = noise(rng, 40, 0.1 * p, 0.05);
    auto exp = ctl;
    for (auto& x : exp) x += 0.3;
    for (double x : exp) exp_total += x;
    for (double x : ctl) ctl_total += x;
    recs.push_back(participant("p" + std::to_string(p), exp, ctl, 1 + p % 2));
  }
  ASSERT_GT(exp_total, ctl_total);  // brute-force sign before z-scoring
  const auto s = analyze(recs);
  ASSERT_EQ(s.paired.size(), 12u);
  for (const auto& r : s.paired) EXPECT_GT(r.difference, 0.0);
  double exp_mean = 0, ctl_mean = 0;
  for (const auto& r : s.rows) {
    if (r.order) continue;
    (r.condition == Condition::kExperimental ? exp_mean : ctl_mean) = r.mean;
  }
  EXPECT_GT(exp_mean, ctl_mean);
}

TEST(Summary, IdenticalConditionsGiveZeroDifferences) {
  std::mt19937_64 rng(2);
  std::vector<ParticipantRecord> recs;
  for (int p = 0; p < 5; ++p) {
    const auto v = noise(rng, 30, 1.0, 0.2);
    recs.push_back(participant("p" + std::to_string(p), v, v));
  }
  const auto s = analyze(recs);
  for (const auto& r : s.paired) EXPECT_NEAR(r.difference, 0.0, 1e-12);
}

TEST(Summary, SingleParticipantFlagged) {
  std::mt19937_64 rng(9);
  const auto s = analyze({participant("solo", noise(rng, 20, 0, 1), noise(rng, 20, 0, 1))});
  const auto csv = summary_csv(s);
  EXPECT_NE(csv.find("experimental,1,1,"), std::string::npos);
  EXPECT_NE(csv.find(",n=1\n"), std::string::npos);
  EXPECT_NE(csv.find("sample sd (n-1)"), std::string::npos);
}

TEST(Summary, OutputIsDeterministic) {
  std::mt19937_64 rng(4);
  std::vector<ParticipantRecord> recs;
  for (int p = 0; p < 6; ++p) recs.push_back(participant("p" + std::to_string(p), noise(rng, 30, 0, 1), noise(rng, 30, 0, 1)));
  EXPECT_EQ(summary_csv(analyze(recs)), summary_csv(analyze(recs)));
  EXPECT_EQ(paired_csv(analyze(recs)), paired_csv(analyze(recs)));
}

TEST(Inputs, ManifestParsing) {
  std::istringstream ok("session,participant,condition,order\ns1,p1,experimental,1\n# note\ns2,p1,control,2\n");
  const auto rows = parse_manifest(ok);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].condition, Condition::kControl);
  EXPECT_EQ(rows[1].order, 2);
  for (const char* bad : {"sess,participant,condition,order\n", "session,participant,condition,order\ns,p,treatment,1\n",
                          "session,participant,condition,order\ns,p,control,3\n",
                          "session,participant,condition,order\ns,p,control\n"}) {
    std::istringstream in(bad);
    EXPECT_THROW(parse_manifest(in), FormatError) << bad;
  }
}

TEST(Inputs, MetricsSkipStaleAndOtherRecords) {
  std::istringstream in(R"({"type":"sample","e_norm":0.4,"stale":false}
{"type":"freeze","score":0.4}
{"type":"sample","e_norm":0.9,"stale":true}
{"type":"sample","e_norm":null,"stale":false}
garbage
{"type":"sample","e_norm":0.6,"stale":false}
)");
  const auto m = parse_metrics(in);
  ASSERT_EQ(m.values.size(), 3u);
  EXPECT_EQ(m.values[0], 0.4);
  EXPECT_TRUE(std::isnan(m.values[1]));
  EXPECT_EQ(m.values[2], 0.6);
  EXPECT_EQ(m.stale_skipped, 1u);
  EXPECT_EQ(m.bad_lines, 1u);
}
