#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rgn/datagen.hpp"
#include "rgn/evaluation.hpp"
#include "rgn/objectives.hpp"
#include "rgn/random.hpp"
#include "test_util.hpp"

namespace rgn {
namespace {

ModelConfig small_config(std::size_t types, std::size_t heads = 2, std::size_t layers = 2) {
  ModelConfig c;
  c.num_types = types;
  c.hidden_dim = 6;
  c.edge_dim = 4;
  c.num_heads = heads;
  c.num_gat_layers = layers;
  c.dropout = 0.0;
  return c;
}

RecurrentGraphNetwork zero_model(std::size_t types) {
  ModelConfig c = small_config(types);
  c.alpha.assign(types, 0.0);
  RecurrentGraphNetwork model(c, 1);
  for (std::size_t i = 0; i < model.params().size(); ++i) model.params().value(i).fill(0.0);
  return model;
}

TEST(KolmogorovSmirnov, SinglePointAtMedian) {
  const std::vector<double> z{std::log(2.0)};
  const GofReport r = ks_exp1(z);
  EXPECT_NEAR(r.ks_statistic, 0.5, 1e-15);
  EXPECT_NEAR(r.critical_5, 1.358, 1e-12);
  EXPECT_NEAR(r.critical_1, 1.628, 1e-12);
  ASSERT_EQ(r.pp.size(), 1u);
  EXPECT_NEAR(r.pp[0].model_cdf, 0.5, 1e-15);
}

TEST(KolmogorovSmirnov, ExactQuantiles) {
  const std::size_t n = 1000;
  std::vector<double> z;
  for (std::size_t i = 1; i <= n; ++i) z.push_back(-std::log(1.0 - (i - 0.5) / n));
  std::reverse(z.begin(), z.end());
  const GofReport r = ks_exp1(z);
  EXPECT_LE(r.ks_statistic, 0.5 / n + 1e-12);
  EXPECT_TRUE(r.passes_5());
  for (std::size_t i = 1; i < r.pp.size(); ++i) EXPECT_LE(r.pp[i - 1].model_cdf, r.pp[i].model_cdf);
}

TEST(KolmogorovSmirnov, AllZeros) {
  const std::vector<double> z(50, 0.0);
  const GofReport r = ks_exp1(z);
  EXPECT_DOUBLE_EQ(r.ks_statistic, 1.0);
  EXPECT_FALSE(r.passes_1());
}

TEST(KolmogorovSmirnov, EmptySampleRejected) {
  EXPECT_ANY_THROW((void)ks_exp1(std::vector<double>{}));
}

TEST(Rescale, ConstantRateIsExact) {
  const EventSequence s{"s", 5.0, {{0.3, 0}, {1.7, 1}, {4.25, 0}}};
  const RescaledInterarrivals r = rescale([](std::size_t, double) { return 1.3; }, s, 100);
  ASSERT_EQ(r.z.size(), 3u);
  EXPECT_EQ(r.quadrature_steps, 100u);
  EXPECT_EQ(r.z[0], 1.3 * 0.3);
  EXPECT_EQ(r.z[1], 1.3 * (1.7 - 0.3));
  EXPECT_EQ(r.z[2], 1.3 * (4.25 - 1.7));

  GeneratorSpec truth;
  truth.rates = {0.9, 0.4};
  const RescaledInterarrivals t = rescale(truth, s, 100);
  EXPECT_NEAR(t.z[1], 1.3 * 1.4, 1e-14);
}

TEST(Rescale, LinearRateTrapezoid) {
  const EventSequence s{"s", 1.0, {{1.0, 0}}};
  // Trapezoid is exact on linear integrands.
  const RescaledInterarrivals r = rescale([](std::size_t, double t) { return t; }, s, 100);
  EXPECT_NEAR(r.z[0], 0.5, 1e-14);
  // Quadratic: error of order K^-2.
  const RescaledInterarrivals q = rescale([](std::size_t, double t) { return 3.0 * t * t; }, s, 100);
  EXPECT_NEAR(q.z[0], 1.0, 1.0 / (100.0 * 100.0));
}

TEST(Rescale, TruePoissonIntensityGivesUnitMean) {
  GeneratorSpec truth;
  truth.rates = {1.5};
  truth.horizon = 100.0;
  truth.num_sequences = 20;
  truth.seed = 3;
  std::vector<double> z;
  for (const auto& s : generate_dataset(truth)) {
    const auto r = rescale(truth, s);
    z.insert(z.end(), r.z.begin(), r.z.end());
  }
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  EXPECT_NEAR(mean, 1.0, 4.0 / std::sqrt(static_cast<double>(z.size())));
}

TEST(Rescale, ModelMatchesMonteCarloMean) {
  RecurrentGraphNetwork model(small_config(2), 4);
  testing::randomize_params(model.params(), 4);
  const EventSequence s{"s", 3.0, {{0.5, 0}, {1.4, 1}}};
  const RescaledInterarrivals r = rescale(model, s, 1000);
  ad::Graph g(&model.params(), ad::GradMode::kDisabled);
  std::mt19937_64 rng(0);
  const auto anchors = run_sequence(g, model, s, false, rng);
  const int reps = 10000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < reps; ++k) {
    const double v = mc_compensator_interval(anchors[1], 0.5, 1.4, model.config(), 10, rng).item();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  EXPECT_LT(std::abs(mean - r.z[1]), 4.0 * se + 1e-9);
}

TEST(GoodnessOfFit, ThinnedHawkesPassesAtOnePercent) {
  GeneratorSpec truth;
  truth.kind = ProcessKind::kHawkes;
  truth.hawkes = HawkesSpec{{0.2, 0.2}, {0.5, 0.3, 0.3, 0.5}, 1.0};
  truth.horizon = 50.0;
  truth.num_sequences = 10;
  int passes = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    truth.seed = derive_seed(77, run);
    std::vector<RescaledInterarrivals> per;
    for (const auto& s : generate_dataset(truth)) per.push_back(rescale(truth, s));
    const GofReport r = goodness_of_fit(per);
    passes += r.passes_1();
    EXPECT_EQ(r.per_sequence_d_quantiles.size(), 5u);
  }
  EXPECT_GE(passes, 98);
}

TEST(GoodnessOfFit, CensoredTailJoinsNextSequence) {
  RescaledInterarrivals a, b, empty, c;
  a.z = {0.5, 1.0};
  a.tail = 0.25;
  b.z = {2.0};
  b.tail = 0.1;
  empty.tail = 0.2;
  c.z = {0.3, 0.4};
  const std::vector<RescaledInterarrivals> per{a, b, empty, c};
  const GofReport r = goodness_of_fit(per);
  // Pooled sample: 0.5, 1.0, 0.25 + 2.0, 0.1 + 0.2 + 0.3, 0.4.
  EXPECT_EQ(r.sample_size, 5u);
  const GofReport direct = ks_exp1(std::vector<double>{0.5, 1.0, 2.25, 0.6, 0.4});
  EXPECT_DOUBLE_EQ(r.ks_statistic, direct.ks_statistic);
}

TEST(GoodnessOfFit, ShortPoissonSequencesAreCalibrated) {
  GeneratorSpec truth;
  truth.rates = {1.0};
  truth.horizon = 20.0;
  truth.num_sequences = 100;
  int passes = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    truth.seed = derive_seed(31, run);
    std::vector<RescaledInterarrivals> per;
    for (const auto& s : generate_dataset(truth)) per.push_back(rescale(truth, s));
    passes += goodness_of_fit(per).passes_5();
  }
  EXPECT_GE(passes, 90);
}

TEST(Rescale, TailCoversCensoredInterval) {
  const EventSequence s{"s", 5.0, {{1.0, 0}, {2.0, 0}}};
  EXPECT_NEAR(rescale([](std::size_t, double) { return 2.0; }, s).tail, 6.0, 1e-14);
  const EventSequence full{"f", 2.0, {{1.0, 0}, {2.0, 0}}};
  EXPECT_EQ(rescale([](std::size_t, double) { return 2.0; }, full).tail, 0.0);
}

TEST(GoodnessOfFit, ReportSerialisation) {
  const std::vector<double> z{0.1, 0.7, 2.0};
  const GofReport r = ks_exp1(z);
  std::ostringstream csv;
  write_pp_csv(csv, r);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "model_cdf,empirical_cdf");
  EXPECT_NE(gof_report_json(r).find("\"ks_statistic\""), std::string::npos);
}

TEST(Metrics, ConfidentConstantPredictor) {
  RecurrentGraphNetwork model = zero_model(2);
  model.params().value("head.type.b") = Tensor::vector({-5.0, 5.0});
  model.params().value("head.time.b").fill(std::log(std::expm1(1.0)));
  model.params().value("intensity.beta").fill(std::log(std::expm1(0.5)));
  const std::vector<EventSequence> data{{"a", 5.0, {{1, 1}, {2, 1}, {3, 1}, {4, 1}}},
                                        {"b", 3.0, {{0.5, 1}, {1.5, 1}}}};
  const Metrics m = evaluate_metrics(model, data, {});
  EXPECT_EQ(m.events, 6u);
  EXPECT_EQ(m.predictions, 4u);
  EXPECT_DOUBLE_EQ(m.type_accuracy, 1.0);
  EXPECT_NEAR(m.time_rmse, 0.0, 1e-12);
  // Constant total rate 1, type rate 0.5: ll = 6 ln 0.5 - 8.
  EXPECT_NEAR(m.log_likelihood, 6.0 * std::log(0.5) - 8.0, 1e-12);
  EXPECT_NEAR(m.nll_per_event, -(6.0 * std::log(0.5) - 8.0) / 6.0, 1e-12);
}

TEST(Metrics, UninformativePredictorNearHalf) {
  RecurrentGraphNetwork model(small_config(2), 8);
  GeneratorSpec spec;
  spec.rates = {1.0, 1.0};
  spec.horizon = 200.0;
  spec.num_sequences = 10;
  const auto data = generate_dataset(spec);
  const Metrics m = evaluate_metrics(model, data, {});
  EXPECT_NEAR(m.type_accuracy, 0.5, 3.0 / std::sqrt(static_cast<double>(m.predictions)));
}

TEST(Metrics, InvariantToOrdering) {
  RecurrentGraphNetwork model(small_config(2), 8);
  testing::randomize_params(model.params(), 8, 0.3);
  GeneratorSpec spec;
  spec.rates = {0.6, 0.9};
  spec.num_sequences = 6;
  auto data = generate_dataset(spec);
  const Metrics a = evaluate_metrics(model, data, {10, 5});
  std::reverse(data.begin(), data.end());
  const Metrics b = evaluate_metrics(model, data, {10, 5});
  EXPECT_NEAR(a.nll_per_event, b.nll_per_event, 1e-12);
  EXPECT_EQ(a.type_accuracy, b.type_accuracy);
  EXPECT_NEAR(a.time_rmse, b.time_rmse, 1e-12);
}

TEST(AttentionDump, RowsAreStochastic) {
  RecurrentGraphNetwork model(small_config(3), 2);
  testing::randomize_params(model.params(), 2);
  const EventSequence s{"s", 5.0, {{0.5, 0}, {1.0, 2}, {2.5, 1}, {4.0, 2}}};
  std::stringstream csv;
  const std::size_t rows = attention_dump(model, s, csv);
  EXPECT_EQ(rows, 4u * 2 * 2 * 9);
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "event_index,layer,head,receiver,sender,weight");
  std::map<std::string, double> sums;
  std::size_t seen = 0;
  while (std::getline(csv, line)) {
    ++seen;
    const auto last = line.rfind(',');
    const auto sender = line.rfind(',', last - 1);
    sums[line.substr(0, sender)] += std::stod(line.substr(last + 1));
  }
  EXPECT_EQ(seen, rows);
  EXPECT_EQ(sums.size(), 4u * 2 * 2 * 3);
  for (const auto& [key, total] : sums) EXPECT_NEAR(total, 1.0, 1e-9) << key;
}

TEST(AttentionDump, SingleTypeWeightsAreOne) {
  RecurrentGraphNetwork model(small_config(1), 2);
  const EventSequence s{"s", 5.0, {{0.5, 0}, {1.0, 0}}};
  std::stringstream csv;
  EXPECT_EQ(attention_dump(model, s, csv), 2u * 2 * 2);
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) EXPECT_EQ(std::stod(line.substr(line.rfind(',') + 1)), 1.0);
}

TEST(Complexity, CountingFormula) {
  ModelConfig c = small_config(22, 16, 2);
  const ComplexityReport r = complexity_report(c, 72);
  EXPECT_EQ(r.attention_scores, 1115136u);
  EXPECT_EQ(r.attention_scores_per_event, 2u * 16 * 484);
  EXPECT_EQ(complexity_report(c, 10).attention_scores_per_event,
            complexity_report(c, 1000).attention_scores_per_event);
  EXPECT_EQ(complexity_report(c, 1000).attention_scores, 1000u * 2 * 16 * 484);
  EXPECT_GT(r.flops, 0u);
  EXPECT_EQ(r.flops, r.flops_per_event * 72);

  const ComplexityReport one = complexity_report(small_config(1, 3, 2), 40);
  EXPECT_EQ(one.attention_scores, 3u * 2 * 40);
}

TEST(Complexity, MeasuredMatchesFormula) {
  RecurrentGraphNetwork model(small_config(3), 2);
  GeneratorSpec spec;
  spec.rates = {1.0, 1.0, 1.0};
  spec.horizon = 5.0;
  spec.num_sequences = 1;
  const EventSequence s = generate_dataset(spec)[0];
  EXPECT_EQ(measured_attention_scores(model, s), complexity_report(model.config(), s.size()).attention_scores);
}

}  // namespace
}  // namespace rgn
