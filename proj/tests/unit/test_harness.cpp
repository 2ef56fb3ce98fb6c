#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cpc/error.hpp"
#include "cpc/harness.hpp"
#include "support.hpp"

namespace cpc {
namespace {

ClassifierSpec quick_softmax(std::uint64_t seed = 0) {
  ClassifierSpec s;
  s.sgd.epochs = 20;
  s.seed = seed;
  return s;
}

TEST(Evaluate, Perfect) {
  std::vector<int> y{0, 1, 2, 2, 1};
  auto r = evaluate(y, y, 3);
  EXPECT_EQ(r.accuracy, 1.0);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != b) EXPECT_EQ(r.confusion.at(a, b), 0);
}

TEST(Evaluate, HandCount) {
  std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  auto r = evaluate(pred, truth, 2);
  EXPECT_EQ(r.accuracy, 0.75);
  auto rows = r.confusion.row_normalized();
  ASSERT_TRUE(rows[0] && rows[1]);
  EXPECT_EQ(*rows[0], (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(*rows[1], (std::vector<double>{0.0, 1.0}));
  EXPECT_FALSE(r.routes.has_value());
  EXPECT_TRUE(r.to_json()["routes"].is_null());
}

TEST(Evaluate, AbsentClassIsUndefined) {
  std::vector<int> truth{0, 0, 2}, pred{0, 1, 2};
  auto r = evaluate(pred, truth, 3);
  EXPECT_FALSE(r.per_class[1].has_value());
  EXPECT_FALSE(r.confusion.row_normalized()[1].has_value());
  EXPECT_TRUE(r.to_json()["per_class"][1].is_null());
  EXPECT_EQ(*r.per_class[0], 0.5);
}

TEST(Evaluate, Errors) {
  std::vector<int> a{0, 1}, b{0};
  EXPECT_THROW(evaluate(a, b, 2), Error);
  std::vector<int> c{0, 3};
  try {
    evaluate(c, a, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LabelOutOfRange);
  }
}

TEST(Evaluate, RouteStats) {
  std::vector<RoutedPrediction> p{{Route::easy, 0, 1.0}, {Route::easy, 1, 2.0}, {Route::difficult, 1, -1.0}};
  std::vector<int> truth{0, 0, 1};
  auto r = evaluate(p, truth, 2);
  ASSERT_TRUE(r.routes);
  EXPECT_EQ(r.routes->easy, 2u);
  EXPECT_EQ(r.routes->difficult, 1u);
  EXPECT_EQ(*r.routes->easy_accuracy, 0.5);
  EXPECT_EQ(*r.routes->difficult_accuracy, 1.0);
  auto j = r.to_json();
  for (const char* key : {"accuracy", "per_class", "confusion", "routes", "config", "seed"}) EXPECT_TRUE(j.contains(key));
  for (const char* key : {"+", "-", "acc+", "acc-"}) EXPECT_TRUE(j["routes"].contains(key));
}

class ConfusionAlgebra : public ::testing::TestWithParam<int> {};

TEST_P(ConfusionAlgebra, RowSumsTraceAndPermutation) {
  Rng rng(static_cast<std::uint64_t>(GetParam()));
  const int C = std::uniform_int_distribution<int>(2, 7)(rng);
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
  std::vector<int> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = static_cast<int>(rng() % static_cast<unsigned>(C));
    pred[i] = rng() % 3 == 0 ? static_cast<int>(rng() % static_cast<unsigned>(C)) : truth[i];
  }
  auto r = evaluate(pred, truth, C);
  for (int c = 0; c < C; ++c) EXPECT_EQ(r.confusion.row_sum(c), std::count(truth.begin(), truth.end(), c));
  EXPECT_NEAR(static_cast<double>(r.confusion.trace()) / static_cast<double>(n), r.accuracy, 1e-12);
  for (const auto& row : r.confusion.row_normalized())
    if (row) EXPECT_NEAR(std::accumulate(row->begin(), row->end(), 0.0), 1.0, 1e-9);

  std::vector<int> perm(static_cast<std::size_t>(C));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> pt(n), pp(n);
  for (std::size_t i = 0; i < n; ++i) {
    pt[i] = perm[static_cast<std::size_t>(truth[i])];
    pp[i] = perm[static_cast<std::size_t>(pred[i])];
  }
  auto q = evaluate(pp, pt, C);
  for (int a = 0; a < C; ++a)
    for (int b = 0; b < C; ++b)
      EXPECT_EQ(q.confusion.at(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]), r.confusion.at(a, b));
  EXPECT_EQ(q.accuracy, r.accuracy);
}

INSTANTIATE_TEST_SUITE_P(Random, ConfusionAlgebra, ::testing::Range(0, 10));

PipelineConfig quick_pipeline(PipelineMode mode) {
  PipelineConfig cfg;
  cfg.mode = mode;
  cfg.cpc.base = cfg.cpc.expert = quick_softmax(4);
  cfg.cpc.seed = 4;
  return cfg;
}

TEST(CrossValidate, EachSampleTestedOnce) {
  auto ds = testing::random_blobs(100, 3, 2, 1.5, 1);
  for (auto mode : {PipelineMode::baseline, PipelineMode::cpc}) {
    auto cv = cross_validate(ds, quick_pipeline(mode), 5, 7);
    ASSERT_EQ(cv.folds.size(), 5u);
    std::vector<std::size_t> all;
    for (const auto& t : cv.test_indices) all.insert(all.end(), t.begin(), t.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(100);
    std::iota(expect.begin(), expect.end(), 0u);
    EXPECT_EQ(all, expect);
    double sum = 0.0;
    for (const auto& f : cv.folds) sum += f.accuracy;
    EXPECT_NEAR(cv.mean_accuracy, sum / 5.0, 1e-12);
    EXPECT_EQ(cv.folds[0].routes.has_value(), mode == PipelineMode::cpc);
  }
}

TEST(CrossValidate, PooledReportFollowsSchema) {
  auto ds = testing::random_blobs(90, 3, 3, 1.5, 2);
  auto counts = ds.class_counts();
  for (auto mode : {PipelineMode::baseline, PipelineMode::cpc}) {
    auto cv = cross_validate(ds, quick_pipeline(mode), 5, 3);
    const auto& p = cv.pooled;
    EXPECT_EQ(p.confusion.total(), 90);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(p.confusion.row_sum(c), static_cast<std::int64_t>(counts[static_cast<std::size_t>(c)]));
    EXPECT_NEAR(p.accuracy, static_cast<double>(p.confusion.trace()) / 90.0, 1e-12);
    std::int64_t correct = 0;
    for (const auto& f : cv.folds) correct += f.confusion.trace();
    EXPECT_EQ(p.confusion.trace(), correct);
    EXPECT_EQ(p.routes.has_value(), mode == PipelineMode::cpc);
    if (p.routes) {
      std::size_t easy = 0;
      for (const auto& f : cv.folds) easy += f.routes->easy;
      EXPECT_EQ(p.routes->easy, easy);
      EXPECT_EQ(p.routes->easy + p.routes->difficult, 90u);
    }
    auto j = cv.to_json();
    for (const char* key : {"accuracy", "per_class", "confusion", "routes", "config", "seed", "mean_accuracy",
                            "std_accuracy", "folds"})
      EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["seed"], 3);
  }
}

TEST(PoolReports, Errors) {
  EXPECT_THROW(pool_reports({}), Error);
  std::vector<EvalReport> mixed{evaluate(std::vector<int>{0}, std::vector<int>{0}, 2),
                                evaluate(std::vector<int>{0}, std::vector<int>{0}, 3)};
  EXPECT_THROW(pool_reports(mixed), Error);
}

TEST(CrossValidate, Deterministic) {
  auto ds = testing::random_blobs(60, 3, 3, 1.0, 2);
  auto cfg = quick_pipeline(PipelineMode::cpc);
  cfg.normalization = Normalization::per_sample;
  cfg.zca = true;
  EXPECT_EQ(cross_validate(ds, cfg, 3, 1).to_json().dump(), cross_validate(ds, cfg, 3, 1).to_json().dump());
}

TEST(Pipeline, ExtractorRuns) {
  auto train = generate_two_regime(TwoRegimeSpec{50, 50, 4, 8, 6.0, 0.8, 1});
  auto test = generate_two_regime(TwoRegimeSpec{20, 20, 4, 8, 6.0, 0.8, 2});
  auto cfg = quick_pipeline(PipelineMode::baseline);
  ExtractorConfig ex;
  ex.architecture = "in:1 concat:6 fc:5 head:1";
  ex.training.epochs = 2;
  cfg.extractor = ex;
  auto prepared = prepare(train, std::span<const LabeledDataset>(&test, 1), cfg);
  EXPECT_EQ(prepared.train.dim(), 5u);
  EXPECT_EQ(prepared.others[0].dim(), 5u);
  auto r = run_pipeline(train, test, cfg);
  EXPECT_EQ(r.confusion.total(), 40);
}

TEST(Grid, ParseAndDefault) {
  auto g = default_theta_grid();
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g[3], 0.3);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_EQ(parse_grid("0.2:0.5:0.1"), (std::vector<double>{0.2, 0.3, 0.4, 0.5}));
  EXPECT_THROW(parse_grid("0:1"), Error);
  EXPECT_THROW(parse_grid("1:0:0.1"), Error);
  EXPECT_THROW(parse_grid("0:1:0"), Error);
}

TEST(Sweep, ReusesEnsembleAndMatchesBaselineAtZero) {
  auto train = generate_two_regime(TwoRegimeSpec{80, 80, 4, 8, 6.0, 0.8, 3});
  auto val = generate_two_regime(TwoRegimeSpec{30, 30, 4, 8, 6.0, 0.8, 4});
  CpcConfig cfg;
  cfg.base = cfg.expert = quick_softmax(5);
  const auto builds = ensemble_build_count();
  auto grid = default_theta_grid();
  auto r = theta_sweep(train, val, grid, cfg);
  EXPECT_EQ(ensemble_build_count() - builds, 1u);
  ASSERT_EQ(r.thetas.size(), 11u);
  ASSERT_EQ(r.accuracies.size(), 11u);
  EXPECT_EQ(r.accuracies[0], r.baseline_accuracy);
  const double top = *std::max_element(r.accuracies.begin(), r.accuracies.end());
  EXPECT_EQ(r.best_accuracy, top);
  for (std::size_t i = 0; i < r.thetas.size(); ++i) {
    if (r.accuracies[i] == top) {
      EXPECT_EQ(r.best_theta, r.thetas[i]);
      break;
    }
  }
  std::ostringstream csv;
  r.write_curve_csv(csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);

  auto j = r.to_json();
  EXPECT_EQ(j["accuracy"], r.best_accuracy);
  EXPECT_EQ(j["sweep"]["best_theta"], r.best_theta);
  EXPECT_EQ(j["sweep"]["thetas"].size(), 11u);
  EXPECT_TRUE(j["routes"].is_object());
  EXPECT_EQ(r.best_report.confusion.total(), static_cast<std::int64_t>(val.size()));
  EXPECT_NEAR(r.best_report.accuracy,
              static_cast<double>(r.best_report.confusion.trace()) / static_cast<double>(val.size()), 1e-12);
}

TEST(Sweep, TieGoesToSmallerTheta) {
  // With both grid points collapsing to the baseline, accuracies tie exactly.
  auto train = testing::random_blobs(40, 2, 2, 2.0, 5);
  auto val = testing::random_blobs(20, 2, 2, 2.0, 6);
  CpcConfig cfg;
  cfg.base = cfg.expert = quick_softmax(1);
  std::vector<double> grid{0.0, 1.5};
  auto r = theta_sweep(train, val, grid, cfg);
  EXPECT_EQ(r.accuracies[0], r.accuracies[1]);
  EXPECT_EQ(r.best_theta, 0.0);
  std::vector<double> unsorted{0.5, 0.1};
  EXPECT_THROW(theta_sweep(train, val, unsorted, cfg), Error);
  EXPECT_THROW(theta_sweep(train, val, std::vector<double>{}, cfg), Error);
}

TEST(Compare, RowsAndBaselineIndependence) {
  auto train = generate_two_regime(TwoRegimeSpec{60, 60, 4, 8, 6.0, 0.8, 7});
  auto test = generate_two_regime(TwoRegimeSpec{30, 30, 4, 8, 6.0, 0.8, 8});
  ClassifierSpec forest;
  forest.kind = ClassifierKind::random_forest;
  forest.forest.trees = 10;
  std::vector<ClassifierSpec> specs{quick_softmax(1), forest};
  CpcConfig a, b;
  b.theta = 0.8;
  b.folds = 3;
  b.routing.disc_k = 7;
  auto ra = compare(train, test, specs, a);
  auto rb = compare(train, test, specs, b);
  ASSERT_EQ(ra.size(), 2u);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].baseline_accuracy, rb[i].baseline_accuracy);
    EXPECT_EQ(ra[i].difference(), ra[i].cpc_accuracy - ra[i].baseline_accuracy);
  }
  EXPECT_EQ(to_json(ra, a)["rows"].size(), 2u);
  EXPECT_THROW(compare(train, test, std::vector<ClassifierSpec>{}, a), Error);
}

}  // namespace
}  // namespace cpc
