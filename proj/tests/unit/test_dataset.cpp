#include <functional>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cpc/classifiers.hpp"
#include "cpc/dataset.hpp"
#include "cpc/error.hpp"
#include "support.hpp"

namespace cpc {
namespace {

template <class F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected cpc::Error";
  return ErrorKind::Format;
}

std::string error_message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

LabeledDataset labels_only(std::vector<int> labels, int classes) {
  Matrix x(static_cast<Eigen::Index>(labels.size()), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = static_cast<double>(i);
  return {std::move(x), std::move(labels), classes};
}

TEST(Csv, DensifiesLabels) {
  std::istringstream in("0.0,1.0,2\n1.0,0.0,0\n");
  auto ds = read_dataset(in, false);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.class_count(), 2);
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 0}));
  EXPECT_EQ(ds.original_labels(), (std::vector<std::int64_t>{0, 2}));
}

TEST(Csv, HeaderOnlyIsEmpty) {
  std::istringstream in("f0,f1,label\n");
  EXPECT_EQ(error_kind_of([&] { read_dataset(in, true); }), ErrorKind::EmptyDataset);
}

TEST(Csv, RaggedRowReportsLine) {
  std::istringstream in("1,2,0\n1,2,3,1\n");
  std::string msg = error_message_of([&] { read_dataset(in, false); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  std::istringstream again("1,2,0\n1,2,3,1\n");
  EXPECT_EQ(error_kind_of([&] { read_dataset(again, false); }), ErrorKind::RaggedRow);
}

TEST(Csv, NonNumericCell) {
  std::istringstream in("1,abc,0\n");
  EXPECT_EQ(error_kind_of([&] { read_dataset(in, false); }), ErrorKind::NonNumeric);
  std::istringstream frac_label("1,2,0.5\n");
  EXPECT_EQ(error_kind_of([&] { read_dataset(frac_label, false); }), ErrorKind::NonNumeric);
}

TEST(Csv, RoundTripIsExact) {
  auto ds = testing::random_blobs(30, 3, 3, 2.0, 7);
  std::stringstream buf;
  write_dataset(buf, ds);
  auto back = read_dataset(buf, true);
  EXPECT_EQ(back.labels(), ds.labels());
  EXPECT_EQ(back.features(), ds.features());
}

TEST(Csv, OriginalLabelsSurviveRoundTrip) {
  std::istringstream in("0,7\n1,-3\n2,7\n");
  auto ds = read_dataset(in, false);
  std::stringstream buf;
  write_dataset(buf, ds);
  auto back = read_dataset(buf, true);
  EXPECT_EQ(back.original_labels(), (std::vector<std::int64_t>{-3, 7}));
  EXPECT_EQ(back.labels(), (std::vector<int>{1, 0, 1}));
}

TEST(Split, SmallStratified) {
  auto ds = labels_only({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 2);
  auto s = split(ds, SplitSpec{0.8, 0.1, 0.1, true, 3});
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  auto counts = s.train.class_counts();
  EXPECT_GT(counts[0], 0u);
  EXPECT_GT(counts[1], 0u);
}

TEST(Split, BadFractions) {
  auto ds = labels_only({0, 1}, 2);
  EXPECT_EQ(error_kind_of([&] { split(ds, SplitSpec{0.5, 0.5, 0.5, true, 0}); }),
            ErrorKind::BadFractions);
  EXPECT_EQ(error_kind_of([&] { split(ds, SplitSpec{1.2, -0.1, -0.1, true, 0}); }),
            ErrorKind::BadFractions);
}

TEST(Split, LargeThreeWayProportions) {
  const std::size_t n = 35887;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>((i * 7919) % 7);
  auto ds = labels_only(labels, 7);
  for (bool stratified : {false, true}) {
    SplitSpec spec{28709.0 / n, 3589.0 / n, 3589.0 / n, stratified, 11};
    auto idx = split_indices(ds, spec);
    EXPECT_EQ(idx.train.size(), 28709u);
    EXPECT_EQ(idx.validation.size(), 3589u);
    EXPECT_EQ(idx.test.size(), 3589u);
  }
}

class SplitProperty : public ::testing::TestWithParam<int> {};

TEST_P(SplitProperty, PartitionAndStratification) {
  Rng rng(static_cast<std::uint64_t>(GetParam()));
  std::uniform_int_distribution<int> n_dist(3, 120), c_dist(1, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = n_dist(rng);
  const int classes = c_dist(rng);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i < classes ? i : static_cast<int>(rng() % static_cast<unsigned>(classes));
  auto ds = labels_only(labels, classes);
  double a = u(rng), b = u(rng) * (1.0 - a);
  SplitSpec spec{a, b, 1.0 - a - b, GetParam() % 2 == 0, rng()};
  auto idx = split_indices(ds, spec);

  std::vector<std::size_t> all;
  for (auto* part : {&idx.train, &idx.validation, &idx.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(static_cast<std::size_t>(n));
  std::iota(expect.begin(), expect.end(), 0u);
  EXPECT_EQ(all, expect);

  EXPECT_EQ(idx.validation.size(), static_cast<std::size_t>(std::llround(spec.validation * n)));
  EXPECT_EQ(idx.test.size(), static_cast<std::size_t>(std::llround(spec.test * n)));

  if (spec.stratified) {
    // Each part holds each class within one sample of its proportional share.
    auto counts = ds.class_counts();
    for (auto* part : {&idx.train, &idx.validation, &idx.test}) {
      std::vector<double> got(static_cast<std::size_t>(classes), 0.0);
      for (auto i : *part) got[static_cast<std::size_t>(labels[i])] += 1.0;
      for (int c = 0; c < classes; ++c) {
        double share = static_cast<double>(part->size()) * static_cast<double>(counts[static_cast<std::size_t>(c)]) / n;
        EXPECT_LT(std::abs(got[static_cast<std::size_t>(c)] - share), 1.0 + 1e-9);
      }
    }
  }

  auto again = split_indices(ds, spec);
  EXPECT_EQ(again.train, idx.train);
  EXPECT_EQ(again.test, idx.test);
}

INSTANTIATE_TEST_SUITE_P(Random, SplitProperty, ::testing::Range(0, 200));

TEST(Split, ConcatenationIsPermutation) {
  auto ds = testing::random_blobs(57, 3, 3, 1.0, 5);
  auto s = split(ds, SplitSpec{0.6, 0.2, 0.2, true, 9});
  std::vector<LabeledDataset> parts{s.train, s.validation, s.test};
  auto joined = concatenate(parts);
  ASSERT_EQ(joined.size(), ds.size());
  auto rows = [](const LabeledDataset& d) {
    std::multiset<std::vector<double>> out;
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto r = d.row(i);
      std::vector<double> v(r.begin(), r.end());
      v.push_back(d.label(i));
      out.insert(v);
    }
    return out;
  };
  EXPECT_EQ(rows(joined), rows(ds));
}

std::vector<std::size_t> fold_sizes(const FoldAssignment& f) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(f.folds), 0);
  for (int k : f.fold_of) ++sizes[static_cast<std::size_t>(k)];
  return sizes;
}

TEST(Kfold, TenIntoFive) {
  auto ds = labels_only({0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, 2);
  auto f = kfold(ds, 5, 1);
  EXPECT_EQ(fold_sizes(f), (std::vector<std::size_t>(5, 2)));
  std::vector<std::size_t> all;
  for (int k = 0; k < 5; ++k) {
    auto m = f.members(k);
    all.insert(all.end(), m.begin(), m.end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
}

TEST(Kfold, SevenIntoFive) {
  auto ds = labels_only({0, 1, 2, 0, 1, 2, 0}, 3);
  auto sizes = fold_sizes(kfold(ds, 5, 4));
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{1, 1, 1, 2, 2}));
}

TEST(Kfold, BadK) {
  auto ds = labels_only({0, 1, 0}, 2);
  EXPECT_EQ(error_kind_of([&] { kfold(ds, 1, 0); }), ErrorKind::BadK);
  EXPECT_EQ(error_kind_of([&] { kfold(ds, 4, 0); }), ErrorKind::BadK);
}

class KfoldProperty : public ::testing::TestWithParam<int> {};

TEST_P(KfoldProperty, BalancedAndTotal) {
  Rng rng(static_cast<std::uint64_t>(1000 + GetParam()));
  const int n = std::uniform_int_distribution<int>(2, 90)(rng);
  const int classes = std::uniform_int_distribution<int>(1, 6)(rng);
  const int K = std::uniform_int_distribution<int>(2, std::min(n, 12))(rng);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng() % static_cast<unsigned>(classes));
  auto ds = labels_only(labels, classes);
  for (bool stratified : {true, false}) {
    auto f = kfold(ds, K, rng(), stratified);
    auto sizes = fold_sizes(f);
    auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    EXPECT_GE(*lo, 1u);
    EXPECT_LE(*hi - *lo, 1u);
    std::size_t total = 0;
    for (int k = 0; k < K; ++k) {
      auto mem = f.members(k);
      auto comp = f.complement(k);
      EXPECT_EQ(mem.size() + comp.size(), static_cast<std::size_t>(n));
      total += mem.size();
    }
    EXPECT_EQ(total, static_cast<std::size_t>(n));
    if (stratified) {
      // Per-class fold counts also differ by at most one.
      for (int c = 0; c < classes; ++c) {
        std::vector<int> per(static_cast<std::size_t>(K), 0);
        for (int i = 0; i < n; ++i)
          if (labels[static_cast<std::size_t>(i)] == c) ++per[static_cast<std::size_t>(f.fold_of[static_cast<std::size_t>(i)])];
        auto [a, b] = std::minmax_element(per.begin(), per.end());
        EXPECT_LE(*b - *a, 1);
      }
    }
    EXPECT_EQ(kfold(ds, K, f.seed, stratified).fold_of, f.fold_of);
  }
}

INSTANTIATE_TEST_SUITE_P(Random, KfoldProperty, ::testing::Range(0, 40));

TEST(TwoRegime, ShapeAndTags) {
  TwoRegimeSpec spec;
  auto ds = generate_two_regime(spec);
  EXPECT_EQ(ds.size(), 400u);
  EXPECT_EQ(ds.dim(), 8u);
  EXPECT_EQ(ds.class_count(), 4);
  EXPECT_EQ(std::count(ds.regime_tags().begin(), ds.regime_tags().end(), Regime::easy), 200);
  auto again = generate_two_regime(spec);
  EXPECT_EQ(again.features(), ds.features());
  EXPECT_EQ(again.labels(), ds.labels());
}

TEST(TwoRegime, CenterSeparation) {
  for (int classes : {2, 4, 8, 12}) {
    TwoRegimeSpec spec;
    spec.classes = classes;
    for (auto [regime, margin] : {std::pair{Regime::easy, spec.easy_margin}, std::pair{Regime::hard, spec.hard_margin}}) {
      Matrix c = two_regime_centers(spec, regime);
      double nearest = INFINITY;
      for (int a = 0; a < classes; ++a)
        for (int b = a + 1; b < classes; ++b) nearest = std::min(nearest, (c.row(a) - c.row(b)).norm());
      EXPECT_NEAR(nearest, margin, 1e-9) << classes;
    }
  }
}

TEST(TwoRegime, BadSpec) {
  TwoRegimeSpec spec;
  spec.easy_margin = 0.5;
  spec.hard_margin = 0.8;
  EXPECT_EQ(error_kind_of([&] { generate_two_regime(spec); }), ErrorKind::BadSpec);
  spec = TwoRegimeSpec{};
  spec.classes = 1;
  EXPECT_EQ(error_kind_of([&] { generate_two_regime(spec); }), ErrorKind::BadSpec);
  spec = TwoRegimeSpec{};
  spec.dim = 1;
  EXPECT_EQ(error_kind_of([&] { generate_two_regime(spec); }), ErrorKind::BadSpec);
}

// Monte-Carlo Bayes accuracy of the easy regime under the full generative
// model: p(x | c) is an equal mixture of the easy and hard clusters of class c.
TEST(TwoRegime, EasyRegimeBayesAccuracy) {
  TwoRegimeSpec spec;
  Matrix easy = two_regime_centers(spec, Regime::easy);
  Matrix hard = two_regime_centers(spec, Regime::hard);
  Rng rng(20240601);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, spec.classes - 1);
  const int draws = 100000;
  int correct = 0;
  Eigen::RowVectorXd x(spec.dim);
  for (int t = 0; t < draws; ++t) {
    int c = cls(rng);
    for (int j = 0; j < spec.dim; ++j) x(j) = easy(c, j) + noise(rng);
    int best = -1;
    double best_log = -INFINITY;
    for (int k = 0; k < spec.classes; ++k) {
      double a = -0.5 * (x - easy.row(k)).squaredNorm();
      double b = -0.5 * (x - hard.row(k)).squaredNorm();
      double m = std::max(a, b);
      double lp = m + std::log(std::exp(a - m) + std::exp(b - m));
      if (lp > best_log) {
        best_log = lp;
        best = k;
      }
    }
    correct += best == c;
  }
  EXPECT_GE(static_cast<double>(correct) / draws, 0.99);
}

TEST(TwoRegime, EasyOnlyIsLinearlySolvable) {
  TwoRegimeSpec spec;
  spec.n_hard = 0;
  spec.seed = 3;
  auto train = generate_two_regime(spec);
  spec.seed = 4;
  auto test = generate_two_regime(spec);
  auto clf = fit(ClassifierSpec{}, train);
  auto pred = clf.predict(test);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < test.size(); ++i) ok += pred[i] == test.label(i);
  EXPECT_GE(static_cast<double>(ok) / static_cast<double>(test.size()), 0.99);
}

TEST(Dataset, ConstructionValidates) {
  Matrix x(2, 2);
  x.setZero();
  EXPECT_EQ(error_kind_of([&] { LabeledDataset(x, {0, 2}, 2); }), ErrorKind::LabelOutOfRange);
  EXPECT_EQ(error_kind_of([&] { LabeledDataset(x, {0}, 2); }), ErrorKind::LengthMismatch);
}

}  // namespace
}  // namespace cpc
