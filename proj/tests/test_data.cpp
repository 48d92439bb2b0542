#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "mcat/data.hpp"
#include "mcat/error.hpp"
#include "mcat/io.hpp"

namespace mcat {
namespace {

TEST(ClassCounts, PaperEndpoints) {
  auto c = class_counts(5000, 100.0, 10);
  ASSERT_EQ(c.size(), 10u);
  EXPECT_EQ(c.front(), 5000u);
  EXPECT_EQ(c.back(), 50u);
}

TEST(ClassCounts, SecondClassValue) {
  // 5000 * 100^(-1/9) = 2997.421..., evaluated separately with Python's float math.
  EXPECT_EQ(class_counts(5000, 100.0, 10)[1], 2997u);
}

TEST(ClassCounts, FlatWhenIrIsOne) {
  for (std::size_t C : {2u, 5u, 13u}) {
    for (auto n : class_counts(77, 1.0, C)) EXPECT_EQ(n, 77u);
  }
}

TEST(ClassCounts, MonotoneAndEndpointRatio) {
  for (double ir : {1.0, 2.5, 10.0, 50.0, 100.0}) {
    for (std::size_t C : {2u, 3u, 10u, 17u}) {
      auto c = class_counts(1000, ir, C);
      for (std::size_t k = 1; k < C; ++k) EXPECT_LE(c[k], c[k - 1]);
      // endpoint ratio within one unit of rounding of the last count
      EXPECT_NEAR(static_cast<double>(c.front()) / ir, static_cast<double>(c.back()), 0.5 + 1e-9);
    }
  }
}

TEST(ClassCounts, InvalidArguments) {
  EXPECT_THROW(class_counts(100, 10.0, 1), ConfigError);
  EXPECT_THROW(class_counts(100, 0.5, 4), ConfigError);
  try {
    class_counts(100, 0.5, 4);
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "data.ir");
  }
}

TEST(Groups, EvenSplit) {
  std::vector<std::size_t> counts{9, 8, 7, 6, 5, 4, 3, 2, 1};
  auto g = assign_groups(counts);
  EXPECT_EQ(std::count(g.begin(), g.end(), Group::head), 3);
  EXPECT_EQ(std::count(g.begin(), g.end(), Group::medium), 3);
  EXPECT_EQ(std::count(g.begin(), g.end(), Group::tail), 3);
}

TEST(Groups, TenClassesFourThreeThree) {
  auto g = assign_groups(class_counts(300, 50.0, 10));
  std::vector<Group> want{Group::head, Group::head, Group::head, Group::head, Group::medium,
                          Group::medium, Group::medium, Group::tail, Group::tail, Group::tail};
  EXPECT_EQ(g, want);
}

TEST(Groups, TwoClassesHeadTail) {
  std::vector<std::size_t> counts{10, 3};
  EXPECT_EQ(assign_groups(counts), (std::vector<Group>{Group::head, Group::tail}));
}

TEST(Groups, PartitionForAnySize) {
  for (std::size_t C = 1; C < 30; ++C) {
    std::vector<std::size_t> counts(C, 5);
    auto g = assign_groups(counts);
    EXPECT_EQ(g.size(), C);
  }
}

// Distance from p to the class curve, minimised over a fine t grid and then
// refined by golden-section search.
double distance_to_curve(const ClassCurves& curves, int c, std::span<const double> p) {
  auto dist = [&](double t) {
    auto q = curves.point(c, t);
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (q[j] - p[j]) * (q[j] - p[j]);
    return s;
  };
  const double two_pi = 2.0 * std::acos(-1.0);
  double best_t = 0.0, best = dist(0.0);
  const int n = 20000;
  for (int i = 1; i < n; ++i) {
    const double t = two_pi * i / n;
    const double v = dist(t);
    if (v < best) best = v, best_t = t;
  }
  double a = best_t - two_pi / n, b = best_t + two_pi / n;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double c1 = b - r * (b - a), c2 = a + r * (b - a);
    if (dist(c1) < dist(c2)) b = c2;
    else a = c1;
  }
  return std::sqrt(std::min(best, dist(0.5 * (a + b))));
}

TEST(Synth, NoiselessSamplesLieOnCurves) {
  SynthOptions o;
  o.seed = 4;
  o.dim = 6;
  o.counts = {6, 4, 2};
  o.noise_sigma = 0.0;
  auto d = synth_dataset(o);
  ClassCurves curves(o.seed, 3, o.dim, o.amplitude, o.center_lo, o.center_hi);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_LT(distance_to_curve(curves, d.y[i], d.x.row(i)), 1e-9) << "sample " << i;
  }
}

TEST(Synth, SameSeedBitIdentical) {
  SynthOptions o;
  o.seed = 9;
  o.counts = class_counts(50, 5.0, 4);
  auto a = synth_dataset(o), b = synth_dataset(o);
  EXPECT_EQ(a.x.storage(), b.x.storage());
  EXPECT_EQ(a.y, b.y);
}

TEST(Synth, CountsAudit) {
  SynthOptions o;
  o.counts = class_counts(1000, 10.0, 5);
  auto d = synth_dataset(o);
  std::vector<std::size_t> realised(5, 0);
  for (int y : d.y) ++realised[static_cast<std::size_t>(y)];
  EXPECT_EQ(realised, o.counts);
  EXPECT_EQ(d.counts, o.counts);
  EXPECT_NEAR(std::accumulate(d.class_prior.begin(), d.class_prior.end(), 0.0), 1.0, 1e-12);
  EXPECT_EQ(d.counts.front(), 1000u);
  EXPECT_EQ(d.counts.back(), 100u);
}

TEST(Synth, RejectsTinyDimension) {
  SynthOptions o;
  o.dim = 1;
  o.counts = {3, 3};
  EXPECT_THROW(synth_dataset(o), ConfigError);
}

TEST(Csv, HandWrittenFile) {
  auto d = parse_dataset_csv("0.5,1.25,0\n-2,3e-1,1\n7,8,1\n");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_EQ(d.x.at(0, 1), 1.25);
  EXPECT_EQ(d.x.at(1, 1), 0.3);
  EXPECT_EQ(d.y, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(d.counts, (std::vector<std::size_t>{1, 2}));
}

TEST(Csv, RaggedRowNamesRow) {
  try {
    parse_dataset_csv("1,2,0\n1,0\n");
    FAIL() << "no error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Csv, BadLabels) {
  EXPECT_THROW(parse_dataset_csv("1,2,0.5\n"), FormatError);
  try {
    parse_dataset_csv("1,2,0\n1,2,1\n3,4,7\n", 5);
    FAIL() << "no error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

TEST(Csv, SaveLoadRoundTrip) {
  SynthOptions o;
  o.seed = 17;
  o.counts = class_counts(40, 4.0, 3);
  auto d = synth_dataset(o);
  const auto dir = std::filesystem::temp_directory_path() / "mcat_test_data_roundtrip";
  std::filesystem::remove_all(dir);
  save_dataset(dir / "train.csv", d, {{"seed", 17}});
  auto back = load_csv(dir / "train.csv", 3);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.x.size(); ++i) EXPECT_NEAR(back.x[i], d.x[i], 1e-12);
  EXPECT_EQ(back.y, d.y);
  EXPECT_TRUE(std::filesystem::exists(dir / "train.meta.json"));
  EXPECT_THROW(load_csv(dir / "missing.csv"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Shuffle, PermutationAndDeterminism) {
  auto a = shuffled_indices(100, 3), b = shuffled_indices(100, 3);
  EXPECT_EQ(a, b);
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(a, shuffled_indices(100, 4));
}

}  // namespace
}  // namespace mcat
