#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>
#include <numeric>

#include "mcat/certify.hpp"
#include "mcat/error.hpp"
#include "mcat/lipschitz.hpp"
#include "mcat/metrics.hpp"
#include "mcat/sweep.hpp"
#include "support.hpp"

namespace mcat {
namespace {

using test::random_tensor;

TEST(Balanced, TwoClassExample) {
  std::vector<int> y{0, 0, 1, 1};
  auto m = balanced_metrics(y, {true, true, false, false}, {true, false, false, false}, 2);
  EXPECT_DOUBLE_EQ(m.ba, 0.5);
  EXPECT_DOUBLE_EQ(m.br, 0.25);
}

TEST(Balanced, ImbalanceInvariantForEqualAccuracies) {
  // Class 0 has 10 samples, class 1 has 2; both at accuracy 0.5.
  std::vector<int> y(12, 0);
  y[10] = y[11] = 1;
  std::vector<bool> ok(12, false);
  for (int i = 0; i < 5; ++i) ok[static_cast<std::size_t>(i)] = true;
  ok[10] = true;
  auto m = balanced_metrics(y, ok, ok, 2);
  EXPECT_DOUBLE_EQ(m.ba, 0.5);
  EXPECT_DOUBLE_EQ(m.br, 0.5);
}

TEST(Balanced, LoopOracle) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const std::size_t C = 2 + s % 5, n = 200;
    std::vector<int> y(n);
    std::vector<bool> clean(n), adv(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(i < C ? i : rng.next() % C);
      clean[i] = rng.uniform(0, 1) < 0.7;
      adv[i] = rng.uniform(0, 1) < 0.4;
    }
    auto m = balanced_metrics(y, clean, adv, C);
    double ba = 0.0, br = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      double n_c = 0, ok_c = 0, ok_a = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(y[i]) != c) continue;
        n_c += 1;
        ok_c += clean[i];
        ok_a += adv[i];
      }
      ba += ok_c / n_c / static_cast<double>(C);
      br += ok_a / n_c / static_cast<double>(C);
    }
    EXPECT_NEAR(m.ba, ba, 1e-12);
    EXPECT_NEAR(m.br, br, 1e-12);
  }
}

TEST(Balanced, EmptyClassIsMetricError) {
  std::vector<int> y{0, 0, 2};
  EXPECT_THROW(balanced_metrics(y, {true, true, true}, {true, true, true}, 3), MetricError);
}

TEST(Evaluate, ReportInvariants) {
  auto model = test::small_model(4, 3, 1);
  test::attach_generators(model, 3, 2);
  SynthOptions o;
  o.dim = 4;
  o.counts = {20, 20, 20};
  o.split = Split::test;
  auto data = synth_dataset(o);
  std::vector<std::size_t> train_counts{50, 20, 5};
  auto groups = assign_groups(train_counts);
  EvalConfig cfg;
  cfg.attack.steps = 3;
  auto r = evaluate(model, data, groups, cfg);
  EXPECT_NEAR(r.ba, std::accumulate(r.per_class_clean.begin(), r.per_class_clean.end(), 0.0) / 3.0, 1e-15);
  EXPECT_NEAR(r.br, std::accumulate(r.per_class_robust.begin(), r.per_class_robust.end(), 0.0) / 3.0, 1e-15);
  for (double a : {r.clean_acc, r.robust_acc, r.fgsm_acc, r.ba, r.br}) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
  EXPECT_EQ(r.records.size(), 60u);
  EXPECT_EQ(r.groups[2].classes, 1u);
  EXPECT_DOUBLE_EQ(r.groups[2].robust_acc, r.per_class_robust[2]);
  EXPECT_TRUE(r.has_drift);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({3.0, 1.0, 2.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0}, 0.9), 1.9);
  EXPECT_DOUBLE_EQ(quantile({7.0}, 0.3), 7.0);
}

FeatureExtractor extractor_from(std::vector<Tensor> weights) {
  std::vector<std::size_t> widths{weights.front().rows()};
  for (const auto& w : weights) widths.push_back(w.cols());
  FeatureExtractor fe(widths, false, 0);
  for (std::size_t l = 0; l < weights.size(); ++l) fe.net.layers()[l].weight = weights[l];
  return fe;
}

TEST(Lipschitz, ScaledIdentity) {
  Tensor w = Tensor::identity(4);
  for (double& v : w.data()) v *= 2.0;
  EXPECT_NEAR(lipschitz_upper(extractor_from({w})), 4.0, 1e-9);
}

TEST(Lipschitz, ReluLayerLeavesBoundUnchanged) {
  Tensor w = random_tensor(4, 4, 3);
  const double one = lipschitz_upper(extractor_from({w}));
  const double two = lipschitz_upper(extractor_from({w, Tensor::identity(4)}));
  EXPECT_NEAR(one, two, 1e-9 * one);
}

TEST(Lipschitz, SvdOracle) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Tensor a = random_tensor(6, 9, s), b = random_tensor(9, 5, s + 10);
    double want = std::sqrt(6.0);
    for (const Tensor* t : {&a, &b}) {
      Eigen::MatrixXd m(t->rows(), t->cols());
      for (std::size_t i = 0; i < t->rows(); ++i) {
        for (std::size_t j = 0; j < t->cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t->at(i, j);
      }
      want *= Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    }
    EXPECT_NEAR(lipschitz_upper(extractor_from({a, b})), want, 1e-6 * want);
  }
}

TEST(Lipschitz, EmpiricalBounds) {
  FeatureExtractor id = extractor_from({Tensor::identity(5)});
  Tensor x = random_tensor(30, 5, 4);
  const double est = lipschitz_empirical(id, x, 0.1, 10, 1);
  EXPECT_LE(est, std::sqrt(5.0) + 1e-12);
  EXPECT_GT(est, 0.8 * std::sqrt(5.0));
  EXPECT_EQ(lipschitz_empirical(id, x, 0.1, 0, 1), 0.0);
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto model = test::small_model(5, 3, s, true);
    auto lb = lipschitz_bound(model.extractor, x, 0.05, 10, s);
    EXPECT_LE(lb.empirical_lower, lb.upper);
    EXPECT_GT(lb.empirical_lower, 0.0);
  }
}

TEST(Certify, MisclassifiedHasZeroRadius) {
  auto model = test::small_model(4, 3, 5, true);
  Tensor x = random_tensor(40, 4, 6);
  auto pred = predict(model, x);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = i % 2 ? pred[i] : (pred[i] + 1) % 3;
  auto c = certify(model, x, y, lipschitz_upper(model.extractor));
  for (std::size_t i = 0; i < 40; ++i) {
    if (c.margin[i] <= 0.0) {
      EXPECT_EQ(c.radius[i], 0.0);
      EXPECT_FALSE(c.valid[i]);
    } else {
      EXPECT_TRUE(c.valid[i]);
      EXPECT_NEAR(c.radius[i], c.margin[i] / (2.0 * c.local_lipschitz[i]), 1e-15);
    }
    if (i % 2 == 0) EXPECT_FALSE(c.valid[i]);
  }
  EXPECT_GT(c.certified(), 0u);
}

TEST(Certify, ProxyRadiusUsesTheEmpiricalConstant) {
  auto model = test::small_model(4, 3, 8, true);
  Tensor x = random_tensor(20, 4, 9);
  auto y = predict(model, x);
  const double L = lipschitz_upper(model.extractor);
  auto c = certify(model, x, y, L);
  attach_proxy_radius(c, L / 4.0);
  ASSERT_EQ(c.proxy_radius.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(c.proxy_radius[i], 4.0 * c.radius[i], 1e-12 * (1.0 + c.radius[i]));
  EXPECT_NE(c.csv(test::iota_ids(20), y).find("proxy_radius"), std::string::npos);
  attach_proxy_radius(c, 0.0);
  for (double r : c.proxy_radius) EXPECT_EQ(r, 0.0);
}

TEST(Certify, RadiusArithmetic) {
  // r = gamma / (2 L_x) with the local constant L_x = L (2 + gamma) / (2 rho).
  const double gamma = 0.4, L = 10.0;
  EXPECT_NEAR(gamma / (2.0 * L), 0.02, 1e-15);
  const double rho = L * (2.0 + gamma) / (2.0 * L);
  EXPECT_NEAR(gamma * rho / (L * (2.0 + gamma)), 0.02, 1e-15);
}

TEST(Certify, RefusesUnnormalisedModel) {
  auto model = test::small_model(4, 3, 5, false);
  std::vector<int> y{0};
  EXPECT_THROW(certify(model, random_tensor(1, 4, 1), y, 1.0), UnsupportedError);
}

TEST(Certify, RandomModelsAreNotFalsified) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto model = test::small_model(4, 3, s + 30, true);
    Tensor x = random_tensor(100, 4, s + 31);
    auto y = predict(model, x);
    auto ids = test::iota_ids(100);
    auto c = certify(model, x, y, lipschitz_upper(model.extractor));
    auto f = falsify_certificates(model, x, y, ids, c, 50, 0.99, s);
    EXPECT_EQ(f.attacked, c.certified());
    EXPECT_EQ(f.flipped, 0u);
  }
}

TEST(Theorem1, ThresholdFormula) {
  auto model = test::small_model(4, 3, 40, true);
  Tensor x = random_tensor(50, 4, 41);
  auto y = predict(model, x);
  auto ids = test::iota_ids(50);
  const double L = lipschitz_upper(model.extractor);
  std::vector<double> fr{0.5, 0.9};
  auto t = theorem1_check(model, x, y, ids, L, fr, 10, 1);
  const double s = std::sin(t.theta_min_deg * std::acos(-1.0) / 360.0);
  EXPECT_NEAR(t.epsilon_max, s * t.rho_min / (L * (1.0 + s)), 1e-15);
  ASSERT_EQ(t.points.size(), 2u);
  EXPECT_EQ(t.points[0].evaluated, 50u);
  // Untrained features are not aligned with their class rows, so flips are allowed here; only the bookkeeping is checked.
  std::size_t flips = 0;
  for (const auto& p : t.points) flips += p.evaluated - p.robust;
  EXPECT_EQ(flips, t.counterexamples.size());
  EXPECT_EQ(t.holds, t.counterexamples.empty());
  auto c = certify(model, x, y, L);
  EXPECT_NEAR(c.theorem1_threshold, t.epsilon_max, 1e-15);
}

TEST(Theorem2, FitOnExactInverseLaw) {
  std::vector<Theorem2Row> rows;
  for (double l : {0.05, 0.1, 0.5, 1.0}) rows.push_back({l, 0, 0, 0, 0.02 / l, 1});
  auto fit = fit_gap_bound(rows);
  EXPECT_NEAR(fit.c, 0.02, 1e-12);
  EXPECT_TRUE(fit.holds);
  for (double r : fit.residuals) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(Theorem2, NegativeGapsFitZero) {
  std::vector<Theorem2Row> rows;
  for (double l : {0.05, 0.1, 0.5, 1.0}) rows.push_back({l, 0, 0, 0, -0.3, 1});
  auto fit = fit_gap_bound(rows);
  EXPECT_EQ(fit.c, 0.0);
  EXPECT_EQ(fit.nonnegative, 4u);
  EXPECT_TRUE(fit.holds);
}

TEST(Theorem2, PositiveConstantGapFailsAtLargeLambda) {
  std::vector<Theorem2Row> rows;
  for (double l : {0.05, 0.1, 0.5, 1.0}) rows.push_back({l, 0, 0, 0, 0.5, 1});
  auto fit = fit_gap_bound(rows);
  EXPECT_GT(fit.c, 0.0);
  EXPECT_LT(fit.nonnegative, 3u);
  EXPECT_FALSE(fit.holds);
}

TEST(Theorem2, RiskEstimatesMatchPerSampleLoop) {
  auto model = test::small_model(4, 3, 50);
  test::attach_generators(model, 3, 51);
  Tensor x = random_tensor(12, 4, 52, 0.0, 1.0);
  std::vector<int> y;
  for (int i = 0; i < 12; ++i) y.push_back(i % 3);
  auto ids = test::iota_ids(12);
  AttackConfig atk;
  atk.steps = 4;
  auto r = estimate_risks(model, x, y, ids, atk, 0.2, 7);
  double robust = 0.0, mcat = 0.0, man = 0.0;
  for (std::size_t i = 0; i < 12; ++i) {
    std::vector<std::size_t> row{i};
    std::vector<int> yi{y[i]};
    std::vector<std::size_t> id{ids[i]};
    auto one = estimate_risks(model, x.gather_rows(row), yi, id, atk, 0.2, 7);
    robust += one.robust_risk / 12.0;
    mcat += one.mcat_objective / 12.0;
    man += one.manifold_term / 12.0;
    EXPECT_NEAR(one.robust_terms[0], r.robust_terms[i], 1e-10);
    EXPECT_NEAR(one.mcat_terms[0], r.mcat_terms[i], 1e-10);
  }
  EXPECT_NEAR(r.robust_risk, robust, 1e-10);
  EXPECT_NEAR(r.mcat_objective, mcat, 1e-10);
  EXPECT_NEAR(r.manifold_term, man, 1e-10);
  EXPECT_NEAR(r.gap, r.robust_risk - r.mcat_objective, 1e-15);
}

TEST(SweepTable, SingleValueGivesOneRow) {
  std::vector<SweepCell> cells{{0.1, 0, true, "", {{"robust_acc", 0.5}}}, {0.1, 1, true, "", {{"robust_acc", 0.7}}}};
  const std::string csv = sweep_table_csv(cells);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  auto st = sweep_stat(cells, 0.1, "robust_acc");
  EXPECT_DOUBLE_EQ(st.mean, 0.6);
  EXPECT_NEAR(st.std, std::sqrt(0.02), 1e-15);
  EXPECT_EQ(st.runs, 2u);
}

TEST(SweepTable, FailedCellsAreNotFabricated) {
  std::vector<SweepCell> cells{{0.1, 0, true, "", {{"robust_acc", 0.5}}}, {0.1, 1, false, "boom", {}}};
  auto st = sweep_stat(cells, 0.1, "robust_acc");
  EXPECT_EQ(st.runs, 1u);
  EXPECT_DOUBLE_EQ(st.mean, 0.5);
  const std::string csv = sweep_table_csv(cells);
  EXPECT_NE(csv.find(",1,1,"), std::string::npos) << csv;
  cells.push_back({0.5, 0, false, "boom", {}});
  EXPECT_NE(sweep_table_csv(cells).find("0.5,0,1,NA,NA"), std::string::npos) << sweep_table_csv(cells);
  EXPECT_NE(sweep_table_text(cells).find("0.5\tNA"), std::string::npos);
}

}  // namespace
}  // namespace mcat
