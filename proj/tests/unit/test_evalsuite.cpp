#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biofm/evalsuite.hpp"
#include "oracles.hpp"

using namespace biofm;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

oracle::Mat to_rows(const Eigen::MatrixXd& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

// Step-ROC area up to FPR = k / n_neg without ties: each of the k highest
// negatives contributes the fraction of positives ranked above it.
double step_partial_auc(const std::vector<double>& s, const std::vector<int>& y, std::size_t k) {
  std::vector<double> neg, pos;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? pos : neg).push_back(s[i]);
  std::sort(neg.rbegin(), neg.rend());
  double area = 0;
  for (std::size_t j = 0; j < k; ++j) {
    double above = 0;
    for (double p : pos) above += p > neg[j];
    area += above / static_cast<double>(pos.size());
  }
  return area / static_cast<double>(k);
}

EmbeddingTable table_from(const Eigen::MatrixXd& values, const std::vector<int>& pids) {
  EmbeddingTable t;
  t.modality = "ppg";
  t.values = values;
  for (std::size_t i = 0; i < pids.size(); ++i) t.rows.push_back({static_cast<int>(i), pids[i], Split::Train});
  return t;
}

}  // namespace

TEST(Ridge, ExactFitAtZeroAlpha) {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 0, 1, 1, 1, 2, -1;
  Eigen::VectorXd y(4);
  for (int i = 0; i < 4; ++i) y(i) = 3.0 + 2.0 * X(i, 0) - 1.5 * X(i, 1);
  const auto m = ridge_fit(X, y, 0.0);
  EXPECT_NEAR(m.weights(0), 2.0, 1e-10);
  EXPECT_NEAR(m.weights(1), -1.5, 1e-10);
  EXPECT_NEAR(m.intercept, 3.0, 1e-10);
  EXPECT_LT((m.predict(X) - y).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ridge, HugeAlphaPredictsTheMean) {
  Rng rng(1);
  const auto X = random_matrix(30, 4, rng);
  const Eigen::VectorXd y = random_matrix(30, 1, rng).col(0);
  const auto m = ridge_fit(X, y, 1e12);
  EXPECT_LT(m.weights.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(m.intercept, y.mean(), 1e-9);
}

TEST(Ridge, MatchesNormalEquations) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto X = random_matrix(25, 6, rng);
    Eigen::VectorXd y = random_matrix(25, 1, rng).col(0);
    const double alpha = std::pow(10.0, uniform(rng, -2.0, 2.0));
    const auto m = ridge_fit(X, y, alpha);
    const auto ref = oracle::ridge_normal_equations(to_rows(X), oracle::Vec(y.data(), y.data() + y.size()), alpha);
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(m.weights(j), ref.w[j], 1e-8);
    EXPECT_NEAR(m.intercept, ref.b, 1e-8);
  }
}

TEST(Ridge, SingularUnregularizedSystemIsRejected) {
  Eigen::MatrixXd X(3, 2);
  X << 1, 2, 2, 4, 3, 6;
  EXPECT_THROW(ridge_fit(X, Eigen::VectorXd::Ones(3), 0.0), ValidationError);
  EXPECT_THROW(ridge_fit(X, Eigen::VectorXd::Ones(2), 1.0), ValidationError);
  EXPECT_THROW(ridge_fit(X, Eigen::VectorXd::Ones(3), -1.0), ValidationError);
}

TEST(Ridge, AlphaSelectionPrefersRegularizationOnNoise) {
  Rng rng(3);
  const auto X = random_matrix(40, 30, rng);
  const Eigen::VectorXd y = random_matrix(40, 1, rng).col(0);
  const std::vector<double> grid = {1e-4, 1e4};
  EXPECT_EQ(select_ridge_alpha(X, y, grid, 5, 0), 1e4);
  EXPECT_EQ(select_ridge_alpha(X, y, grid, 5, 0), select_ridge_alpha(X, y, grid, 5, 0));
}

TEST(Auc, Examples) {
  const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{1, 2, 3, 4}, y), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{4, 3, 2, 1}, y), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{1, 1, 1, 1}, y), 0.5);
  EXPECT_THROW(roc_auc(s, std::vector<int>{1, 1, 1, 1}), ValidationError);
  EXPECT_THROW(roc_auc(s, std::vector<int>{0, 1, 2, 1}), ValidationError);
}

TEST(Auc, MatchesPairwiseOracleAndIsRankInvariant) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(60);
    std::vector<int> y(60);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = i % 3 == 0;
      // Rounding creates ties.
      s[i] = std::round(4 * (normal(rng) + 0.7 * y[i])) / 4;
    }
    const double auc = roc_auc(s, y);
    EXPECT_NEAR(auc, oracle::pairwise_auc(s, y), 1e-12);
    std::vector<double> t(s.size());
    std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3 * v) - 7; });
    EXPECT_NEAR(roc_auc(t, y), auc, 1e-12);
  }
}

TEST(PartialAuc, ExamplesAndStepOracle) {
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(partial_auc(std::vector<double>{1, 2, 3, 4}, y, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(partial_auc(std::vector<double>{4, 3, 2, 1}, y, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(partial_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y, 1.0), 0.75);
  EXPECT_THROW(partial_auc(std::vector<double>{1, 2, 3, 4}, y, 0.0), ValidationError);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    std::vector<int> lab;
    for (int i = 0; i < 30; ++i) s.push_back(normal(rng) + 1.0), lab.push_back(1);
    for (int i = 0; i < 50; ++i) s.push_back(normal(rng)), lab.push_back(0);
    EXPECT_NEAR(partial_auc(s, lab, 0.1), step_partial_auc(s, lab, 5), 1e-12);
    EXPECT_NEAR(partial_auc(s, lab, 1.0), roc_auc(s, lab), 1e-12);
  }
}

TEST(Mae, Example) {
  EXPECT_DOUBLE_EQ(mean_absolute_error(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 5}), 1.0);
  EXPECT_THROW(mean_absolute_error(std::vector<double>{1}, std::vector<double>{1, 2}), ValidationError);
}

TEST(EffectiveRank, OrthonormalAndCollapsed) {
  for (int k : {1, 3, 8}) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(16, 8);
    for (int i = 0; i < k; ++i) H(i, i) = 1;
    EXPECT_NEAR(smooth_effective_rank(H), k, 1e-9);
  }
  const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(10, 5, 0.3);
  EXPECT_NEAR(smooth_effective_rank(same), 1.0, 1e-9);
  EXPECT_THROW(smooth_effective_rank(Eigen::MatrixXd::Zero(4, 4)), ValidationError);
}

TEST(EffectiveRank, MatchesJacobiOracleAndScaleInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto H = random_matrix(20, 12, rng);
    const double ser = smooth_effective_rank(H);
    EXPECT_NEAR(ser, oracle::smooth_effective_rank(to_rows(H)), 1e-6);
    EXPECT_NEAR(smooth_effective_rank(H * 37.5), ser, 1e-9);
    EXPECT_GE(ser, 1.0);
    EXPECT_LE(ser, 12.0);
  }
}

TEST(EffectiveRank, BatchedMean) {
  Rng rng(7);
  const auto H = random_matrix(130, 6, rng);
  const double m = mean_smooth_effective_rank(H, 64, 1);
  EXPECT_EQ(m, mean_smooth_effective_rank(H, 64, 1));
  EXPECT_GT(m, 1.0);
  EXPECT_LE(m, 6.0);
  EXPECT_THROW(mean_smooth_effective_rank(H, 200, 1), ValidationError);
}

TEST(Dispersion, ZeroInfiniteAndOracle) {
  // Each participant constant: no within variance.
  Eigen::MatrixXd a(4, 2);
  a << 1, 5, 1, 5, 2, 7, 2, 7;
  const std::vector<int> pid = {0, 0, 1, 1};
  auto r = dispersion_ratio(a, pid);
  EXPECT_DOUBLE_EQ(r.per_dim[0], 0.0);
  EXPECT_DOUBLE_EQ(r.mean, 0.0);
  // Identical participant means: infinite ratio.
  Eigen::MatrixXd b(4, 1);
  b << 1, 3, 3, 1;
  r = dispersion_ratio(b, pid);
  EXPECT_TRUE(std::isinf(r.per_dim[0]));
  EXPECT_EQ(r.n_infinite, 1u);
  EXPECT_THROW(dispersion_ratio(b, std::vector<int>{0, 0, 0, 0}), ValidationError);

  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ids;
    for (int p = 0; p < 7; ++p)
      for (int s = 0; s < 2 + p % 3; ++s) ids.push_back(p);
    const auto H = random_matrix(static_cast<Eigen::Index>(ids.size()), 5, rng);
    const auto want = oracle::dispersion(to_rows(H), ids);
    const auto got = dispersion_ratio(H, ids);
    for (int d = 0; d < 5; ++d) EXPECT_NEAR(got.per_dim[d], want[d], 1e-9);
    // Affine maps of a dimension leave its ratio unchanged.
    Eigen::MatrixXd G = H;
    G.col(2) = G.col(2).array() * -4.0 + 11.0;
    EXPECT_NEAR(dispersion_ratio(G, ids).per_dim[2], got.per_dim[2], 1e-9);
  }
}

TEST(Aggregate, ParticipantMeans) {
  Eigen::MatrixXd v(5, 2);
  v << 1, 1, 3, 5, 10, 0, 2, 2, 12, 2;
  const auto pm = aggregate_by_participant(table_from(v, {4, 4, 9, 4, 9}));
  ASSERT_EQ(pm.ids, (std::vector<int>{4, 9}));
  EXPECT_DOUBLE_EQ(pm.values(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(pm.values(0, 1), 8.0 / 3);
  EXPECT_DOUBLE_EQ(pm.values(1, 0), 11.0);
  EXPECT_DOUBLE_EQ(pm.values(1, 1), 1.0);
}

TEST(Probe, SchemaAndDeterminism) {
  Rng rng(9);
  const auto X = random_matrix(200, 4, rng), Xt = random_matrix(100, 4, rng);
  Eigen::VectorXd y(200), yt(100);
  for (int i = 0; i < 200; ++i) y(i) = X(i, 0) > 0;
  for (int i = 0; i < 100; ++i) yt(i) = Xt(i, 0) > 0;
  const EvalConfig cfg;
  const auto rows = probe_task("pseudo_sex", TaskKind::Classification, X, y, Xt, yt, cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].metric, "auc");
  EXPECT_EQ(rows[1].metric, "pauc");
  EXPECT_GT(rows[0].value, 0.9);
  // Refit at the reported alpha and score with the pairwise oracle.
  ASSERT_TRUE(rows[0].alpha.has_value());
  const Eigen::VectorXd pred = ridge_fit(X, y, *rows[0].alpha).predict(Xt);
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(yt(i) > 0.5 ? 1 : 0);
  EXPECT_NEAR(rows[0].value, oracle::pairwise_auc(oracle::Vec(pred.data(), pred.data() + pred.size()), labels), 1e-12);
  EXPECT_EQ(rows[0].n_train, 200u);
  EXPECT_EQ(rows[0].n_test, 100u);
  EXPECT_EQ(report_csv(rows), report_csv(probe_task("pseudo_sex", TaskKind::Classification, X, y, Xt, yt, cfg)));
  const auto reg = probe_task("pseudo_age", TaskKind::Regression, X, X.col(1), Xt, Xt.col(1), cfg);
  ASSERT_EQ(reg.size(), 1u);
  EXPECT_EQ(reg[0].metric, "mae");
  EXPECT_LT(reg[0].value, 0.1);
  EXPECT_THROW(probe_task("pseudo_sex", TaskKind::Classification, X, Eigen::VectorXd::Zero(200), Xt, yt, cfg),
               ValidationError);
}

TEST(Report, CsvRoundTrip) {
  std::vector<ReportRow> rows = {{"pseudo_age", "classification", "auc", 0.8125, 100, 40, 1.0},
                                 {"embedding", "unsupervised", "effective_rank", 12.25, 40, 0, std::nullopt}};
  const auto back = parse_report_csv(report_csv(rows));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].value, 0.8125);
  EXPECT_EQ(back[0].alpha, 1.0);
  EXPECT_FALSE(back[1].alpha.has_value());
  EXPECT_EQ(report_csv(back), report_csv(rows));
  EXPECT_NE(find_row(back, "pseudo_age", "classification", "auc"), nullptr);
  EXPECT_EQ(find_row(back, "pseudo_age", "regression", "mae"), nullptr);
}

TEST(Metrics, CollapsedEmbeddingsHaveRankOne) {
  std::vector<int> pids;
  for (int i = 0; i < 128; ++i) pids.push_back(i / 4);
  const auto rows = embedding_metrics(table_from(Eigen::MatrixXd::Constant(128, 8, 0.5), pids), EvalConfig{});
  const auto* ser = find_row(rows, "embedding", "unsupervised", "smooth_effective_rank");
  ASSERT_NE(ser, nullptr);
  EXPECT_NEAR(ser->value, 1.0, 1e-9);
}
