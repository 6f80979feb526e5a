#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "voxpoint/errors.hpp"
#include "voxpoint/sampling.hpp"

using namespace voxpoint;

namespace {

std::vector<Vec3> line(std::initializer_list<double> xs) {
  std::vector<Vec3> out;
  for (double x : xs) out.push_back({x, 0.0, 0.0});
  return out;
}

std::vector<Vec3> random_points(oracle::Rng& rng, std::size_t n, double extent) {
  std::vector<Vec3> out(n);
  for (auto& p : out) p = {rng.uniform(0, extent), rng.uniform(-extent, extent), rng.uniform(-1, 1)};
  return out;
}

PointCloud cloud_from(std::span<const Vec3> pts, std::size_t feat_dim, oracle::Rng& rng) {
  PointCloud c(feat_dim);
  std::vector<double> f(feat_dim);
  for (const Vec3& p : pts) {
    for (double& v : f) v = rng.uniform(-1, 1);
    c.push_back(p, f);
  }
  return c;
}

bool distinct(const std::vector<std::size_t>& idx) { return std::set(idx.begin(), idx.end()).size() == idx.size(); }

}  // namespace

TEST(LabelForeground, NoBoxesGivesZeros) {
  oracle::Rng rng(1);
  const PointCloud c = oracle::random_cloud(rng, 100, GridSpec::kitti());
  const auto labels = label_foreground(c, {});
  EXPECT_TRUE(std::all_of(labels.begin(), labels.end(), [](auto v) { return v == 0; }));
}

TEST(LabelForeground, HugeBoxGivesOnes) {
  oracle::Rng rng(2);
  const PointCloud c = oracle::random_cloud(rng, 100, GridSpec::kitti());
  Box3D huge;
  huge.cx = 35;
  huge.l = huge.w = 200;
  huge.h = 20;
  const std::vector<Box3D> boxes{huge};
  const auto labels = label_foreground(c, boxes);
  EXPECT_TRUE(std::all_of(labels.begin(), labels.end(), [](auto v) { return v == 1; }));
}

TEST(LabelForeground, MatchesBruteForce) {
  oracle::Rng rng(3);
  const GridSpec g({-6, -6, -2}, {6, 6, 2}, {0.1, 0.1, 0.1});
  const PointCloud c = oracle::random_cloud(rng, 3000, g);
  std::vector<Box3D> boxes;
  for (int b = 0; b < 6; ++b) boxes.push_back(oracle::random_box(rng, 4.0));
  const auto labels = label_foreground(c, boxes);
  std::size_t fg = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    bool inside = false;
    for (const Box3D& b : boxes) inside = inside || oracle::point_in_box(c.xyz(i), b);
    EXPECT_EQ(labels[i], inside ? 1 : 0) << i;
    fg += labels[i];
  }
  EXPECT_GT(fg, 0u);
}

TEST(ScoreProvider, NoiselessOracleReturnsLabels) {
  oracle::Rng rng(4);
  const PointCloud c = oracle::random_cloud(rng, 50, GridSpec::kitti());
  std::vector<std::uint8_t> labels(50);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.integer(0, 1));
  const ScoredPoints sp = score_provider(c, OracleScoreMode{labels, 0.0, 7});
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sp.scores[i], static_cast<double>(labels[i]));
  EXPECT_EQ(sp.points, c);
}

TEST(ScoreProvider, NoisyOracleStaysInUnitIntervalAndIsSeeded) {
  oracle::Rng rng(5);
  const PointCloud c = oracle::random_cloud(rng, 500, GridSpec::kitti());
  std::vector<std::uint8_t> labels(500, 0);
  for (std::size_t i = 0; i < 250; ++i) labels[i] = 1;
  const ScoredPoints a = score_provider(c, OracleScoreMode{labels, 0.3, 11});
  const ScoredPoints b = score_provider(c, OracleScoreMode{labels, 0.3, 11});
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_NO_THROW(a.validate());
  EXPECT_TRUE(std::any_of(a.scores.begin(), a.scores.end(), [](double s) { return s > 0.0 && s < 1.0; }));
}

TEST(ScoreProvider, ZeroWeightMlpGivesOneHalf) {
  oracle::Rng rng(6);
  const PointCloud c = oracle::random_cloud(rng, 20, GridSpec::kitti(), 4);
  MlpWeights w;
  w.layers.push_back({8, 4, std::vector<double>(32, 0.0), std::vector<double>(8, 0.0)});
  w.layers.push_back({1, 8, std::vector<double>(8, 0.0), std::vector<double>(1, 0.0)});
  const ScoredPoints sp = score_provider(c, MlpScoreMode{w});
  for (double s : sp.scores) EXPECT_EQ(s, 0.5);
}

TEST(ScoreProvider, MlpMatchesDenseEvaluation) {
  oracle::Rng rng(7);
  const PointCloud c = oracle::random_cloud(rng, 200, GridSpec::kitti(), 4);
  const std::array<std::size_t, 3> dims{4, 16, 1};
  const MlpWeights w = oracle::random_weights(rng, dims);
  const ScoredPoints sp = score_provider(c, MlpScoreMode{w});
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double logit = oracle::mlp(w, c.feat(i), false)[0];
    EXPECT_NEAR(sp.scores[i], 1.0 / (1.0 + std::exp(-logit)), 1e-9);
  }
}

TEST(ScoreProvider, MlpDimensionMismatchThrows) {
  oracle::Rng rng(8);
  const PointCloud c = oracle::random_cloud(rng, 5, GridSpec::kitti(), 2);
  const std::array<std::size_t, 3> dims{4, 8, 1};
  EXPECT_THROW(score_provider(c, MlpScoreMode{oracle::random_weights(rng, dims)}), ShapeError);
}

TEST(Fps, OneDimensionalExample) {
  const auto pts = line({0, 1, 2, 3, 10});
  EXPECT_EQ(fps(pts, 3), (std::vector<std::size_t>{0, 4, 3}));
}

TEST(Fps, FullCountReturnsEveryIndex) {
  oracle::Rng rng(9);
  const auto pts = random_points(rng, 40, 5.0);
  auto sel = fps(pts, 40);
  std::sort(sel.begin(), sel.end());
  std::vector<std::size_t> all(40);
  std::iota(all.begin(), all.end(), 0u);
  EXPECT_EQ(sel, all);
}

TEST(Fps, TooManyThrows) {
  const auto pts = line({0, 1});
  EXPECT_THROW(fps(pts, 3), ArgumentError);
}

TEST(Fps, MatchesQuadraticOracle) {
  oracle::Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    const auto pts = random_points(rng, 400, 20.0);
    const auto sel = fps(pts, 64);
    EXPECT_EQ(sel, oracle::fps(pts, 64)) << t;
    EXPECT_TRUE(distinct(sel));
  }
}

TEST(Fps, DuplicatePointsStillGiveDistinctIndices) {
  const std::vector<Vec3> pts(6, Vec3{1, 1, 1});
  const auto sel = fps(pts, 6);
  EXPECT_TRUE(distinct(sel));
  EXPECT_EQ(sel, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Sfps, OneDimensionalExample) {
  const auto pts = line({0, 1, 2, 3, 10});
  const std::vector<double> scores{0.9, 0.1, 0.1, 0.9, 0.1};
  const auto sel = sfps(pts, scores, 3, 1.0);
  ASSERT_EQ(sel.size(), 3u);
  EXPECT_EQ(sel[0], 0u);
  // Round two: rectified distances 0.105, 0.210, 4.379, 1.052; round three: 0.105, 0.105, 0.736.
  EXPECT_EQ(sel, (std::vector<std::size_t>{0, 3, 4}));
  EXPECT_EQ(sel, oracle::sfps_stepwise(pts, scores, 3, 1.0));
}

TEST(Sfps, ConstantScoresReproduceFps) {
  oracle::Rng rng(11);
  for (double c : {0.05, 0.5, 1.0}) {
    const auto pts = random_points(rng, 300, 15.0);
    const std::vector<double> scores(pts.size(), c);
    EXPECT_EQ(sfps(pts, scores, 50, 1.0), fps(pts, 50)) << c;
  }
}

TEST(Sfps, AllZeroScoresFallBackToDistance) {
  oracle::Rng rng(12);
  const auto pts = random_points(rng, 100, 10.0);
  const std::vector<double> zeros(pts.size(), 0.0);
  const auto sel = sfps(pts, zeros, 20, 1.0);
  EXPECT_EQ(sel, fps(pts, 20));
  EXPECT_EQ(sel, oracle::sfps_stepwise(pts, zeros, 20, 1.0));
}

TEST(Sfps, LargeGammaMatchesTopKOrder) {
  oracle::Rng rng(13);
  for (int t = 0; t < 10; ++t) {
    const auto pts = random_points(rng, 200, 10.0);
    // Sixteen leaders 0.06 apart (a factor e^6 after sharpening), the rest zero.
    std::vector<double> scores(pts.size(), 0.0);
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t k = 0; k < 16; ++k) scores[order[k]] = 1.0 - 0.06 * static_cast<double>(k);
    EXPECT_EQ(sfps(pts, scores, 15, 100.0), oracle::topk(scores, 15)) << t;
  }
}

TEST(Sfps, MatchesStepwiseOracle) {
  oracle::Rng rng(14);
  for (int t = 0; t < 10; ++t) {
    const auto pts = random_points(rng, 250, 12.0);
    std::vector<double> scores(pts.size());
    for (double& s : scores) s = rng.uniform(0, 1);
    for (double gamma : {0.5, 1.0, 3.0}) {
      const auto sel = sfps(pts, scores, 40, gamma);
      EXPECT_EQ(sel, oracle::sfps_stepwise(pts, scores, 40, gamma)) << t << " gamma " << gamma;
      EXPECT_TRUE(distinct(sel));
    }
  }
}

TEST(Sfps, TopKModeAndRejections) {
  const auto pts = line({0, 1, 2, 3});
  const std::vector<double> scores{0.2, 0.8, 0.8, 0.1};
  EXPECT_EQ(sfps(pts, scores, 3, 1.0, SfpsMode::kTopK), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_THROW(sfps(pts, scores, 5, 1.0), ArgumentError);
  EXPECT_THROW(sfps(pts, scores, 2, 0.0), ArgumentError);
  const std::vector<double> short_scores{0.1};
  EXPECT_THROW(sfps(pts, short_scores, 1, 1.0), ShapeError);
}

TEST(Sfps, PrefersForegroundOverFps) {
  oracle::Rng rng(15);
  double fg_fps = 0.0;
  double fg_sfps = 0.0;
  for (int scene = 0; scene < 10; ++scene) {
    const auto pts = random_points(rng, 2000, 30.0);
    std::vector<double> scores(pts.size(), 0.0);
    for (std::size_t i = 0; i < pts.size(); i += 20) scores[i] = 1.0;
    auto count_fg = [&](const std::vector<std::size_t>& sel) {
      double n = 0;
      for (auto i : sel) n += scores[i];
      return n / static_cast<double>(sel.size());
    };
    fg_fps += count_fg(fps(pts, 256));
    fg_sfps += count_fg(sfps(pts, scores, 256, 1.0));
  }
  EXPECT_GT(fg_sfps, 2.0 * fg_fps);
}

TEST(Bce, ClampedAtBothEnds) {
  EXPECT_NEAR(bce(0.5, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.0, 1.0), -std::log(1e-7), 1e-9);
  EXPECT_NEAR(bce(1.0, 0.0), -std::log(1e-7), 1e-6);
  EXPECT_LT(bce(1.0, 1.0), 1e-6);
}

TEST(SegLoss, SinglePointExample) {
  const std::vector<double> s{0.5};
  const std::vector<double> y{1.0};
  const std::array<SegLayerInput, 1> layers{SegLayerInput{s, y}};
  EXPECT_NEAR(seg_loss(layers, SamplingConfig{}), 0.1 * std::log(2.0), 1e-15);
}

TEST(SegLoss, PerfectScoresAreNearZero) {
  const std::vector<double> y{1, 0, 1, 1, 0};
  const std::array<SegLayerInput, 2> layers{SegLayerInput{y, y}, SegLayerInput{y, y}};
  EXPECT_LT(seg_loss(layers, SamplingConfig{}), 4 * 0.1 * 1.1e-7);
}

TEST(SegLoss, RandomInputsMatchOracle) {
  oracle::Rng rng(16);
  const SamplingConfig cfg;
  for (int t = 0; t < 100; ++t) {
    const std::size_t layers_n = static_cast<std::size_t>(rng.integer(1, 4));
    std::vector<std::vector<double>> scores(layers_n);
    std::vector<std::vector<double>> labels(layers_n);
    std::vector<SegLayerInput> layers;
    for (std::size_t k = 0; k < layers_n; ++k) {
      const int n = rng.integer(1, 60);
      for (int i = 0; i < n; ++i) {
        scores[k].push_back(rng.uniform(0, 1));
        labels[k].push_back(rng.integer(0, 1));
      }
    }
    for (std::size_t k = 0; k < layers_n; ++k) layers.push_back({scores[k], labels[k]});
    EXPECT_NEAR(seg_loss(layers, cfg), oracle::seg_loss(scores, labels, cfg.layer_loss_weights), 1e-9);
  }
}

TEST(SegLoss, LengthMismatchThrows) {
  const std::vector<double> s{0.5, 0.5};
  const std::vector<double> y{1.0};
  const std::array<SegLayerInput, 1> layers{SegLayerInput{s, y}};
  EXPECT_THROW(seg_loss(layers, SamplingConfig{}), ShapeError);
}

TEST(SamplingConfig, ValidationRejectsBadValues) {
  SamplingConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = SamplingConfig{};
  cfg.counts = {4096, 4096, 1024, 256};
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = SamplingConfig{};
  cfg.layer_loss_weights[2] = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(GroupAndPool, EmptyGroupGivesZeros) {
  oracle::Rng rng(17);
  const auto pts = line({5, 6});
  const FeatureMatrix f(2, 1, 1.0);
  const std::array<std::size_t, 3> dims{4, 8, 8};
  const MlpWeights w = oracle::random_weights(rng, dims);
  const auto pooled = group_and_pool(pts, f, {0, 0, 0}, 1.0, w);
  EXPECT_EQ(pooled, std::vector<double>(8, 0.0));
}

TEST(GroupAndPool, SingletonEqualsTransformedNeighbour) {
  oracle::Rng rng(18);
  const auto pts = line({0.3, 5.0});
  FeatureMatrix f(2, 1);
  f(0, 0) = 0.7;
  const std::array<std::size_t, 3> dims{4, 8, 8};
  const MlpWeights w = oracle::random_weights(rng, dims);
  const std::vector<double> row{0.7, 0.3, 0.0, 0.0};
  const auto expected = mlp_forward(w, row, LastActivation::kRelu);
  EXPECT_EQ(group_and_pool(pts, f, {0, 0, 0}, 1.0, w), expected);
}

TEST(GroupAndPool, RadiusIsStrict) {
  oracle::Rng rng(19);
  const auto pts = line({1.0});
  const FeatureMatrix f(1, 1, 1.0);
  const std::array<std::size_t, 2> dims{4, 4};
  MlpWeights w = oracle::random_weights(rng, dims);
  for (double& b : w.layers[0].bias) b = 1.0;
  EXPECT_EQ(group_and_pool(pts, f, {0, 0, 0}, 1.0, w), std::vector<double>(4, 0.0));
}

TEST(SaLayer, FirstLayerUsesFpsAndMatchesOracle) {
  oracle::Rng rng(20);
  const auto pts = random_points(rng, 600, 6.0);
  const PointCloud cloud = cloud_from(pts, 2, rng);
  ScoredPoints sp{cloud, std::vector<double>(pts.size(), 0.5)};
  FeatureMatrix feats(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) std::copy_n(cloud.feat(i).begin(), 2, feats.row(i).begin());

  SamplingConfig cfg;
  cfg.counts = {64, 32, 16, 8};
  cfg.radii[0] = {0.5, 1.5};
  const std::array<std::size_t, 3> dims{5, 8, 8};
  SaLayerWeights w{std::nullopt, {oracle::random_weights(rng, dims), oracle::random_weights(rng, dims)}};
  const SaLayerResult r = sa_layer_forward(sp, feats, 1, cfg, w);
  EXPECT_EQ(r.indices, oracle::fps(pts, 64));
  ASSERT_EQ(r.features.rows(), 64u);
  ASSERT_EQ(r.features.cols(), 16u);
  for (std::size_t k = 0; k < r.indices.size(); ++k) {
    const Vec3 c = pts[r.indices[k]];
    auto expected = oracle::group_pool(pts, feats, c, 0.5, w.group_mlps[0]);
    const auto outer = oracle::group_pool(pts, feats, c, 1.5, w.group_mlps[1]);
    expected.insert(expected.end(), outer.begin(), outer.end());
    for (std::size_t d = 0; d < 16; ++d) EXPECT_NEAR(r.features(k, d), expected[d], 1e-9);
    EXPECT_EQ(r.keypoints.points.xyz(k), c);
  }
}

TEST(SaLayer, LaterLayerRescoresAndUsesSfps) {
  oracle::Rng rng(21);
  const auto pts = random_points(rng, 300, 6.0);
  const PointCloud cloud = cloud_from(pts, 0, rng);
  ScoredPoints sp{cloud, std::vector<double>(pts.size(), 0.5)};
  const FeatureMatrix feats = oracle::random_matrix(rng, pts.size(), 6);

  SamplingConfig cfg;
  cfg.counts = {300, 40, 20, 10};
  const std::array<std::size_t, 3> score_dims{6, 12, 1};
  const std::array<std::size_t, 3> dims{9, 8, 8};
  SaLayerWeights w{oracle::random_weights(rng, score_dims),
                   {oracle::random_weights(rng, dims), oracle::random_weights(rng, dims)}};
  const SaLayerResult r = sa_layer_forward(sp, feats, 2, cfg, w);
  std::vector<double> scores(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    scores[i] = 1.0 / (1.0 + std::exp(-oracle::mlp(*w.score_mlp, feats.row(i), false)[0]));
    EXPECT_NEAR(r.input_scores[i], scores[i], 1e-12);
  }
  EXPECT_EQ(r.indices, oracle::sfps_stepwise(pts, r.input_scores, 40, cfg.gamma));
  for (std::size_t k = 0; k < r.indices.size(); ++k) EXPECT_EQ(r.keypoints.scores[k], r.input_scores[r.indices[k]]);
}

TEST(SaLayer, CountCappedByInputSize) {
  oracle::Rng rng(22);
  const auto pts = random_points(rng, 10, 3.0);
  ScoredPoints sp{cloud_from(pts, 0, rng), std::vector<double>(10, 0.5)};
  const FeatureMatrix feats(10, 0);
  const std::array<std::size_t, 3> dims{3, 4, 4};
  SaLayerWeights w{std::nullopt, {oracle::random_weights(rng, dims), oracle::random_weights(rng, dims)}};
  EXPECT_EQ(sa_layer_forward(sp, feats, 1, SamplingConfig{}, w).indices.size(), 10u);
  EXPECT_THROW(sa_layer_forward(sp, feats, 5, SamplingConfig{}, w), ArgumentError);
}

TEST(SaLayer, PoolingIgnoresNeighbourOrder) {
  oracle::Rng rng(23);
  const auto pts = random_points(rng, 200, 4.0);
  const FeatureMatrix feats = oracle::random_matrix(rng, pts.size(), 3);
  const std::array<std::size_t, 3> dims{6, 8, 8};
  const MlpWeights w = oracle::random_weights(rng, dims);
  std::vector<std::size_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<Vec3> pts2;
  FeatureMatrix feats2(pts.size(), 3);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pts2.push_back(pts[perm[i]]);
    std::copy_n(feats.row(perm[i]).begin(), 3, feats2.row(i).begin());
  }
  for (std::size_t k = 0; k < 20; ++k) {
    EXPECT_EQ(group_and_pool(pts, feats, pts[k], 1.5, w), group_and_pool(pts2, feats2, pts[k], 1.5, w));
  }
}
