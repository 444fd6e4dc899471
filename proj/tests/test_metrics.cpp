#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "isoplane/metrics.hpp"
#include "isoplane/random.hpp"

using namespace isoplane;
using namespace isoplane::metrics;

namespace {

Features gaussian_sample(std::size_t n, std::size_t d, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  Features f(n, std::vector<double>(d));
  for (auto& v : f)
    for (auto& x : v) x = rng.normal() + shift;
  return f;
}

// Direct double-sum unbiased MMD^2 with the cubic kernel, written out per term.
double kid_oracle(const Features& a, const Features& b) {
  auto k = [](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return std::pow(s / double(u.size()) + 1.0, 3);
  };
  double xx = 0, yy = 0, xy = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j) xx += k(a[i], a[j]);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) yy += k(b[i], b[j]);
  for (const auto& u : a)
    for (const auto& v : b) xy += k(u, v);
  const double m = double(a.size()), n = double(b.size());
  return 1000.0 * (xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2 * xy / (m * n));
}

Volume grid_volume(Dims d, Vec3 spacing = {1, 1, 1}, Vec3 origin = {0, 0, 0}) { return Volume(d, spacing, origin); }

}  // namespace

TEST(Kid, MatchesDoubleSumOracle) {
  const Features a{{0.5, -1.0}, {2.0, 0.25}, {-0.75, 1.5}};
  const Features b{{1.0, 1.0}, {-2.0, 0.5}, {0.0, -1.25}};
  EXPECT_NEAR(kid(a, b), kid_oracle(a, b), 1e-10);
  const auto x = gaussian_sample(7, 5, 1), y = gaussian_sample(9, 5, 2, 0.3);
  EXPECT_NEAR(kid(x, y), kid_oracle(x, y), 1e-10);
}

TEST(Kid, DegenerateIdenticalSetsGiveZero) {
  const Features e{{1.0, 0.0}, {1.0, 0.0}};
  EXPECT_NEAR(kid(e, e), 0.0, 1e-12);
}

TEST(Kid, SymmetricAndOrderInvariant) {
  auto a = gaussian_sample(20, 4, 3), b = gaussian_sample(25, 4, 4, 0.5);
  const double k = kid(a, b);
  EXPECT_NEAR(kid(b, a), k, 1e-9);
  std::reverse(a.begin(), a.end());
  Rng rng(9);
  rng.shuffle(b.begin(), b.end());
  EXPECT_NEAR(kid(a, b), k, 1e-9);
}

TEST(Kid, DisjointHalvesWithinBootstrapBound) {
  const auto all = gaussian_sample(400, 8, 11);
  const Features a(all.begin(), all.begin() + 200), b(all.begin() + 200, all.end());
  const double observed = kid(a, b);
  // Bootstrap spread of the statistic under the null: resample both halves
  // from the pooled sample.
  Rng rng(12);
  std::vector<double> boot;
  for (int r = 0; r < 40; ++r) {
    Features x, y;
    for (int i = 0; i < 200; ++i) x.push_back(all[rng.below(all.size())]);
    for (int i = 0; i < 200; ++i) y.push_back(all[rng.below(all.size())]);
    boot.push_back(kid(x, y));
  }
  double mean = 0, var = 0;
  for (double v : boot) mean += v / double(boot.size());
  for (double v : boot) var += (v - mean) * (v - mean) / double(boot.size() - 1);
  EXPECT_LT(std::abs(observed), 3 * std::sqrt(var));
}

TEST(Kid, ShrinksWithSampleSize) {
  std::vector<double> spread;
  for (std::size_t m : {8u, 32u, 128u}) {
    double acc = 0;
    for (std::uint64_t s = 0; s < 10; ++s) acc += std::abs(kid(gaussian_sample(m, 4, 100 + s), gaussian_sample(m, 4, 200 + s)));
    spread.push_back(acc / 10);
  }
  EXPECT_GT(spread[0], spread[1]);
  EXPECT_GT(spread[1], spread[2]);
}

TEST(Kid, Errors) {
  EXPECT_THROW(kid({{1.0}}, {{1.0}, {2.0}}), InvalidArgument);
  EXPECT_THROW(kid({{1.0}, {std::nan("")}}, {{1.0}, {2.0}}), InvalidArgument);
}

TEST(Fid, IdenticalSetsGiveZero) {
  const auto a = gaussian_sample(50, 6, 5);
  EXPECT_NEAR(fid(a, a), 0.0, 1e-8);
}

TEST(Fid, DiagonalClosedForm) {
  // Two points per axis give exact means and variances: set a has mean (1,0),
  // variances (2,8); set b has mean (0,1), variances (8,2).
  auto make = [](double mx, double my, double vx, double vy) {
    const double sx = std::sqrt(vx / 2), sy = std::sqrt(vy / 2);
    return Features{{mx + sx, my + sy}, {mx - sx, my - sy}, {mx + sx, my - sy}, {mx - sx, my + sy}};
  };
  // Four points (+-s, +-s): unbiased variance = 4 s^2 / 3.
  const auto a = make(1, 0, 1.5 * 2, 1.5 * 8), b = make(0, 1, 1.5 * 8, 1.5 * 2);
  const double va1 = 2, va2 = 8, vb1 = 8, vb2 = 2;
  const double closed = 2.0 + (va1 + vb1 - 2 * std::sqrt(va1 * vb1)) + (va2 + vb2 - 2 * std::sqrt(va2 * vb2));
  EXPECT_NEAR(fid(a, b), closed, 1e-8);
}

TEST(Fid, ShiftedGaussiansWithinSamplingError) {
  const std::size_t d = 8;
  std::vector<double> mu(d);
  Rng rng(31);
  double norm2 = 0;
  for (auto& m : mu) {
    m = rng.uniform(0.5, 1.5);
    norm2 += m * m;
  }
  auto a = gaussian_sample(2000, d, 32);
  auto b = gaussian_sample(2000, d, 33);
  for (auto& v : b)
    for (std::size_t i = 0; i < d; ++i) v[i] += mu[i];
  EXPECT_NEAR(fid(a, b), norm2, 0.05 * norm2);
}

TEST(Fid, SymmetricAndRotationInvariant) {
  const auto a = gaussian_sample(60, 3, 40), b = gaussian_sample(70, 3, 41, 0.4);
  const double f = fid(a, b);
  EXPECT_NEAR(fid(b, a), f, 1e-8);
  // Rotation about axis 2 by 0.7 rad applied to both sets.
  const double c = std::cos(0.7), s = std::sin(0.7);
  auto rotate = [&](Features x) {
    for (auto& v : x) {
      const double p = c * v[0] - s * v[1], q = s * v[0] + c * v[1];
      v[0] = p;
      v[1] = q;
    }
    return x;
  };
  EXPECT_NEAR(fid(rotate(a), rotate(b)), f, 1e-8);
}

TEST(Fid, ShrinkageForSmallSamples) {
  const auto a = gaussian_sample(4, 8, 50);
  EXPECT_TRUE(fit_gaussian(a).shrunk);
  EXPECT_FALSE(fit_gaussian(gaussian_sample(9, 8, 50)).shrunk);
  EXPECT_TRUE(std::isfinite(fid(a, gaussian_sample(4, 8, 51))));
  EXPECT_THROW(fid({{1.0, std::numeric_limits<double>::infinity()}}, a), InvalidArgument);
}

TEST(InceptionScore, SingleImageAndCopiesGiveOne) {
  const SoftmaxHead head(4);
  EXPECT_NEAR(inception_score({{0.3, -1.0, 2.0, 0.5}}, head), 1.0, 1e-12);
  EXPECT_NEAR(inception_score(Features(5, {0.3, -1.0, 2.0, 0.5}), head), 1.0, 1e-12);
  EXPECT_THROW(inception_score({}, head), InvalidArgument);
}

TEST(InceptionScore, MatchesPerImageKlOracle) {
  const SoftmaxHead head(3, 5);
  const Features f{{1.0, 0.0, -1.0}, {0.0, 2.0, 0.5}, {-1.5, 0.5, 1.0}};
  std::vector<std::vector<double>> p;
  for (const auto& v : f) p.push_back(head.probabilities(v));
  double kl = 0;
  for (const auto& q : p)
    for (std::size_t c = 0; c < 10; ++c) {
      const double marg = (p[0][c] + p[1][c] + p[2][c]) / 3;
      kl += q[c] * std::log(q[c] / marg);
    }
  EXPECT_NEAR(inception_score(f, head), std::exp(kl / 3), 1e-10);
  EXPECT_GE(inception_score(f, head), 1.0);
}

TEST(ToyFeatures, DeterministicFiniteFixedDimension) {
  const ToyFeatures fx;
  Image img(48, 40);
  Rng rng(1);
  for (auto& x : img.data) x = static_cast<float>(rng.uniform(-1, 1));
  const auto a = fx.features(img), b = ToyFeatures().features(img);
  EXPECT_EQ(a.size(), 64u);
  EXPECT_EQ(a, b);
  for (double x : a) EXPECT_TRUE(std::isfinite(x));
  EXPECT_NE(a, ToyFeatures(2).features(img));
  EXPECT_THROW(fx.features(Image(6, 40)), InvalidArgument);
}

TEST(SliceSelection, CoronalMidpoints) {
  const auto v = grid_volume({11, 4, 4});
  EXPECT_EQ(select_coronal_eval_slices(v, 5.0), (std::vector<std::size_t>{2, 7}));
  EXPECT_EQ(select_coronal_eval_slices(grid_volume({6, 4, 4}), 5.0), (std::vector<std::size_t>{2}));
  // Original spacing equal to the grid: every midpoint rounds down onto a grid index.
  EXPECT_EQ(select_coronal_eval_slices(grid_volume({5, 4, 4}), 1.0), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_THROW(select_coronal_eval_slices(grid_volume({5, 4, 4}), 5.0), InvalidArgument);
  // Box-convention grid: 5 mm slices centred at 2.5, 7.5, 12.5 on a grid with origin 0.5.
  EXPECT_EQ(select_coronal_eval_slices(grid_volume({15, 4, 4}, {1, 1, 1}, {0.5, 0, 0}), 5.0, 2.5),
            (std::vector<std::size_t>{4, 9}));
}

TEST(SliceSelection, AxialNearest) {
  const auto restored = grid_volume({4, 20, 4});
  EXPECT_EQ(select_axial_eval_slices(restored, restored), [] {
    std::vector<std::size_t> all(20);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());
  const auto ref = grid_volume({4, 1, 4}, {1, 5, 1}, {0, 2.5, 0});
  EXPECT_EQ(select_axial_eval_slices(restored, ref), (std::vector<std::size_t>{2}));
  // Coarse reference at 0, 0.4, 0.8 -> indices 0, 0, 1 -> {0, 1}.
  const auto dense = grid_volume({4, 3, 4}, {1, 0.4, 1});
  EXPECT_EQ(select_axial_eval_slices(restored, dense), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(select_axial_eval_slices(restored, grid_volume({4, 3, 4}, {1, 1, 1}, {0, 100, 0})), InvalidArgument);
}

TEST(Evaluate, SameSourceScoresNearZeroAndAveragesAreMeans) {
  Volume gt({20, 20, 48}, {1, 1, 1});
  Rng rng(3);
  for (auto& x : gt.data()) x = static_cast<float>(rng.uniform(-1, 1));
  Volume blurred = gt;
  for (std::size_t i = 0; i + 1 < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j)
      for (std::size_t k = 0; k < 48; ++k) blurred.at(i, j, k) = 0.5f * (gt.at(i, j, k) + gt.at(i + 1, j, k));
  const Volume cor({4, 20, 48}, {5, 1, 1}, {2, 0, 0});
  const Volume ax({20, 4, 48}, {1, 5, 1}, {0, 2, 0});
  const ToyFeatures fx;
  const auto r = evaluate({"same", "blurred"}, {EvalCase{{&gt, &blurred}, &cor, &ax, &gt}}, fx, {16, 16});
  const auto& same = r.method("same");
  EXPECT_NEAR(same.coronal.fid, 0.0, 1e-6);
  EXPECT_NEAR(same.axial.fid, 0.0, 1e-6);
  const auto& b = r.method("blurred");
  EXPECT_LT(std::abs(same.average().kid), b.average().kid);
  EXPECT_GT(b.average().fid, 0.0);
  EXPECT_DOUBLE_EQ(b.average().kid, 0.5 * (b.coronal.kid + b.axial.kid));
  EXPECT_DOUBLE_EQ(b.average().is, 0.5 * (b.coronal.is + b.axial.is));
  EXPECT_EQ(r.coronal_indices.size(), b.coronal.n_slices);
  EXPECT_EQ(b.axial.n_tiles, b.axial.n_slices * 6);  // 20x48 -> 2 x 3 tiles of 16
  std::ostringstream csv;
  write_report_csv(r, csv);
  const auto text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), kReportHeader);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}
