// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "isoplane/pipeline.hpp"
#include "support/gradcheck.hpp"

using namespace isoplane;
namespace fs = std::filesystem;
using isoplane::testing::grad_check;
using isoplane::testing::project;
using isoplane::testing::random_tensor;
using TD = engine::Tensor<double>;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradTol = 1e-3;
constexpr double kGradBudgetSeconds = 120;
constexpr double kLossTol = 1e-10;
constexpr double kStitchTol = 1e-6;
constexpr double kMetricTol = 1e-8;
constexpr double kFidRelTol = 0.05;
constexpr double kL1Improvement = 0.10;
constexpr double kStripeGtFraction = 0.90;
constexpr double kStripeTrainedFraction = 0.70;
constexpr double kMprFraction = 0.70;
constexpr std::size_t kStudyCases = 20;
constexpr std::uint64_t kSeed = 2024;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------- C1

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_name;
  auto check = [&](const std::string& name, std::vector<TD> leaves, const std::function<TD()>& fn, double eps = 1e-3) {
    const auto r = grad_check(std::move(leaves), fn, eps);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  };
  using namespace engine;
  Rng rng(101);
  auto shape = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  const Shape s3{shape(1, 3), shape(2, 4), shape(2, 5)};
  auto a = random_tensor(s3, rng, 1.0, 0.05), b = random_tensor(s3, rng, 1.0, 0.05);
  check("add", {a, b}, [&] { return project(add(a, b)); });
  check("sub", {a, b}, [&] { return project(sub(a, b)); });
  check("mul", {a, b}, [&] { return project(mul(a, b)); });
  check("scale", {a}, [&] { return project(scale(a, -1.3)); });
  check("add_scalar", {a}, [&] { return project(add_scalar(a, 0.7)); });
  check("square", {a}, [&] { return project(square(a)); });
  check("abs", {a}, [&] { return project(engine::abs(a)); });
  check("relu", {a}, [&] { return project(relu(a)); });
  check("leaky_relu", {a}, [&] { return project(leaky_relu(a)); });
  check("tanh", {a}, [&] { return project(engine::tanh(a)); });
  check("sum", {a}, [&] { return engine::sum(square(a)); });
  check("mean", {a, b}, [&] { return engine::mean(mul(a, b)); });
  check("mean_squared_to", {a}, [&] { return mean_squared_to(a, 1.0); });
  check("mean_abs_diff", {a, b}, [&] { return mean_abs_diff(a, b); });
  check("permute", {a, b}, [&] { return project(permute(mul(a, b), {2, 0, 1})); });
  check("reshape", {a}, [&] { return project(reshape(square(a), {s3[0] * s3[1], s3[2]})); });
  check("concat", {a, b}, [&] { return project(concat<double>({a, b}, 1)); });
  check("dropout", {a}, [&] {
    Rng m(5);
    return project(dropout(a, 0.5, true, m));
  });
  auto x4 = random_tensor({shape(1, 2), shape(1, 3), 2 * shape(2, 4), 2 * shape(2, 4)}, rng);
  check("instance_norm", {x4}, [&] { return project(instance_norm(x4)); });
  auto w2 = random_tensor({shape(1, 3), x4.shape()[1], 4, 4}, rng, 0.3), b2 = random_tensor({w2.shape()[0]}, rng);
  check("conv2d", {x4, w2, b2}, [&] { return project(conv(x4, w2, b2, 2, 1)); });
  check("conv2d_s1", {x4, w2, b2}, [&] { return project(conv(x4, w2, b2, 1, 1)); });
  auto wt2 = random_tensor({x4.shape()[1], shape(1, 3), 4, 4}, rng, 0.3), bt2 = random_tensor({wt2.shape()[1]}, rng);
  check("conv_transpose2d", {x4, wt2, bt2}, [&] { return project(conv_transpose(x4, wt2, bt2)); });
  auto x5 = random_tensor({1, shape(1, 2), 2 * shape(1, 2), 2 * shape(1, 3), 2 * shape(1, 2)}, rng);
  auto w3 = random_tensor({shape(1, 2), x5.shape()[1], 4, 4, 4}, rng, 0.3), b3 = random_tensor({w3.shape()[0]}, rng);
  check("conv3d", {x5, w3, b3}, [&] { return project(conv(x5, w3, b3)); });
  auto wt3 = random_tensor({x5.shape()[1], shape(1, 2), 4, 4, 4}, rng, 0.3), bt3 = random_tensor({wt3.shape()[1]}, rng);
  check("conv_transpose3d", {x5, wt3, bt3}, [&] { return project(conv_transpose(x5, wt3, bt3)); });
  check("instance_norm3d", {x5}, [&] { return project(instance_norm(x5)); });

  // Discriminator loss through a conditional critic.
  nets::DiscriminatorConfig dc;
  dc.channels = {3, 4};
  dc.final_stride = 1;
  nets::Discriminator<double> d(dc);
  for (auto& p : d.parameters())
    for (auto& v : p.data()) v = rng.normal(0, 0.3);
  const auto cond = random_tensor({2, 1, 16, 16}, rng), real = random_tensor({2, 1, 16, 16}, rng);
  const auto fake = random_tensor({2, 1, 16, 16}, rng);
  auto dleaves = d.parameters();
  dleaves.push_back(fake);
  check("discriminator_loss_graph", dleaves,
        [&] { return nets::lsgan_discriminator_loss(d.forward(cond, real), d.forward(cond, fake)); }, 1e-6);

  // Total generator loss through the generator and both critics.
  nets::GeneratorConfig gc;
  gc.base_channels = 2;
  gc.depth = 2;
  nets::Generator<double> g(gc);
  nets::DiscriminatorConfig ac;
  ac.plane = Plane::Axial;
  ac.channels = {3, 4};
  nets::Discriminator<double> dax(ac);
  nets::DiscriminatorConfig cc;
  cc.plane = Plane::Coronal;
  cc.channels = {2};
  cc.final_stride = 1;
  nets::Discriminator<double> dcor(cc);
  for (auto params : {g.parameters(), dax.parameters(), dcor.parameters()})
    for (auto& p : params)
      for (auto& v : p.data()) v = rng.normal(0, 0.3);
  const auto x = random_tensor({1, 1, 8, 8, 8}, rng, 0.5), teacher = random_tensor({1, 1, 8, 8, 8}, rng, 0.5);
  check("generator_loss_graph", g.parameters(), [&] {
    const auto y = g.forward(x);
    TD t[2][2];
    for (Plane p : {Plane::Coronal, Plane::Axial}) {
      const auto& critic = p == Plane::Coronal ? dcor : dax;
      t[axis_of(p)][0] = nets::lsgan_generator_loss(critic.forward(nets::plane_slices(x, p), nets::plane_slices(y, p)));
      t[axis_of(p)][1] = nets::l1_consistency(nets::plane_slices(y, p), nets::plane_slices(teacher, p));
    }
    return nets::total_generator_loss(t[0][0], t[0][1], t[1][0], t[1][1]);
  }, 1e-6);
  const double secs = seconds_since(t0);
  return {worst < kGradTol && secs < kGradBudgetSeconds,
          fmt("max rel err %.2e (%s) < %.0e, %.1f s < %.0f s", worst, worst_name.c_str(), kGradTol, secs,
              kGradBudgetSeconds)};
}

// ---------------------------------------------------------------- C2

Outcome loss_oracles() {
  Rng rng(202);
  double worst = 0;
  auto note = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  auto vec = [&](std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
  };
  for (int rep = 0; rep < 10; ++rep) {
    const auto real = vec(7 + rep, -1, 2), fake = vec(5 + rep, -1, 2);
    double r = 0, f = 0, g = 0;
    for (double v : real) r += (v - 1) * (v - 1);
    for (double v : fake) {
      f += v * v;
      g += (v - 1) * (v - 1);
    }
    const auto R = TD::from({real.size()}, real), F = TD::from({fake.size()}, fake);
    note(nets::lsgan_generator_loss(F).item(), g / double(fake.size()));
    note(nets::lsgan_discriminator_loss(R, F).item(), 0.5 * r / double(real.size()) + 0.5 * f / double(fake.size()));
    const auto gen = vec(24, -1, 1), tgt = vec(24, -1, 1);
    double l1 = 0;
    for (std::size_t i = 0; i < gen.size(); ++i) l1 += std::abs(gen[i] - tgt[i]);
    note(nets::l1_consistency(TD::from({2, 3, 4}, gen), TD::from({2, 3, 4}, tgt)).item(), 10.0 * l1 / 24.0);
    const auto t = vec(4, 0, 3);
    const double total = 0.5 * (t[0] + t[1]) + 0.5 * (t[2] + t[3]);
    note(nets::total_generator_loss(t[0], t[1], t[2], t[3]), total);
    note(nets::total_generator_loss(TD::from({1}, {t[0]}), TD::from({1}, {t[1]}), TD::from({1}, {t[2]}),
                                    TD::from({1}, {t[3]}))
             .item(),
         total);
  }
  const auto cfg = trainer::TrainConfig::paper();
  const bool defaults = cfg.lambda_cor == 10.0 && cfg.lambda_ax == 10.0 && cfg.alpha == 0.5 && cfg.beta == 0.5 &&
                        trainer::TrainConfig::desk().lambda_cor == 10.0 && trainer::TrainConfig::desk().alpha == 0.5;
  return {worst < kLossTol && defaults,
          fmt("max abs err %.1e < %.0e; lambda=10, alpha=beta=0.5 defaults %s", worst, kLossTol, defaults ? "ok" : "WRONG")};
}

// ---------------------------------------------------------------- C3

Outcome tiling() {
  const auto g = plan({512, 512, 512}, 64, 0.08);
  bool ok = g.stride == 59;
  for (std::size_t a = 0; a < 3; ++a) {
    std::vector<std::size_t> expect;
    for (std::size_t s = 0; s + 64 <= 512; s += 59) expect.push_back(s);
    if (expect.back() + 64 < 512) expect.push_back(512 - 64);
    ok = ok && g.starts[a] == expect && expect.size() == 9;
    std::vector<int> cover(512, 0);
    for (auto s : g.starts[a])
      for (std::size_t i = s; i < s + 64; ++i) ++cover[i];
    ok = ok && std::all_of(cover.begin(), cover.end(), [](int c) { return c > 0; });
  }
  double worst = 0;
  Rng rng(303);
  for (int rep = 0; rep < 20; ++rep) {
    const Dims d{64 + rng.below(60), 64 + rng.below(60), 64 + rng.below(60)};
    Volume v(d, {1, 1, 1});
    for (auto& x : v.data()) x = static_cast<float>(rng.uniform(-1, 1));
    const auto grid = plan(d, 64, 0.08);
    for (auto w : {StitchWeighting::Uniform, StitchWeighting::Cosine}) {
      const Volume back = stitch(extract(v, grid), grid, v.spacing(), v.origin(), w);
      for (std::size_t i = 0; i < v.voxel_count(); ++i)
        worst = std::max(worst, double(std::abs(back.data()[i] - v.data()[i])));
    }
  }
  return {ok && worst < kStitchTol,
          fmt("stride %zu, %zu windows/axis, coverage %s; stitch(extract) max err %.1e < %.0e over 20 volumes", g.stride,
              g.starts[0].size(), ok ? "full" : "BROKEN", worst, kStitchTol)};
}

// ---------------------------------------------------------------- C4

metrics::Features gaussian_features(std::size_t n, std::size_t d, double shift, std::uint64_t seed) {
  Rng rng(seed);
  metrics::Features f(n, std::vector<double>(d));
  for (auto& v : f)
    for (auto& x : v) x = rng.normal() + shift;
  return f;
}

double kid_oracle(const metrics::Features& a, const metrics::Features& b) {
  auto k = [](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return std::pow(s / double(u.size()) + 1.0, 3);
  };
  double aa = 0, bb = 0, ab = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j) aa += k(a[i], a[j]);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) bb += k(b[i], b[j]);
  for (const auto& u : a)
    for (const auto& v : b) ab += k(u, v);
  const double m = double(a.size()), n = double(b.size());
  return 1000.0 * (aa / (m * (m - 1)) + bb / (n * (n - 1)) - 2 * ab / (m * n));
}

// Trace term via eigenvalues of the (non-symmetric) product S1 S2.
double fid_oracle(const metrics::Features& a, const metrics::Features& b) {
  auto stats = [](const metrics::Features& f) {
    const std::size_t n = f.size(), d = f[0].size();
    Eigen::MatrixXd X(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) X(long(i), long(j)) = f[i][j];
    const Eigen::RowVectorXd mu = X.colwise().mean();
    const Eigen::MatrixXd C = X.rowwise() - mu;
    return std::pair<Eigen::VectorXd, Eigen::MatrixXd>{mu.transpose(), C.transpose() * C / double(n - 1)};
  };
  const auto [m1, s1] = stats(a);
  const auto [m2, s2] = stats(b);
  const Eigen::MatrixXd prod = s1 * s2;
  Eigen::EigenSolver<Eigen::MatrixXd> es(prod);
  double tr_sqrt = 0;
  for (long i = 0; i < es.eigenvalues().size(); ++i) tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  return (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2 * tr_sqrt;
}

double is_oracle(const metrics::Features& f, const metrics::SoftmaxHead& head) {
  std::vector<std::vector<double>> p;
  for (const auto& v : f) p.push_back(head.probabilities(v));
  const std::size_t K = p[0].size();
  double kl_sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double kl = 0;
    for (std::size_t c = 0; c < K; ++c) {
      double marg = 0;
      for (const auto& q : p) marg += q[c];
      marg /= double(p.size());
      kl += p[i][c] * std::log(p[i][c] / marg);
    }
    kl_sum += kl;
  }
  return std::exp(kl_sum / double(p.size()));
}

Outcome metric_oracles() {
  double worst = 0;
  auto rel = [](double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = gaussian_features(12 + s, 6, 0.0, 400 + s), b = gaussian_features(9 + s, 6, 0.3, 500 + s);
    worst = std::max(worst, rel(metrics::kid(a, b), kid_oracle(a, b)));
    const auto c = gaussian_features(40, 5, 0.0, 600 + s), e = gaussian_features(50, 5, 0.5, 700 + s);
    worst = std::max(worst, rel(metrics::fid(c, e), fid_oracle(c, e)));
    const metrics::SoftmaxHead head(6, 77 + s);
    worst = std::max(worst, rel(metrics::inception_score(a, head), is_oracle(a, head)));
  }
  const std::size_t d = 8, n = 2000;
  std::vector<double> mu(d);
  Rng rng(808);
  double mu2 = 0;
  for (auto& m : mu) {
    m = rng.uniform(0.5, 1.5);
    mu2 += m * m;
  }
  auto x = gaussian_features(n, d, 0.0, 901), y = gaussian_features(n, d, 0.0, 902);
  for (auto& v : y)
    for (std::size_t j = 0; j < d; ++j) v[j] += mu[j];
  const double f = metrics::fid(x, y);
  const double relf = std::abs(f - mu2) / mu2;
  return {worst < kMetricTol && relf < kFidRelTol,
          fmt("oracle max rel err %.1e < %.0e; FID %.4f vs |mu|^2 %.4f (%.2f%% < %.0f%%)", worst, kMetricTol, f, mu2,
              100 * relf, 100 * kFidRelTol)};
}

// ---------------------------------------------------------------- shared trained study

struct Study {
  RunConfig cfg;
  fs::path dir;
  std::optional<pipeline::PipelineResult> result;
};

RunConfig study_config() {
  RunConfig c = RunConfig::desk();
  c.seed = kSeed;
  c.phantom.cases = 12;
  c.holdout = 4;
  c.teacher = "oracle";
  c.sync_seed();
  c.validate();
  return c;
}

const pipeline::PipelineResult& trained(Study& s) {
  if (!s.result) {
    const auto t0 = std::chrono::steady_clock::now();
    s.result = pipeline::run_pipeline(s.cfg, s.dir);
    std::cerr << fmt("[study] trained %ld epochs on %zu cases in %.0f s\n", s.cfg.train.epochs,
                     s.cfg.phantom.cases - s.cfg.holdout, seconds_since(t0));
  }
  return *s.result;
}

double mean_abs(const Volume& a, const Volume& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.voxel_count(); ++i) s += std::abs(double(a.data()[i]) - b.data()[i]);
  return s / double(a.voxel_count());
}

// ---------------------------------------------------------------- C5

Outcome directional_table(Study& s) {
  const auto& r = trained(s);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& simple = r.metrics.method("simple");
  const auto& interp = r.metrics.method("interp");
  double l1s = 0, l1i = 0;
  std::size_t n = 0;
  for (std::size_t i = s.cfg.phantom.cases - s.cfg.holdout; i < s.cfg.phantom.cases; ++i) {
    const auto name = pipeline::case_name(i);
    const Volume rest = read_volume(s.dir / "restored" / name / "restored.vol");
    const Volume itp = read_volume(s.dir / "restored" / name / "interp.vol");
    const Volume gt = align_to(read_volume(s.dir / "data" / name / "gt.vol"), rest);
    l1s += mean_abs(rest, gt);
    l1i += mean_abs(itp, gt);
    ++n;
  }
  l1s /= double(n);
  l1i /= double(n);
  const double gain = 1.0 - l1s / l1i;
  const bool kid_ok = simple.average().kid < interp.average().kid;
  (void)t0;
  return {kid_ok && gain >= kL1Improvement,
          fmt("avg KID simple %.3f vs interp %.3f (%s); held-out L1 simple %.5f vs interp %.5f, gain %.1f%% (need %.0f%%)",
              simple.average().kid, interp.average().kid, kid_ok ? "lower" : "NOT lower", l1s, l1i, 100 * gain,
              100 * kL1Improvement)};
}

// ---------------------------------------------------------------- C6

Outcome ablation(const fs::path& dir) {
  const auto res = pipeline::run_ablation(study_config(), dir);
  std::ifstream in(res.csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  bool ok = lines.size() == 4 && lines[0] == pipeline::kAblationHeader;
  const char* names[] = {"a", "b", "simple"};
  for (std::size_t i = 1; ok && i < 4; ++i) {
    std::istringstream row(lines[i]);
    std::string cell;
    std::getline(row, cell, ',');
    ok = cell == names[i - 1];
    int numbers = 0;
    while (std::getline(row, cell, ',')) {
      ok = ok && std::isfinite(std::stod(cell));
      ++numbers;
    }
    ok = ok && numbers == 6;
  }
  const auto ck = engine::read_checkpoint(dir / "a" / "model.ckpt");
  ok = ok && ck.meta_value("disc_axial") == "none";
  const auto ckb = engine::read_checkpoint(dir / "b" / "model.ckpt");
  ok = ok && ckb.meta_value("disc_coronal") == "none";
  std::string kids;
  for (const auto& row : res.rows) kids += fmt(" %s=%.3f", row.variant.c_str(), row.kid_avg());
  return {ok, fmt("CSV contract %s; avg KID%s; simple smallest: %s", ok ? "ok" : "BROKEN", kids.c_str(),
                  res.simple_smallest_kid ? "yes (matches claimed direction)" : "no (direction not reproduced)")};
}

// ---------------------------------------------------------------- C7 / C8

struct StudyCase {
  double ai_gt, ai_interp, ai_simple;
  double rough_interp, rough_simple;
};

std::vector<StudyCase> study_cases(Study& s, const fs::path& dir) {
  const auto& r = trained(s);
  const auto ck = engine::read_checkpoint(r.checkpoint);
  const auto files = pipeline::write_phantom_cases(s.cfg, dir, 100, kStudyCases);
  std::vector<StudyCase> out;
  for (const auto& c : files) {
    const Volume cor = read_volume(c.cor());
    const Volume itp = pipeline::interpolate(cor);
    const Volume rest = pipeline::restore_volume(ck, cor);
    const Volume gt = align_to(read_volume(c.gt()), itp);
    const auto cl = analysis::read_centerline(c.centerline());
    const auto ai = [](const Volume& v) {
      const std::size_t k = v.dim(1) / 2;
      return analysis::anisotropy_index(analysis::spectrum(slice(v, Plane::Axial, k)));
    };
    const auto rough = [&](const Volume& v) {
      return analysis::along_curve_roughness(
          analysis::straight_mpr(v, cl, pipeline::kMprWidth, pipeline::kMprStep).image);
    };
    out.push_back({ai(gt), ai(itp), ai(rest), rough(itp), rough(rest)});
  }
  return out;
}

Outcome stripes(const std::vector<StudyCase>& cs) {
  std::size_t gt_wins = 0, simple_wins = 0;
  for (const auto& c : cs) {
    if (std::abs(c.ai_interp - 1) > std::abs(c.ai_gt - 1)) ++gt_wins;
    if (std::abs(c.ai_simple - 1) < std::abs(c.ai_interp - 1)) ++simple_wins;
  }
  const double f1 = double(gt_wins) / double(cs.size()), f2 = double(simple_wins) / double(cs.size());
  return {f1 >= kStripeGtFraction && f2 >= kStripeTrainedFraction,
          fmt("|AI-1| interp > gt in %zu/%zu (%.0f%%, need %.0f%%); simple closer to 1 than interp in %zu/%zu (%.0f%%, "
              "need %.0f%%)",
              gt_wins, cs.size(), 100 * f1, 100 * kStripeGtFraction, simple_wins, cs.size(), 100 * f2,
              100 * kStripeTrainedFraction)};
}

Outcome mpr_smoothness(const std::vector<StudyCase>& cs) {
  std::size_t wins = 0;
  double ri = 0, rs = 0;
  for (const auto& c : cs) {
    wins += c.rough_simple < c.rough_interp;
    ri += c.rough_interp / double(cs.size());
    rs += c.rough_simple / double(cs.size());
  }
  const double f = double(wins) / double(cs.size());
  return {f >= kMprFraction, fmt("simple smoother in %zu/%zu tube phantoms (%.0f%%, need %.0f%%); mean roughness %.5f vs "
                                 "%.5f",
                                 wins, cs.size(), 100 * f, 100 * kMprFraction, rs, ri)};
}

// ---------------------------------------------------------------- C9

Outcome determinism(const fs::path& dir) {
  RunConfig c = RunConfig::desk();
  c.seed = kSeed + 9;
  c.phantom.cases = 3;
  c.train.epochs = 2;
  c.train.checkpoint_every = 1;
  c.sync_seed();
  const auto a = pipeline::run_pipeline(c, dir / "a");
  const auto b = pipeline::run_pipeline(c, dir / "b");
  std::vector<std::string> compared;
  bool same = true;
  for (const auto* f : {"run/model.ckpt", "run/checkpoint_epoch1.ckpt", "run/history.csv", "report.csv", "analysis.csv"}) {
    const bool eq = slurp(dir / "a" / f) == slurp(dir / "b" / f) && !slurp(dir / "a" / f).empty();
    same = same && eq;
    if (!eq) compared.push_back(f);
  }
  (void)a;
  (void)b;
  std::string diff;
  for (const auto& f : compared) diff += " " + f;
  return {same, same ? "checkpoints, history, report and analysis CSVs byte-identical across reruns"
                     : "differing artifacts:" + diff};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "isoplane_acceptance").string();
  std::vector<int> only, tolerate;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--workdir", workdir, "scratch directory for runs")->capture_default_str();
  app.add_option("--only", only, "criteria to run (1-9); default all");
  app.add_option("--tolerate", tolerate, "criteria whose FAIL does not count toward the exit code");
  app.add_option("--threads", threads, "worker threads")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  set_thread_budget(threads);
  ::unsetenv("ISOPLANE_SEED");
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);

  const fs::path root(workdir);
  fs::remove_all(root);
  fs::create_directories(root);
  Study study{study_config(), root / "study", std::nullopt};
  std::optional<std::vector<StudyCase>> cases;
  auto study_rows = [&]() -> const std::vector<StudyCase>& {
    if (!cases) cases = study_cases(study, root / "study_cases");
    return *cases;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"C1 gradient correctness", gradients},
      {"C2 loss oracles", loss_oracles},
      {"C3 tiling exactness", tiling},
      {"C4 metric oracles", metric_oracles},
      {"C5 directional KID and L1 vs interpolation", [&] { return directional_table(study); }},
      {"C6 ablation CSV and direction", [&] { return ablation(root / "ablation"); }},
      {"C7 Fourier stripe index", [&] { return stripes(study_rows()); }},
      {"C8 MPR smoothness", [&] { return mpr_smoothness(study_rows()); }},
      {"C9 determinism", [&] { return determinism(root / "determinism"); }},
  };
  int failed = 0, tolerated = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), int(i + 1)) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool excused = std::find(tolerate.begin(), tolerate.end(), int(i + 1)) != tolerate.end();
    if (!o.pass) ++(excused ? tolerated : failed);
    std::cout << (o.pass ? "PASS " : "FAIL ") << criteria[i].first << ": " << o.detail
              << fmt(" [%.0f s]", seconds_since(t0)) << std::endl;
  }
  std::cout << fmt("%d failed, %d tolerated failures", failed, tolerated) << std::endl;
  return failed;
}
