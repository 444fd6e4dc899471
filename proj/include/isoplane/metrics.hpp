#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "isoplane/error.hpp"
#include "isoplane/parallel.hpp"
#include "isoplane/random.hpp"
#include "isoplane/tiling.hpp"
#include "isoplane/volume.hpp"

namespace isoplane::metrics {

using Features = std::vector<std::vector<double>>;

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<double> features(const Image& img) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
};

// Fixed random 7x7 filter bank (stride 4, valid) with ReLU responses pooled
// globally and per quadrant, plus raw intensity moments per quadrant.
// 8 filters * (mean, max, 4 quadrant means) + 4 quadrants * 4 moments = 64.
class ToyFeatures final : public FeatureExtractor {
 public:
  static constexpr std::size_t kFilters = 8;
  static constexpr std::size_t kSize = 7;
  static constexpr std::size_t kStride = 4;
  static constexpr std::size_t kDim = 64;

  explicit ToyFeatures(std::uint64_t seed = 20240601) : seed_(seed) {
    Rng rng(seed);
    for (auto& f : bank_) {
      double mean = 0, norm = 0;
      for (auto& w : f) {
        w = rng.normal();
        mean += w;
      }
      mean /= double(f.size());
      for (auto& w : f) {
        w -= mean;
        norm += w * w;
      }
      for (auto& w : f) w /= std::sqrt(norm);
    }
  }

  std::size_t dim() const override { return kDim; }
  std::string id() const override { return "toy64-s" + std::to_string(seed_); }

  std::vector<double> features(const Image& img) const override {
    if (img.rows < kSize || img.cols < kSize)
      throw InvalidArgument("ToyFeatures: image smaller than " + std::to_string(kSize) + "x" + std::to_string(kSize));
    for (float x : img.data)
      if (!std::isfinite(x)) throw InvalidArgument("ToyFeatures: non-finite pixel");
    const std::size_t oh = (img.rows - kSize) / kStride + 1, ow = (img.cols - kSize) / kStride + 1;
    std::vector<double> out;
    out.reserve(kDim);
    for (const auto& f : bank_) {
      double sum = 0, peak = 0;
      std::array<double, 4> qsum{};
      std::array<std::size_t, 4> qn{};
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double acc = 0;
          for (std::size_t u = 0; u < kSize; ++u)
            for (std::size_t v = 0; v < kSize; ++v) acc += f[u * kSize + v] * img.at(r * kStride + u, c * kStride + v);
          acc = std::max(acc, 0.0);
          sum += acc;
          peak = std::max(peak, acc);
          const std::size_t q = (2 * r >= oh ? 2 : 0) + (2 * c >= ow ? 1 : 0);
          qsum[q] += acc;
          ++qn[q];
        }
      out.push_back(sum / double(oh * ow));
      out.push_back(peak);
      for (std::size_t q = 0; q < 4; ++q) out.push_back(qn[q] ? qsum[q] / double(qn[q]) : 0.0);
    }
    for (std::size_t q = 0; q < 4; ++q) {
      const std::size_t r0 = q & 2 ? img.rows / 2 : 0, r1 = q & 2 ? img.rows : img.rows / 2;
      const std::size_t c0 = q & 1 ? img.cols / 2 : 0, c1 = q & 1 ? img.cols : img.cols / 2;
      const double n = double((r1 - r0) * (c1 - c0));
      double mean = 0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) mean += img.at(r, c);
      mean /= n;
      double m2 = 0, m3 = 0, m4 = 0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) {
          const double d = img.at(r, c) - mean;
          m2 += d * d;
          m3 += d * d * d;
          m4 += d * d * d * d;
        }
      out.insert(out.end(), {mean, std::sqrt(m2 / n), m3 / n, m4 / n});
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::array<std::array<double, kSize * kSize>, kFilters> bank_{};
};

inline Features extract_features(const FeatureExtractor& fx, const std::vector<Image>& images) {
  Features out(images.size());
  parallel_for(images.size(), [&](std::size_t i) { out[i] = fx.features(images[i]); });
  return out;
}

namespace detail {

inline void check_features(const Features& f, const char* what) {
  if (f.empty()) throw InvalidArgument(std::string(what) + ": empty feature set");
  const std::size_t d = f.front().size();
  for (const auto& v : f) {
    if (v.size() != d) throw InvalidArgument(std::string(what) + ": inconsistent feature dimensions");
    for (double x : v)
      if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + ": non-finite feature");
  }
}

inline double poly_kernel(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
  const double b = dot / double(u.size()) + 1.0;
  return b * b * b;
}

inline Eigen::MatrixXd as_matrix(const Features& f) {
  Eigen::MatrixXd m(f.size(), f.front().size());
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < f[i].size(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = f[i][j];
  return m;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

inline constexpr double kKidScale = 1000.0;
inline constexpr double kFidShrinkage = 1e-6;

// Unbiased MMD^2 with the cubic polynomial kernel, times kKidScale.
inline double kid(const Features& a, const Features& b) {
  detail::check_features(a, "kid");
  detail::check_features(b, "kid");
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("kid needs at least 2 samples per set");
  if (a.front().size() != b.front().size()) throw InvalidArgument("kid: feature dimensions differ");
  const double m = double(a.size()), n = double(b.size());
  double kaa = 0, kbb = 0, kab = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) kaa += 2 * detail::poly_kernel(a[i], a[j]);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j) kbb += 2 * detail::poly_kernel(b[i], b[j]);
  for (const auto& u : a)
    for (const auto& v : b) kab += detail::poly_kernel(u, v);
  return kKidScale * (kaa / (m * (m - 1)) + kbb / (n * (n - 1)) - 2 * kab / (m * n));
}

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  bool shrunk = false;
};

// Sample mean and unbiased covariance; adds kFidShrinkage * I when there are
// too few samples for a full-rank estimate.
inline Gaussian fit_gaussian(const Features& f) {
  detail::check_features(f, "fid");
  const auto x = detail::as_matrix(f);
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - g.mean.transpose();
  const double denom = std::max<double>(1.0, double(f.size()) - 1.0);
  g.cov = (c.transpose() * c) / denom;
  if (f.size() < f.front().size() + 1) {
    g.cov += kFidShrinkage * Eigen::MatrixXd::Identity(g.cov.rows(), g.cov.cols());
    g.shrunk = true;
  }
  return g;
}

inline double frechet_distance(const Gaussian& a, const Gaussian& b) {
  if (a.mean.size() != b.mean.size()) throw InvalidArgument("fid: feature dimensions differ");
  const Eigen::MatrixXd s = detail::psd_sqrt(a.cov);
  const Eigen::MatrixXd m = s * b.cov * s;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::max(0.0, (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2 * cross);
}

inline double fid(const Features& a, const Features& b) { return frechet_distance(fit_gaussian(a), fit_gaussian(b)); }

// Fixed-seed random linear head + softmax over extractor features.
class SoftmaxHead {
 public:
  static constexpr std::size_t kClasses = 10;

  SoftmaxHead(std::size_t dim, std::uint64_t seed = 77) : dim_(dim), seed_(seed), w_(kClasses * dim) {
    Rng rng(seed);
    for (auto& x : w_) x = rng.normal() / std::sqrt(double(dim));
  }

  std::vector<double> probabilities(const std::vector<double>& f) const {
    if (f.size() != dim_) throw InvalidArgument("softmax head: feature dimension mismatch");
    std::vector<double> logits(kClasses, 0.0);
    for (std::size_t c = 0; c < kClasses; ++c)
      for (std::size_t i = 0; i < dim_; ++i) logits[c] += w_[c * dim_ + i] * f[i];
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - top));
    for (auto& l : logits) l /= z;
    return logits;
  }

  std::string id() const { return "head10-s" + std::to_string(seed_); }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::vector<double> w_;
};

// exp(mean_x KL(p(y|x) || p(y))).
inline double inception_score(const Features& f, const SoftmaxHead& head) {
  detail::check_features(f, "inception_score");
  std::vector<std::vector<double>> p;
  p.reserve(f.size());
  for (const auto& v : f) p.push_back(head.probabilities(v));
  std::vector<double> marginal(SoftmaxHead::kClasses, 0.0);
  for (const auto& q : p)
    for (std::size_t c = 0; c < q.size(); ++c) marginal[c] += q[c] / double(p.size());
  double kl = 0;
  for (const auto& q : p)
    for (std::size_t c = 0; c < q.size(); ++c)
      if (q[c] > 0) kl += q[c] * (std::log(q[c]) - std::log(marginal[c]));
  return std::exp(kl / double(p.size()));
}

namespace detail {

// Nearest grid index to a physical coordinate; ties go to the lower index.
inline long nearest_index_half_down(double position, double origin, double spacing) {
  return static_cast<long>(std::ceil((position - origin) / spacing - 0.5 - 1e-9));
}

}  // namespace detail

// Restored coronal indices nearest to the midpoints between consecutive
// original slices, the first original slice sitting at `first_position` (mm).
inline std::vector<std::size_t> select_coronal_eval_slices(const Volume& restored, double original_spacing,
                                                           double first_position) {
  if (!(original_spacing > 0)) throw InvalidArgument("original slice spacing must be > 0");
  const double o = restored.origin()[0], t = restored.spacing()[0];
  const double last = restored.position(0, double(restored.dim(0) - 1));
  std::vector<double> originals;
  for (double x = first_position; x <= last + 1e-9; x += original_spacing)
    if (x >= o - 1e-9) originals.push_back(x);
  if (originals.size() < 2)
    throw InvalidArgument("coronal slice selection needs at least 2 original slices inside the volume, found " +
                          std::to_string(originals.size()));
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n + 1 < originals.size(); ++n) {
    const long idx = detail::nearest_index_half_down(0.5 * (originals[n] + originals[n + 1]), o, t);
    const auto i = static_cast<std::size_t>(std::clamp<long>(idx, 0, long(restored.dim(0)) - 1));
    if (out.empty() || out.back() != i) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> select_coronal_eval_slices(const Volume& restored, double original_spacing) {
  return select_coronal_eval_slices(restored, original_spacing, restored.origin()[0]);
}

// For each reference axial slice, the nearest restored axial index.
inline std::vector<std::size_t> select_axial_eval_slices(const Volume& restored, const Volume& axial_reference) {
  const double o = restored.origin()[1], t = restored.spacing()[1];
  const double lo = restored.position(1, -0.5), hi = restored.position(1, double(restored.dim(1)) - 0.5);
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < axial_reference.dim(1); ++n) {
    const double x = axial_reference.position(1, double(n));
    if (x < lo - 1e-9 || x > hi + 1e-9) continue;
    const long idx = detail::nearest_index_half_down(x, o, t);
    const auto i = static_cast<std::size_t>(std::clamp<long>(idx, 0, long(restored.dim(1)) - 1));
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  if (out.empty()) throw InvalidArgument("axial reference and restored volume have disjoint axial extents");
  return out;
}

struct MetricConfig {
  std::size_t tile = 96;
  std::size_t tile_stride = 32;

  static MetricConfig paper() { return {}; }
  static MetricConfig desk() { return {48, 16}; }
};

struct PlaneScores {
  double kid = 0;
  double is = 0;
  double fid = 0;
  std::size_t n_slices = 0;
  std::size_t n_tiles = 0;
};

struct MethodReport {
  std::string method;
  PlaneScores coronal;
  PlaneScores axial;

  PlaneScores average() const {
    return {0.5 * (coronal.kid + axial.kid), 0.5 * (coronal.is + axial.is), 0.5 * (coronal.fid + axial.fid),
            coronal.n_slices + axial.n_slices, coronal.n_tiles + axial.n_tiles};
  }
};

struct MetricReport {
  std::vector<MethodReport> methods;
  std::string extractor_id;
  std::string real_source;  // "ground_truth" or "acquisitions"
  std::vector<std::size_t> coronal_indices;  // of the first case
  std::vector<std::size_t> axial_indices;

  const MethodReport& method(const std::string& name) const {
    for (const auto& m : methods)
      if (m.method == name) return m;
    throw InvalidArgument("no method '" + name + "' in report");
  }
};

inline constexpr const char* kReportHeader = "method,plane,kid,is,fid,n_slices,n_tiles,extractor_id";

inline void write_report_csv(const MetricReport& r, std::ostream& os) {
  os << kReportHeader << '\n';
  auto row = [&](const std::string& method, const char* plane, const PlaneScores& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%zu,%zu,", s.kid, s.is, s.fid, s.n_slices, s.n_tiles);
    os << method << ',' << plane << ',' << buf << r.extractor_id << '\n';
  };
  for (const auto& m : r.methods) {
    row(m.method, "coronal", m.coronal);
    row(m.method, "axial", m.axial);
    row(m.method, "average", m.average());
  }
}

// Volumes of one evaluated case. Method volumes and the ground truth must
// share the restored grid; the acquisitions supply original slice positions
// and, without ground truth, the real distribution.
struct EvalCase {
  std::vector<const Volume*> methods;  // parallel to the method names
  const Volume* coronal_acquisition = nullptr;
  const Volume* axial_acquisition = nullptr;
  const Volume* ground_truth = nullptr;
};

inline std::vector<Image> slices_at(const Volume& v, Plane p, const std::vector<std::size_t>& idx) {
  std::vector<Image> out;
  for (auto i : idx) out.push_back(slice(v, p, i));
  return out;
}

inline std::vector<Image> all_slices(const Volume& v, Plane p) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < v.dim(axis_of(p)); ++i) out.push_back(slice(v, p, i));
  return out;
}

inline std::vector<Image> tiles_of(const std::vector<Image>& images, const MetricConfig& mc) {
  std::vector<Image> out;
  for (const auto& img : images)
    for (auto& t : metric_tiles(img, mc.tile, mc.tile_stride)) out.push_back(std::move(t.image));
  return out;
}

// Pools the selected slices of all cases per method and plane and scores
// them against the real slices: KID and IS on whole slices, FID on tiles.
inline MetricReport evaluate(const std::vector<std::string>& method_names, const std::vector<EvalCase>& cases,
                             const FeatureExtractor& fx, const MetricConfig& mc = MetricConfig::paper()) {
  if (cases.empty()) throw InvalidArgument("evaluate: no cases");
  const bool with_truth = cases.front().ground_truth != nullptr;
  struct Pool {
    std::vector<Image> slices;
    std::vector<Image> tiles;
  };
  std::vector<std::array<Pool, 2>> gen(method_names.size());
  std::array<Pool, 2> real;
  MetricReport report;
  report.extractor_id = fx.id();
  report.real_source = with_truth ? "ground_truth" : "acquisitions";
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& ec = cases[c];
    if (ec.methods.size() != method_names.size()) throw InvalidArgument("evaluate: method count mismatch");
    if (!ec.coronal_acquisition || !ec.axial_acquisition) throw InvalidArgument("evaluate: acquisitions required");
    if ((ec.ground_truth != nullptr) != with_truth) throw InvalidArgument("evaluate: ground truth given for some cases only");
    const Volume& grid = *ec.methods.front();
    for (const auto* m : ec.methods)
      if (m->dims() != grid.dims()) throw ShapeError("evaluate: method volumes differ in shape");
    const Volume& acq_cor = *ec.coronal_acquisition;
    const auto cor_idx = select_coronal_eval_slices(grid, acq_cor.spacing()[0], acq_cor.origin()[0]);
    const auto ax_idx = select_axial_eval_slices(grid, *ec.axial_acquisition);
    if (c == 0) {
      report.coronal_indices = cor_idx;
      report.axial_indices = ax_idx;
    }
    const std::array<const std::vector<std::size_t>*, 2> idx{&cor_idx, &ax_idx};
    for (std::size_t p = 0; p < 2; ++p) {
      const Plane plane = plane_of_axis(p);
      for (std::size_t m = 0; m < method_names.size(); ++m) {
        auto s = slices_at(*ec.methods[m], plane, *idx[p]);
        auto t = tiles_of(s, mc);
        for (auto& x : s) gen[m][p].slices.push_back(std::move(x));
        for (auto& x : t) gen[m][p].tiles.push_back(std::move(x));
      }
      std::vector<Image> r;
      if (with_truth) {
        if (ec.ground_truth->dims() != grid.dims()) throw ShapeError("evaluate: ground truth not on the restored grid");
        r = slices_at(*ec.ground_truth, plane, *idx[p]);
      } else {
        r = all_slices(p == 0 ? acq_cor : *ec.axial_acquisition, plane);
      }
      auto t = tiles_of(r, mc);
      for (auto& x : r) real[p].slices.push_back(std::move(x));
      for (auto& x : t) real[p].tiles.push_back(std::move(x));
    }
  }
  const SoftmaxHead head(fx.dim());
  std::array<Features, 2> real_slices, real_tiles;
  for (std::size_t p = 0; p < 2; ++p) {
    real_slices[p] = extract_features(fx, real[p].slices);
    real_tiles[p] = extract_features(fx, real[p].tiles);
  }
  for (std::size_t m = 0; m < method_names.size(); ++m) {
    MethodReport mr;
    mr.method = method_names[m];
    for (std::size_t p = 0; p < 2; ++p) {
      const auto fs = extract_features(fx, gen[m][p].slices);
      const auto ft = extract_features(fx, gen[m][p].tiles);
      PlaneScores& s = p == 0 ? mr.coronal : mr.axial;
      s.kid = kid(fs, real_slices[p]);
      s.is = inception_score(fs, head);
      s.fid = fid(ft, real_tiles[p]);
      s.n_slices = fs.size();
      s.n_tiles = ft.size();
    }
    report.methods.push_back(mr);
  }
  return report;
}

}  // namespace isoplane::metrics
