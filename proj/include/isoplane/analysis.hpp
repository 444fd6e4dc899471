#pragma once

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "isoplane/error.hpp"
#include "isoplane/volume.hpp"

namespace isoplane::analysis {

struct Spectrum {
  Image log_magnitude;  // DC at (rows/2, cols/2)
  Plane plane = Plane::Axial;
  std::size_t index = 0;
};

// Raw 2D DFT, row-major, unshifted.
inline std::vector<std::complex<double>> dft2(const Image& img) {
  Eigen::FFT<double> fft;
  const std::size_t R = img.rows, C = img.cols;
  std::vector<std::complex<double>> out(R * C);
  std::vector<double> row_in(C);
  std::vector<std::complex<double>> tmp;
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) row_in[c] = img.at(r, c);
    fft.fwd(tmp, row_in);
    // Real input yields only the non-negative half; fill by conjugate symmetry.
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = c < tmp.size() ? tmp[c] : std::conj(tmp[(C - c) % C]);
  }
  std::vector<std::complex<double>> col_in(R), col_out;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < R; ++r) col_in[r] = out[r * C + c];
    fft.fwd(col_out, col_in);
    for (std::size_t r = 0; r < R; ++r) out[r * C + c] = col_out[r];
  }
  return out;
}

inline Spectrum spectrum(const Image& img, Plane plane = Plane::Axial, std::size_t index = 0) {
  if (img.rows == 0 || img.cols == 0) throw InvalidArgument("spectrum: empty image");
  for (float x : img.data)
    if (!std::isfinite(x)) throw InvalidArgument("spectrum: non-finite pixel");
  const auto f = dft2(img);
  const std::size_t R = img.rows, C = img.cols;
  Spectrum s{Image(R, C), plane, index};
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      s.log_magnitude.at((r + R / 2) % R, (c + C / 2) % C) = static_cast<float>(std::log1p(std::abs(f[r * C + c])));
  return s;
}

inline constexpr double kBandFraction = 0.1;
inline constexpr double kLowFrequencyRadius = 2.0;

// E_v / E_h: spectral power |F|^2 (recovered from the log magnitude) in the
// narrow band around the vertical frequency axis over that around the
// horizontal axis, with the low-frequency disk excluded. The ratio does not
// change under global intensity scaling.
inline double anisotropy_index(const Spectrum& sp, double band_fraction = kBandFraction) {
  const Image& s = sp.log_magnitude;
  if (!(band_fraction > 0) || band_fraction >= 0.5) throw InvalidArgument("band fraction must lie in (0, 0.5)");
  const long R = long(s.rows), C = long(s.cols);
  const double band_h = band_fraction * double(C), band_v = band_fraction * double(R);
  double ev = 0, eh = 0;
  std::size_t nv = 0, nh = 0;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      const double kv = double(r - R / 2), kh = double(c - C / 2);
      if (std::hypot(kv, kh) <= kLowFrequencyRadius) continue;
      const double mag = std::expm1(double(s.at(std::size_t(r), std::size_t(c))));
      const double e = mag * mag;
      if (std::abs(kh) <= band_h) {
        ev += e;
        ++nv;
      }
      if (std::abs(kv) <= band_v) {
        eh += e;
        ++nh;
      }
    }
  if (nv == 0 || nh == 0) throw InvalidArgument("anisotropy band contains no frequency bins outside the DC disk");
  if (eh == 0) throw InvalidArgument("anisotropy index undefined for an empty horizontal band");
  return ev / eh;
}

// Polyline in mm with consecutive duplicates removed.
class Centerline {
 public:
  explicit Centerline(std::vector<Vec3> points) {
    for (const auto& p : points) {
      for (double x : p)
        if (!std::isfinite(x)) throw InvalidArgument("centerline: non-finite point");
      if (pts_.empty() || distance(pts_.back(), p) > 1e-12) pts_.push_back(p);
    }
    if (pts_.size() < 2) throw InvalidArgument("centerline needs at least 2 distinct points");
    arc_.push_back(0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) arc_.push_back(arc_.back() + distance(pts_[i - 1], pts_[i]));
  }

  const std::vector<Vec3>& points() const { return pts_; }
  double length() const { return arc_.back(); }
  const std::vector<double>& arc_lengths() const { return arc_; }

  // Segment index containing arc length s and the position there.
  std::pair<std::size_t, Vec3> locate(double s) const {
    s = std::clamp(s, 0.0, length());
    std::size_t seg = std::size_t(std::upper_bound(arc_.begin(), arc_.end(), s) - arc_.begin());
    seg = std::clamp<std::size_t>(seg, 1, pts_.size() - 1) - 1;
    const double len = arc_[seg + 1] - arc_[seg];
    const double t = len > 0 ? (s - arc_[seg]) / len : 0.0;
    Vec3 p{};
    for (std::size_t a = 0; a < 3; ++a) p[a] = pts_[seg][a] + t * (pts_[seg + 1][a] - pts_[seg][a]);
    return {seg, p};
  }

  static double distance(const Vec3& a, const Vec3& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
  }

 private:
  std::vector<Vec3> pts_;
  std::vector<double> arc_;
};

// One "x y z" triple (mm) per line; blank lines and '#' comments skipped.
inline Centerline read_centerline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open centerline file " + path.string());
  std::vector<Vec3> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Vec3 p{};
    if (!(ss >> p[0] >> p[1] >> p[2]))
      throw FormatError("centerline " + path.string() + " line " + std::to_string(lineno) + ": expected x y z");
    pts.push_back(p);
  }
  return Centerline(std::move(pts));
}

namespace detail {

inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 unit(const Vec3& a) {
  const double n = std::sqrt(dot(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}

// Rotates v by the minimal rotation taking unit t0 to unit t1.
inline Vec3 transport(const Vec3& v, const Vec3& t0, const Vec3& t1) {
  const Vec3 k = cross(t0, t1);
  const double s = std::sqrt(dot(k, k)), c = dot(t0, t1);
  if (s < 1e-12) return v;
  const Vec3 u = {k[0] / s, k[1] / s, k[2] / s};
  const Vec3 uxv = cross(u, v);
  const double ud = dot(u, v);
  Vec3 r{};
  for (std::size_t a = 0; a < 3; ++a) r[a] = v[a] * c + uxv[a] * s + u[a] * ud * (1 - c);
  return r;
}

}  // namespace detail

struct Mpr {
  Image image;       // rows: arc length, columns: offset along the normal
  bool clamped = false;  // some samples fell outside the volume extent
};

// Straight MPR: row i samples the curve at arc length i*step, column j at
// offset -width/2 + j*step along a twist-free (parallel-transported) normal.
// `normal_hint` seeds the initial normal; its component along the first
// segment is removed. A zero hint picks the axis least aligned with it.
inline Mpr straight_mpr(const Volume& v, const Centerline& c, double width, double step, Vec3 normal_hint = {0, 0, 0}) {
  if (!(step > 0) || !(width >= 0)) throw InvalidArgument("straight_mpr: step must be > 0 and width >= 0");
  const auto& pts = c.points();
  std::vector<Vec3> tangents;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) tangents.push_back(detail::unit(detail::sub(pts[i + 1], pts[i])));
  if (detail::dot(normal_hint, normal_hint) == 0) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < 3; ++a)
      if (std::abs(tangents[0][a]) < std::abs(tangents[0][best])) best = a;
    normal_hint[best] = 1;
  }
  Vec3 n = normal_hint;
  const double along = detail::dot(n, tangents[0]);
  for (std::size_t a = 0; a < 3; ++a) n[a] -= along * tangents[0][a];
  if (detail::dot(n, n) < 1e-18) throw InvalidArgument("straight_mpr: normal hint parallel to the centerline");
  std::vector<Vec3> normals{detail::unit(n)};
  for (std::size_t i = 1; i < tangents.size(); ++i)
    normals.push_back(detail::unit(detail::transport(normals.back(), tangents[i - 1], tangents[i])));

  const std::size_t rows = std::size_t(std::floor(c.length() / step + 1e-9)) + 1;
  const std::size_t cols = std::size_t(std::floor(width / step + 1e-9)) + 1;
  Mpr out{Image(rows, cols), false};
  for (std::size_t r = 0; r < rows; ++r) {
    const auto [seg, p] = c.locate(double(r) * step);
    for (std::size_t j = 0; j < cols; ++j) {
      const double off = -0.5 * width + double(j) * step;
      Vec3 q{};
      for (std::size_t a = 0; a < 3; ++a) {
        q[a] = p[a] + off * normals[seg][a];
        const double idx = (q[a] - v.origin()[a]) / v.spacing()[a];
        if (idx < -1e-9 || idx > double(v.dim(a) - 1) + 1e-9) out.clamped = true;
      }
      out.image.at(r, j) = static_cast<float>(sample_trilinear(v, q));
    }
  }
  return out;
}

// Mean absolute second difference down each column, i.e. from one
// arc-length row to the next.
inline double along_curve_roughness(const Image& mpr) {
  if (mpr.rows < 3) throw InvalidArgument("roughness needs at least 3 MPR rows");
  double acc = 0;
  for (std::size_t r = 1; r + 1 < mpr.rows; ++r)
    for (std::size_t c = 0; c < mpr.cols; ++c) {
      const double d = double(mpr.at(r - 1, c)) - 2.0 * mpr.at(r, c) + mpr.at(r + 1, c);
      acc += std::abs(d);
    }
  return acc / double((mpr.rows - 2) * mpr.cols);
}

}  // namespace isoplane::analysis
