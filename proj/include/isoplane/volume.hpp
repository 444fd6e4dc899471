#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isoplane/error.hpp"

namespace isoplane {

using Dims = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;

// Anatomical planes, each bound to the volume axis it slices through.
enum class Plane { Coronal = 0, Axial = 1, Sagittal = 2 };

constexpr std::size_t axis_of(Plane p) { return static_cast<std::size_t>(p); }

constexpr Plane plane_of_axis(std::size_t axis) {
  return axis == 0 ? Plane::Coronal : axis == 1 ? Plane::Axial : Plane::Sagittal;
}

constexpr std::string_view plane_name(Plane p) {
  switch (p) {
    case Plane::Coronal: return "coronal";
    case Plane::Axial: return "axial";
    case Plane::Sagittal: return "sagittal";
  }
  return "?";
}

inline Plane parse_plane(std::string_view s) {
  if (s == "coronal" || s == "cor") return Plane::Coronal;
  if (s == "axial" || s == "ax") return Plane::Axial;
  if (s == "sagittal" || s == "sag") return Plane::Sagittal;
  throw InvalidArgument("unknown plane '" + std::string(s) + "'");
}

// Row-major 2D image.
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }

  Image transposed() const {
    Image t(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) t.at(c, r) = at(r, c);
    return t;
  }
};

// Scalar volume on a regular grid. Axis 0 indexes coronal slices, axis 1 axial
// slices, axis 2 sagittal slices. Voxel (i0,i1,i2) is centred at
// origin + index * spacing (mm); storage is axis-0-major.
class Volume {
 public:
  Volume() = default;

  Volume(Dims dims, Vec3 spacing, Vec3 origin = {0, 0, 0}, float fill = 0.0f)
      : dims_(dims), spacing_(spacing), origin_(origin) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (dims[a] == 0) throw InvalidArgument("volume dims must be >= 1 (axis " + std::to_string(a) + ")");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw InvalidArgument("volume spacing must be finite and > 0 (axis " + std::to_string(a) + ")");
      if (!std::isfinite(origin[a])) throw InvalidArgument("volume origin must be finite");
    }
    data_.assign(dims[0] * dims[1] * dims[2], fill);
  }

  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_[axis]; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t voxel_count() const { return data_.size(); }

  bool normalized() const { return normalized_; }
  void set_normalized(bool n) { normalized_ = n; }
  void set_origin(Vec3 o) { origin_ = o; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::size_t index(std::size_t i0, std::size_t i1, std::size_t i2) const {
    return (i0 * dims_[1] + i1) * dims_[2] + i2;
  }
  float& at(std::size_t i0, std::size_t i1, std::size_t i2) { return data_[index(i0, i1, i2)]; }
  float at(std::size_t i0, std::size_t i1, std::size_t i2) const { return data_[index(i0, i1, i2)]; }

  // Physical position (mm) of a voxel centre along one axis.
  double position(std::size_t axis, double index) const { return origin_[axis] + index * spacing_[axis]; }

  bool is_cubic() const { return dims_[0] == dims_[1] && dims_[1] == dims_[2]; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_{0, 0, 0};
  Vec3 spacing_{1, 1, 1};
  Vec3 origin_{0, 0, 0};
  bool normalized_ = false;
  std::vector<float> data_;
};

inline constexpr float kBackground = -1.0f;

// Extract the 2D image obtained by fixing the plane's axis at `index`.
// Coronal -> (axis1, axis2), axial -> (axis0, axis2), sagittal -> (axis0, axis1).
inline Image slice(const Volume& v, Plane plane, std::size_t index) {
  const auto axis = axis_of(plane);
  if (index >= v.dim(axis))
    throw IndexError("slice index " + std::to_string(index) + " out of range for " + std::string(plane_name(plane)) +
                     " axis of size " + std::to_string(v.dim(axis)));
  const auto& d = v.dims();
  switch (plane) {
    case Plane::Coronal: {
      Image img(d[1], d[2]);
      const auto src = v.data().subspan(v.index(index, 0, 0), d[1] * d[2]);
      std::copy(src.begin(), src.end(), img.data.begin());
      return img;
    }
    case Plane::Axial: {
      Image img(d[0], d[2]);
      for (std::size_t i = 0; i < d[0]; ++i)
        for (std::size_t k = 0; k < d[2]; ++k) img.at(i, k) = v.at(i, index, k);
      return img;
    }
    case Plane::Sagittal: {
      Image img(d[0], d[1]);
      for (std::size_t i = 0; i < d[0]; ++i)
        for (std::size_t j = 0; j < d[1]; ++j) img.at(i, j) = v.at(i, j, index);
      return img;
    }
  }
  return {};
}

// Writes `img` back into the given slice position; inverse of slice().
inline void set_slice(Volume& v, Plane plane, std::size_t index, const Image& img) {
  const auto axis = axis_of(plane);
  if (index >= v.dim(axis)) throw IndexError("slice index out of range");
  const auto& d = v.dims();
  const std::size_t rows = plane == Plane::Coronal ? d[1] : d[0];
  const std::size_t cols = plane == Plane::Sagittal ? d[1] : d[2];
  if (img.rows != rows || img.cols != cols) throw ShapeError("slice image shape does not match volume");
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      switch (plane) {
        case Plane::Coronal: v.at(index, r, c) = img.at(r, c); break;
        case Plane::Axial: v.at(r, index, c) = img.at(r, c); break;
        case Plane::Sagittal: v.at(r, c, index) = img.at(r, c); break;
      }
    }
}

// Copy of the sub-block [start, start+size) per axis; origin moves with it.
inline Volume crop(const Volume& v, Dims start, Dims size) {
  for (std::size_t a = 0; a < 3; ++a)
    if (start[a] + size[a] > v.dim(a)) throw InvalidArgument("crop window exceeds volume on axis " + std::to_string(a));
  Vec3 origin;
  for (std::size_t a = 0; a < 3; ++a) origin[a] = v.position(a, static_cast<double>(start[a]));
  Volume out(size, v.spacing(), origin);
  out.set_normalized(v.normalized());
  for (std::size_t i = 0; i < size[0]; ++i)
    for (std::size_t j = 0; j < size[1]; ++j) {
      const auto src = v.data().subspan(v.index(start[0] + i, start[1] + j, start[2]), size[2]);
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(out.index(i, j, 0)));
    }
  return out;
}

// Embeds v into a volume of `dims`, placing v's voxel (0,0,0) at `before`.
inline Volume pad(const Volume& v, Dims dims, Dims before, float value = kBackground) {
  for (std::size_t a = 0; a < 3; ++a)
    if (before[a] + v.dim(a) > dims[a]) throw InvalidArgument("padding target smaller than volume on axis " + std::to_string(a));
  Vec3 origin;
  for (std::size_t a = 0; a < 3; ++a) origin[a] = v.position(a, -static_cast<double>(before[a]));
  Volume out(dims, v.spacing(), origin, value);
  out.set_normalized(v.normalized());
  const auto& d = v.dims();
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j) {
      const auto src = v.data().subspan(v.index(i, j, 0), d[2]);
      std::copy(src.begin(), src.end(),
                out.data().begin() + static_cast<std::ptrdiff_t>(out.index(before[0] + i, before[1] + j, before[2])));
    }
  return out;
}

struct CubePadding {
  Dims before;
  Dims after;
};

// Per axis floor((side-dim)/2) empty slices before and the remainder after.
inline CubePadding cube_padding(const Dims& dims, std::size_t side) {
  CubePadding p{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (dims[a] > side)
      throw InvalidArgument("pad_to_cube: axis " + std::to_string(a) + " has " + std::to_string(dims[a]) +
                            " voxels, more than side " + std::to_string(side));
    p.before[a] = (side - dims[a]) / 2;
    p.after[a] = side - dims[a] - p.before[a];
  }
  return p;
}

// Centre v in a side^3 cube of background.
inline Volume pad_to_cube(const Volume& v, std::size_t side) {
  return pad(v, {side, side, side}, cube_padding(v.dims(), side).before);
}

// Per-volume min-max mapping to [-1, 1]. A constant volume maps to 0.
inline Volume normalize_minmax(const Volume& v) {
  Volume out = v;
  const auto [lo_it, hi_it] = std::minmax_element(v.data().begin(), v.data().end());
  const double lo = *lo_it, hi = *hi_it;
  for (auto& x : out.data()) x = hi > lo ? static_cast<float>(2.0 * (x - lo) / (hi - lo) - 1.0) : 0.0f;
  out.set_normalized(true);
  return out;
}

// Continuous trilinear sample at a physical position (mm). Positions beyond
// the sample extent clamp to the nearest boundary sample.
inline double sample_trilinear(const Volume& v, const Vec3& p) {
  std::array<std::size_t, 3> lo{};
  std::array<double, 3> frac{};
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t n = v.dim(a);
    double x = (p[a] - v.origin()[a]) / v.spacing()[a];
    x = std::clamp(x, 0.0, static_cast<double>(n - 1));
    std::size_t i = static_cast<std::size_t>(std::floor(x));
    if (n == 1) {
      lo[a] = 0;
      frac[a] = 0.0;
      continue;
    }
    if (i >= n - 1) i = n - 2;
    lo[a] = i;
    frac[a] = x - static_cast<double>(i);
  }
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    double w = 1.0;
    std::array<std::size_t, 3> idx{};
    for (std::size_t a = 0; a < 3; ++a) {
      const bool hi = (c >> a) & 1;
      if (hi && v.dim(a) == 1) {
        w = 0.0;
        break;
      }
      idx[a] = lo[a] + (hi ? 1 : 0);
      w *= hi ? frac[a] : 1.0 - frac[a];
    }
    if (w != 0.0) acc += w * v.at(idx[0], idx[1], idx[2]);
  }
  return acc;
}

// Trilinear resampling onto an arbitrary regular grid.
inline Volume resample_to_grid(const Volume& v, Dims dims, Vec3 spacing, Vec3 origin) {
  Volume out(dims, spacing, origin);
  out.set_normalized(v.normalized());
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k) {
        const Vec3 p{out.position(0, double(i)), out.position(1, double(j)), out.position(2, double(k))};
        out.at(i, j, k) = static_cast<float>(sample_trilinear(v, p));
      }
  return out;
}

// Samples `src` at the voxel centres of `grid`. Centres outside src's
// physical box (each voxel owning one spacing interval) get `fill`.
inline Volume align_to(const Volume& src, const Volume& grid, float fill = kBackground) {
  Volume out(grid.dims(), grid.spacing(), grid.origin(), fill);
  out.set_normalized(src.normalized());
  std::array<double, 3> lo{}, hi{};
  for (std::size_t a = 0; a < 3; ++a) {
    lo[a] = src.position(a, -0.5) - 1e-9;
    hi[a] = src.position(a, double(src.dim(a)) - 0.5) + 1e-9;
  }
  for (std::size_t i = 0; i < grid.dim(0); ++i)
    for (std::size_t j = 0; j < grid.dim(1); ++j)
      for (std::size_t k = 0; k < grid.dim(2); ++k) {
        const Vec3 p{grid.position(0, double(i)), grid.position(1, double(j)), grid.position(2, double(k))};
        bool inside = true;
        for (std::size_t a = 0; a < 3; ++a) inside = inside && p[a] >= lo[a] && p[a] <= hi[a];
        if (inside) out.at(i, j, k) = static_cast<float>(sample_trilinear(src, p));
      }
  return out;
}

// Grid covering the same physical box as v (each voxel owning one spacing
// interval around its centre) at isotropic spacing t.
struct GridSpec {
  Dims dims;
  Vec3 spacing;
  Vec3 origin;
};

inline GridSpec isotropic_grid(const Volume& v, double t) {
  GridSpec g{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double extent = static_cast<double>(v.dim(a)) * v.spacing()[a];
    g.dims[a] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(extent / t - 1e-9)));
    g.spacing[a] = t;
    g.origin[a] = v.origin()[a] - 0.5 * v.spacing()[a] + 0.5 * t;
  }
  return g;
}

// Linear interpolation of v onto an isotropic grid of spacing t (upsampling only).
inline Volume resample_isotropic(const Volume& v, double target_spacing) {
  if (!(target_spacing > 0.0) || !std::isfinite(target_spacing))
    throw InvalidArgument("resample_isotropic: target spacing must be > 0");
  const double min_spacing = std::min({v.spacing()[0], v.spacing()[1], v.spacing()[2]});
  if (target_spacing > min_spacing * (1.0 + 1e-12))
    throw InvalidArgument("resample_isotropic: target spacing " + std::to_string(target_spacing) +
                          " mm exceeds smallest input spacing " + std::to_string(min_spacing) + " mm");
  const auto g = isotropic_grid(v, target_spacing);
  return resample_to_grid(v, g.dims, g.spacing, g.origin);
}

}  // namespace isoplane
