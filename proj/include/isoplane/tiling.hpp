#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "isoplane/error.hpp"
#include "isoplane/volume.hpp"

namespace isoplane {

// Window starts along one axis: 0, stride, 2*stride, ... with the last window
// pulled back to dim - size so no window leaves the volume.
inline std::vector<std::size_t> window_starts(std::size_t dim, std::size_t size, std::size_t stride) {
  if (size == 0 || stride == 0) throw InvalidArgument("window size and stride must be positive");
  if (size > dim)
    throw InvalidArgument("window of " + std::to_string(size) + " does not fit axis of " + std::to_string(dim));
  std::vector<std::size_t> starts;
  std::size_t s = 0;
  for (;;) {
    starts.push_back(s);
    if (s + size >= dim) break;
    s += stride;
    if (s + size > dim) {
      starts.push_back(dim - size);
      break;
    }
  }
  return starts;
}

// Round-half-up of fraction * patch size.
inline std::size_t overlap_voxels(std::size_t patch_size, double overlap_fraction) {
  if (!(overlap_fraction >= 0.0) || overlap_fraction >= 1.0)
    throw InvalidArgument("overlap fraction must lie in [0, 1)");
  return static_cast<std::size_t>(std::floor(overlap_fraction * static_cast<double>(patch_size) + 0.5));
}

enum class StitchWeighting { Uniform, Cosine };

struct PatchGrid {
  std::size_t patch_size = 64;
  double overlap_fraction = 0.08;
  std::size_t overlap = 5;
  std::size_t stride = 59;
  std::array<std::vector<std::size_t>, 3> starts;
  Dims volume_dims{};

  std::size_t windows_along(std::size_t axis) const { return starts[axis].size(); }
  std::size_t patch_count() const { return starts[0].size() * starts[1].size() * starts[2].size(); }

  // Window corner for linear patch index (axis-0-major enumeration).
  Dims window(std::size_t p) const {
    const std::size_t n1 = starts[1].size(), n2 = starts[2].size();
    return {starts[0][p / (n1 * n2)], starts[1][(p / n2) % n1], starts[2][p % n2]};
  }
};

inline PatchGrid plan(Dims volume_dims, std::size_t patch_size = 64, double overlap_fraction = 0.08) {
  PatchGrid g;
  g.patch_size = patch_size;
  g.overlap_fraction = overlap_fraction;
  g.overlap = overlap_voxels(patch_size, overlap_fraction);
  if (g.overlap >= patch_size) throw InvalidArgument("overlap must be smaller than the patch");
  g.stride = patch_size - g.overlap;
  g.volume_dims = volume_dims;
  for (std::size_t a = 0; a < 3; ++a) {
    if (patch_size > volume_dims[a])
      throw InvalidArgument("patch of " + std::to_string(patch_size) + " larger than volume axis " + std::to_string(a) +
                            " (" + std::to_string(volume_dims[a]) + ")");
    g.starts[a] = window_starts(volume_dims[a], patch_size, g.stride);
  }
  return g;
}

inline std::vector<Volume> extract(const Volume& v, const PatchGrid& grid) {
  if (v.dims() != grid.volume_dims) throw InvalidArgument("extract: volume dims do not match the grid");
  std::vector<Volume> patches;
  patches.reserve(grid.patch_count());
  const std::size_t p = grid.patch_size;
  for (std::size_t i = 0; i < grid.patch_count(); ++i) patches.push_back(crop(v, grid.window(i), {p, p, p}));
  return patches;
}

namespace detail {

inline std::vector<double> stitch_profile(std::size_t n, StitchWeighting w) {
  std::vector<double> prof(n, 1.0);
  if (w == StitchWeighting::Cosine)
    for (std::size_t i = 0; i < n; ++i)
      prof[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n)) +
                1e-3;  // keeps window borders covered
  return prof;
}

}  // namespace detail

// Weighted average of all covering patches at every voxel. With uniform
// weights, stitch(extract(v)) reproduces v exactly.
inline Volume stitch(const std::vector<Volume>& patches, const PatchGrid& grid, Vec3 spacing = {1, 1, 1},
                     Vec3 origin = {0, 0, 0}, StitchWeighting weighting = StitchWeighting::Uniform) {
  if (patches.size() != grid.patch_count())
    throw InvalidArgument("stitch: got " + std::to_string(patches.size()) + " patches, grid has " +
                          std::to_string(grid.patch_count()));
  const auto& d = grid.volume_dims;
  const std::size_t p = grid.patch_size;
  std::vector<double> acc(d[0] * d[1] * d[2], 0.0), wsum(acc.size(), 0.0);
  const auto prof = detail::stitch_profile(p, weighting);
  for (std::size_t n = 0; n < patches.size(); ++n) {
    const auto& patch = patches[n];
    if (patch.dims() != Dims{p, p, p}) throw InvalidArgument("stitch: patch " + std::to_string(n) + " has wrong shape");
    const auto w0 = grid.window(n);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < p; ++k) {
          const double w = prof[i] * prof[j] * prof[k];
          const std::size_t o = ((w0[0] + i) * d[1] + (w0[1] + j)) * d[2] + (w0[2] + k);
          acc[o] += w * patch.at(i, j, k);
          wsum[o] += w;
        }
  }
  Volume out(d, spacing, origin);
  auto data = out.data();
  for (std::size_t o = 0; o < acc.size(); ++o) data[o] = static_cast<float>(acc[o] / wsum[o]);
  return out;
}

// The k-th image is the cubic patch sliced at index k along the plane's axis.
inline std::vector<Image> decompose_planes(const Volume& patch, Plane plane) {
  if (!patch.is_cubic()) throw InvalidArgument("decompose_planes: patch must be cubic");
  std::vector<Image> out;
  out.reserve(patch.dim(axis_of(plane)));
  for (std::size_t k = 0; k < patch.dim(axis_of(plane)); ++k) out.push_back(slice(patch, plane, k));
  return out;
}

struct Tile {
  std::size_t row = 0;
  std::size_t col = 0;
  Image image;
};

// Overlapping square tiles with the final start on each axis clamped to dim - tile.
inline std::vector<Tile> metric_tiles(const Image& img, std::size_t tile = 96, std::size_t stride = 32) {
  if (img.rows < tile || img.cols < tile)
    throw InvalidArgument("metric_tiles: image " + std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                          " smaller than tile " + std::to_string(tile));
  std::vector<Tile> tiles;
  for (const auto r : window_starts(img.rows, tile, stride))
    for (const auto c : window_starts(img.cols, tile, stride)) {
      Tile t{r, c, Image(tile, tile)};
      for (std::size_t i = 0; i < tile; ++i)
        for (std::size_t j = 0; j < tile; ++j) t.image.at(i, j) = img.at(r + i, c + j);
      tiles.push_back(std::move(t));
    }
  return tiles;
}

}  // namespace isoplane
