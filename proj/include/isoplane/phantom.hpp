#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "isoplane/error.hpp"
#include "isoplane/parallel.hpp"
#include "isoplane/random.hpp"
#include "isoplane/volume.hpp"

namespace isoplane::phantom {

enum class Shape { Ellipsoid, Tube };

// Ellipsoid: axis-aligned, `radii` per axis.
// Tube: capsule of radius radii[0] around the segment center +- half_length * axis,
//       half_length = radii[1].
struct Primitive {
  Shape shape = Shape::Ellipsoid;
  Vec3 center{0, 0, 0};
  Vec3 radii{1, 1, 1};
  Vec3 axis{1, 0, 0};
  double intensity = 1.0;
  double softness = 2.0;  // mm, full width of the smoothstep edge
};

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Approximate signed distance (mm) to the primitive surface, negative inside.
inline double signed_distance(const Primitive& p, const Vec3& x) {
  const Vec3 d{x[0] - p.center[0], x[1] - p.center[1], x[2] - p.center[2]};
  if (p.shape == Shape::Ellipsoid) {
    double q = 0.0;
    for (std::size_t a = 0; a < 3; ++a) q += (d[a] / p.radii[a]) * (d[a] / p.radii[a]);
    return (std::sqrt(q) - 1.0) * std::min({p.radii[0], p.radii[1], p.radii[2]});
  }
  const double t = std::clamp(dot(d, p.axis), -p.radii[1], p.radii[1]);
  const Vec3 r{d[0] - t * p.axis[0], d[1] - t * p.axis[1], d[2] - t * p.axis[2]};
  return norm(r) - p.radii[0];
}

inline double membership(const Primitive& p, const Vec3& x) {
  const double sd = signed_distance(p, x);
  if (p.softness <= 0.0) return sd <= 0.0 ? 1.0 : 0.0;
  return 1.0 - smoothstep((sd + 0.5 * p.softness) / p.softness);
}

// Analytic scene; primitives are composited in order over the background.
struct Scene {
  std::vector<Primitive> primitives;
  double background = 0.0;
  std::uint64_t seed = 0;

  double evaluate(const Vec3& x) const {
    double v = background;
    for (const auto& p : primitives) {
      const double m = membership(p, x);
      if (m > 0.0) v += m * (p.intensity - v);
    }
    return v;
  }

  Scene scaled(double alpha) const {
    Scene s = *this;
    s.background *= alpha;
    for (auto& p : s.primitives) p.intensity *= alpha;
    return s;
  }
};

inline void validate(const Scene& s) {
  if (!std::isfinite(s.background)) throw InvalidArgument("scene background must be finite");
  for (const auto& p : s.primitives) {
    if (!std::isfinite(p.intensity)) throw InvalidArgument("primitive intensity must be finite");
    const std::size_t n = p.shape == Shape::Ellipsoid ? 3 : 2;
    for (std::size_t a = 0; a < n; ++a)
      if (!(p.radii[a] > 0.0)) throw InvalidArgument("primitive radii must be > 0");
    if (p.shape == Shape::Tube && std::abs(norm(p.axis) - 1.0) > 1e-9)
      throw InvalidArgument("tube axis must be a unit vector");
  }
}

// Random unit vector whose angle to axis 0 lies in [min_deg, max_deg].
inline Vec3 random_direction(Rng& rng, double min_deg, double max_deg) {
  const double theta = rng.uniform(min_deg, max_deg) * std::numbers::pi / 180.0;
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {std::cos(theta), std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi)};
}

// Abdomen-like scene inside a cubic field of view [0, fov]^3: a soft body
// envelope, bright organs of several sizes and a few tubes drawn last. The
// first tube is steered between 30 and 60 degrees from axis 0 so it crosses
// many through-plane slices.
inline Scene random_scene(std::uint64_t seed, double fov = 96.0) {
  Rng rng(derive_seed(seed, 0x5ce7e));
  Scene s;
  s.seed = seed;
  s.background = 0.0;
  const double c = 0.5 * fov;
  Primitive body;
  body.center = {c + rng.uniform(-2, 2), c + rng.uniform(-2, 2), c + rng.uniform(-2, 2)};
  body.radii = {fov * rng.uniform(0.40, 0.46), fov * rng.uniform(0.40, 0.46), fov * rng.uniform(0.40, 0.46)};
  body.intensity = rng.uniform(0.15, 0.25);
  s.primitives.push_back(body);

  const int organs = 10 + static_cast<int>(rng.below(5));
  for (int i = 0; i < organs; ++i) {
    Primitive p;
    const double r = rng.uniform(3.0, 12.0);
    p.radii = {r * rng.uniform(0.6, 1.4), r * rng.uniform(0.6, 1.4), r * rng.uniform(0.6, 1.4)};
    for (std::size_t a = 0; a < 3; ++a) p.center[a] = c + rng.uniform(-0.3, 0.3) * fov;
    p.intensity = rng.uniform(0.35, 1.0);
    s.primitives.push_back(p);
  }

  const int tubes = 3;
  for (int i = 0; i < tubes; ++i) {
    Primitive t;
    t.shape = Shape::Tube;
    t.axis = i == 0 ? random_direction(rng, 30.0, 60.0) : random_direction(rng, 0.0, 90.0);
    const double radius = i == 0 ? rng.uniform(2.5, 3.5) : rng.uniform(1.5, 3.5);
    const double half = i == 0 ? rng.uniform(22.0, 28.0) : rng.uniform(10.0, 25.0);
    t.radii = {radius, half, 0.0};
    const double spread = i == 0 ? 0.08 : 0.25;
    for (std::size_t a = 0; a < 3; ++a) t.center[a] = c + rng.uniform(-spread, spread) * fov;
    t.intensity = i == 0 ? rng.uniform(0.8, 0.95) : rng.uniform(0.5, 1.0);
    s.primitives.push_back(t);
  }
  return s;
}

// The steered tube of random_scene.
inline const Primitive& main_tube(const Scene& s) {
  for (const auto& p : s.primitives)
    if (p.shape == Shape::Tube) return p;
  throw InvalidArgument("scene has no tube");
}

struct AcquisitionSpec {
  Plane through_plane = Plane::Coronal;
  double slice_spacing = 5.0;
  double slice_thickness = 5.0;
  double in_plane_spacing = 1.0;
  Vec3 rigid_shift{0, 0, 0};
  Vec3 fov{96, 96, 96};
  std::size_t quadrature = 16;  // samples across each slab
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

inline void validate(const AcquisitionSpec& a) {
  if (!(a.slice_spacing > 0) || !(a.slice_thickness > 0) || !(a.in_plane_spacing > 0))
    throw InvalidArgument("acquisition spacings and thickness must be > 0");
  if (a.slice_thickness > a.slice_spacing * (1.0 + 1e-12))
    throw InvalidArgument("slice thickness exceeds slice spacing (slabs would overlap)");
  if (a.quadrature < 8) throw InvalidArgument("slab quadrature needs at least 8 samples");
  for (double f : a.fov)
    if (!(f > 0)) throw InvalidArgument("field of view must be non-empty");
}

inline std::size_t cells(double fov, double spacing) {
  return static_cast<std::size_t>(std::floor(fov / spacing + 1e-9));
}

// Point-sampled render of the scene; voxel centres at (j + 0.5) * spacing.
inline Volume render_isotropic(const Scene& scene, double spacing, Vec3 fov = {96, 96, 96}) {
  if (!(spacing > 0)) throw InvalidArgument("render spacing must be > 0");
  validate(scene);
  Dims dims{};
  for (std::size_t a = 0; a < 3; ++a) {
    dims[a] = cells(fov[a], spacing);
    if (dims[a] == 0) throw InvalidArgument("empty field of view");
  }
  Volume v(dims, {spacing, spacing, spacing}, {0.5 * spacing, 0.5 * spacing, 0.5 * spacing});
  parallel_for(dims[0], [&](std::size_t i) {
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k)
        v.at(i, j, k) = static_cast<float>(scene.evaluate({v.position(0, double(i)), v.position(1, double(j)), v.position(2, double(k))}));
  });
  return v;
}

// Simulated 2D multi-slice acquisition of any field exposing
// evaluate(Vec3): each slice is the mean of the (shifted) field over a box
// slab centred on the slice position, sampled at the in-plane spacing.
template <class Field>
Volume acquire_field(const Field& field, const AcquisitionSpec& spec) {
  validate(spec);
  const std::size_t through = axis_of(spec.through_plane);
  Dims dims{};
  Vec3 spacing{};
  for (std::size_t a = 0; a < 3; ++a) {
    spacing[a] = a == through ? spec.slice_spacing : spec.in_plane_spacing;
    dims[a] = cells(spec.fov[a], spacing[a]);
    if (dims[a] == 0) throw InvalidArgument("field of view smaller than one slice");
  }
  Volume v(dims, spacing, {0.5 * spacing[0], 0.5 * spacing[1], 0.5 * spacing[2]});
  const std::size_t q = spec.quadrature;
  std::vector<double> offsets(q);
  for (std::size_t s = 0; s < q; ++s)
    offsets[s] = ((static_cast<double>(s) + 0.5) / static_cast<double>(q) - 0.5) * spec.slice_thickness;

  parallel_for(dims[0], [&](std::size_t i) {
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k) {
        Vec3 p{v.position(0, double(i)) - spec.rigid_shift[0], v.position(1, double(j)) - spec.rigid_shift[1],
               v.position(2, double(k)) - spec.rigid_shift[2]};
        const double centre = p[through];
        double acc = 0.0;
        for (double off : offsets) {
          p[through] = centre + off;
          acc += field.evaluate(p);
        }
        v.at(i, j, k) = static_cast<float>(acc / static_cast<double>(q));
      }
  });
  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.noise_seed);
    for (auto& x : v.data()) x = static_cast<float>(x + spec.noise_sigma * rng.normal());
  }
  return v;
}

inline Volume acquire(const Scene& scene, const AcquisitionSpec& spec) {
  validate(spec);
  validate(scene);
  return acquire_field(scene, spec);
}

// Phantom intensities live in [0, 1]; this fixed map to [-1, 1] keeps ground
// truth and acquisitions of one scene on a common scale.
inline Volume to_normalized(const Volume& v) {
  Volume out = v;
  for (auto& x : out.data()) x = std::clamp(2.0f * x - 1.0f, -1.0f, 1.0f);
  out.set_normalized(true);
  return out;
}

struct PairedCase {
  Volume coronal;
  Volume axial;
  Volume ground_truth;
};

inline PairedCase make_paired_case(const Scene& scene, const AcquisitionSpec& coronal_spec,
                                   const AcquisitionSpec& axial_spec) {
  if (coronal_spec.through_plane == axial_spec.through_plane)
    throw InvalidArgument("paired acquisitions need orthogonal through-planes");
  return {acquire(scene, coronal_spec), acquire(scene, axial_spec),
          render_isotropic(scene, coronal_spec.in_plane_spacing, coronal_spec.fov)};
}

// Desk-profile acquisition pair: 5 mm coronal and axial slabs over a 1 mm
// in-plane grid, with an optional inter-sequence shift on the axial series.
inline std::pair<AcquisitionSpec, AcquisitionSpec> default_specs(double fov = 96.0, double in_plane = 1.0,
                                                                 double slice = 5.0, Vec3 axial_shift = {0, 0, 0}) {
  AcquisitionSpec cor;
  cor.through_plane = Plane::Coronal;
  cor.slice_spacing = cor.slice_thickness = slice;
  cor.in_plane_spacing = in_plane;
  cor.fov = {fov, fov, fov};
  AcquisitionSpec ax = cor;
  ax.through_plane = Plane::Axial;
  ax.rigid_shift = axial_shift;
  return {cor, ax};
}

}  // namespace isoplane::phantom
