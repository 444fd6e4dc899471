#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "isoplane/engine.hpp"
#include "isoplane/random.hpp"
#include "isoplane/volume.hpp"

namespace isoplane::nets {

using engine::Tensor;

template <class T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

template <class T>
std::size_t parameter_count(const NamedParams<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p.numel();
  return n;
}

template <class T>
Tensor<T> init_weight(engine::Shape shape, Rng& rng, double stddev = 0.02) {
  auto w = Tensor<T>::zeros(std::move(shape), true);
  for (auto& x : w.data()) x = static_cast<T>(rng.normal(0.0, stddev));
  return w;
}

struct GeneratorConfig {
  std::size_t base_channels = 8;   // C; ladder 1 -> C -> 2C -> 4C -> 8C
  std::size_t depth = 4;           // number of stride-2 encoder levels
  double dropout = 0.5;
  std::size_t dropout_levels = 2;  // leading decoder levels with dropout
  bool residual = false;           // output = input + tanh(...), last layer zero-initialised
  std::uint64_t seed = 0;

  std::string describe() const {
    return "unet3d:C=" + std::to_string(base_channels) + ",depth=" + std::to_string(depth) +
           ",dropout=" + std::to_string(dropout) + "x" + std::to_string(dropout_levels) + (residual ? ",residual" : "");
  }
};

// 3D U-Net: encoder levels conv(k4 s2) + instance norm + LeakyReLU(0.2);
// decoder levels conv_transpose(k4 s2) + instance norm + ReLU (+ dropout on
// the first levels), each concatenated with the matching encoder output;
// the last decoder level maps to one channel followed by tanh. The residual
// variant adds that output to the input volume.
template <class T>
class Generator {
 public:
  explicit Generator(GeneratorConfig cfg = {}) : cfg_(cfg) {
    if (cfg.depth < 2 || cfg.base_channels == 0) throw InvalidArgument("generator needs depth >= 2 and C >= 1");
    Rng rng(derive_seed(cfg.seed, 0x6e));
    std::vector<std::size_t> enc_out;
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      const std::size_t cin = l == 0 ? 1 : enc_out.back();
      const std::size_t cout = cfg.base_channels << l;
      enc_.push_back({init_weight<T>({cout, cin, 4, 4, 4}, rng), Tensor<T>::zeros({cout}, true)});
      enc_out.push_back(cout);
    }
    for (std::size_t j = 0; j < cfg.depth; ++j) {
      const std::size_t cin = j == 0 ? enc_out.back() : 2 * enc_out[cfg.depth - 1 - j];
      const std::size_t cout = j + 1 < cfg.depth ? enc_out[cfg.depth - 2 - j] : 1;
      dec_.push_back({init_weight<T>({cin, cout, 4, 4, 4}, rng), Tensor<T>::zeros({cout}, true)});
    }
    if (cfg.residual)
      for (auto& w : dec_.back().weight.data()) w = T(0);
  }

  const GeneratorConfig& config() const { return cfg_; }
  std::size_t divisor() const { return std::size_t{1} << cfg_.depth; }

  // x: [N, 1, D, H, W] with every spatial extent divisible by 2^depth.
  Tensor<T> forward(const Tensor<T>& x, bool training = false, Rng* rng = nullptr) const {
    if (x.rank() != 5 || x.dim(1) != 1) throw ShapeError("generator expects [N,1,D,H,W], got " + engine::to_string(x.shape()));
    for (std::size_t a = 2; a < 5; ++a)
      if (x.dim(a) % divisor() != 0)
        throw ShapeError("generator input extent " + std::to_string(x.dim(a)) + " not divisible by " +
                         std::to_string(divisor()));
    if (training && cfg_.dropout > 0 && !rng) throw InvalidArgument("training forward needs an rng for dropout");
    std::vector<Tensor<T>> skips;
    Tensor<T> h = x;
    for (const auto& layer : enc_) {
      h = engine::leaky_relu(engine::instance_norm(engine::conv(h, layer.weight, layer.bias, 2, 1)), T(0.2));
      skips.push_back(h);
    }
    for (std::size_t j = 0; j < dec_.size(); ++j) {
      if (j > 0) h = engine::concat<T>({h, skips[cfg_.depth - 1 - j]}, 1);
      h = engine::conv_transpose(h, dec_[j].weight, dec_[j].bias, 2, 1);
      if (j + 1 == dec_.size()) return cfg_.residual ? engine::add(x, engine::tanh(h)) : engine::tanh(h);
      h = engine::relu(engine::instance_norm(h));
      if (j < cfg_.dropout_levels && training) h = engine::dropout(h, cfg_.dropout, true, *rng);
    }
    return h;
  }

  NamedParams<T> named_parameters() const {
    NamedParams<T> out;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      out.emplace_back("gen.enc" + std::to_string(l) + ".weight", enc_[l].weight);
      out.emplace_back("gen.enc" + std::to_string(l) + ".bias", enc_[l].bias);
    }
    for (std::size_t j = 0; j < dec_.size(); ++j) {
      out.emplace_back("gen.dec" + std::to_string(j) + ".weight", dec_[j].weight);
      out.emplace_back("gen.dec" + std::to_string(j) + ".bias", dec_[j].bias);
    }
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [n, p] : named_parameters()) out.push_back(p);
    return out;
  }

 private:
  struct Layer {
    Tensor<T> weight;
    Tensor<T> bias;
  };
  GeneratorConfig cfg_;
  std::vector<Layer> enc_;
  std::vector<Layer> dec_;
};

struct DiscriminatorConfig {
  Plane plane = Plane::Axial;
  std::vector<std::size_t> channels{16, 32, 64};  // stride-2 layers after the 2-channel input
  std::size_t final_stride = 2;
  std::uint64_t seed = 0;

  std::string describe() const {
    std::string s = "patchdisc2d:" + std::string(plane_name(plane)) + ":2";
    for (auto c : channels) s += "-" + std::to_string(c);
    return s + "-1,final_stride=" + std::to_string(final_stride);
  }

  // Desk profile (default) or paper profile ladders.
  static DiscriminatorConfig axial(bool paper_scale = false) {
    DiscriminatorConfig c;
    c.plane = Plane::Axial;
    c.channels = paper_scale ? std::vector<std::size_t>{64, 128, 256} : std::vector<std::size_t>{16, 32, 64};
    c.final_stride = 2;
    return c;
  }
  static DiscriminatorConfig coronal(bool paper_scale = false) {
    DiscriminatorConfig c;
    c.plane = Plane::Coronal;
    c.channels = paper_scale ? std::vector<std::size_t>{32, 64} : std::vector<std::size_t>{8, 16};
    c.final_stride = 1;
    return c;
  }
};

// Conditional 2D patch discriminator on a 2-channel (condition, candidate)
// input. Produces an unbounded score map (least-squares objective).
template <class T>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.channels.empty()) throw InvalidArgument("discriminator needs at least one layer");
    Rng rng(derive_seed(cfg_.seed, 0xd0 + axis_of(cfg_.plane)));
    std::size_t cin = 2;
    for (auto cout : cfg_.channels) {
      layers_.push_back({init_weight<T>({cout, cin, 4, 4}, rng), Tensor<T>::zeros({cout}, true)});
      cin = cout;
    }
    final_ = {init_weight<T>({1, cin, 4, 4}, rng), Tensor<T>::zeros({1}, true)};
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  Plane plane() const { return cfg_.plane; }

  // condition, candidate: [N, 1, H, W].
  Tensor<T> forward(const Tensor<T>& condition, const Tensor<T>& candidate) const {
    if (condition.shape() != candidate.shape())
      throw ShapeError("discriminator: condition " + engine::to_string(condition.shape()) + " and candidate " +
                       engine::to_string(candidate.shape()) + " differ");
    if (condition.rank() != 4 || condition.dim(1) != 1)
      throw ShapeError("discriminator expects [N,1,H,W] images, got " + engine::to_string(condition.shape()));
    Tensor<T> h = engine::concat<T>({condition, candidate}, 1);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = engine::conv(h, layers_[i].weight, layers_[i].bias, 2, 1);
      if (i > 0) h = engine::instance_norm(h);
      h = engine::leaky_relu(h, T(0.2));
    }
    return engine::conv(h, final_.weight, final_.bias, cfg_.final_stride, 1);
  }

  // Score map extent for a square input of side n.
  std::size_t output_side(std::size_t n) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) n = (n + 2 - 4) / 2 + 1;
    return (n + 2 - 4) / cfg_.final_stride + 1;
  }

  NamedParams<T> named_parameters() const {
    const std::string p = "disc_" + std::string(plane_name(cfg_.plane));
    NamedParams<T> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      out.emplace_back(p + ".conv" + std::to_string(i) + ".weight", layers_[i].weight);
      out.emplace_back(p + ".conv" + std::to_string(i) + ".bias", layers_[i].bias);
    }
    out.emplace_back(p + ".final.weight", final_.weight);
    out.emplace_back(p + ".final.bias", final_.bias);
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [n, p] : named_parameters()) out.push_back(p);
    return out;
  }

 private:
  struct Layer {
    Tensor<T> weight;
    Tensor<T> bias;
  };
  DiscriminatorConfig cfg_;
  std::vector<Layer> layers_;
  Layer final_;
};

// mean((D(x, G(x)) - 1)^2)
template <class T>
Tensor<T> lsgan_generator_loss(const Tensor<T>& fake_scores) {
  if (fake_scores.numel() == 0) throw InvalidArgument("lsgan_generator_loss: empty score map");
  return engine::mean_squared_to(fake_scores, T(1));
}

// 1/2 mean((D(x, y) - 1)^2) + 1/2 mean(D(x, G(x))^2)
template <class T>
Tensor<T> lsgan_discriminator_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
  if (real_scores.numel() == 0 || fake_scores.numel() == 0)
    throw InvalidArgument("lsgan_discriminator_loss: empty score map");
  return engine::scale(engine::add(engine::mean_squared_to(real_scores, T(1)), engine::mean_squared_to(fake_scores, T(0))),
                       T(0.5));
}

// lambda * mean |target - generated|
template <class T>
Tensor<T> l1_consistency(const Tensor<T>& generated, const Tensor<T>& target, double lambda = 10.0) {
  return engine::scale(engine::mean_abs_diff(target, generated), static_cast<T>(lambda));
}

// alpha * (adv_cor + l1_cor) + beta * (adv_ax + l1_ax). The l1 terms already
// carry their lambda weights. Undefined tensors (a plane switched off) count as 0.
template <class T>
Tensor<T> total_generator_loss(const Tensor<T>& adv_cor, const Tensor<T>& l1_cor, const Tensor<T>& adv_ax,
                               const Tensor<T>& l1_ax, double alpha = 0.5, double beta = 0.5) {
  Tensor<T> total;
  auto accumulate = [&](const Tensor<T>& term, double w) {
    if (!term.defined() || w == 0.0) return;
    auto scaled = engine::scale(term, static_cast<T>(w));
    total = total.defined() ? engine::add(total, scaled) : scaled;
  };
  accumulate(adv_cor, alpha);
  accumulate(l1_cor, alpha);
  accumulate(adv_ax, beta);
  accumulate(l1_ax, beta);
  if (!total.defined()) total = Tensor<T>::zeros({1});
  return total;
}

inline double total_generator_loss(double adv_cor, double l1_cor, double adv_ax, double l1_ax, double alpha = 0.5,
                                   double beta = 0.5) {
  return alpha * (adv_cor + l1_cor) + beta * (adv_ax + l1_ax);
}

// Volume stack [N,1,S,S,S] -> per-plane 2D batch [N*S,1,S,S]; image k of
// patch n is the patch sliced at index k along the plane's axis.
template <class T>
Tensor<T> plane_slices(const Tensor<T>& x, Plane plane) {
  if (x.rank() != 5 || x.dim(1) != 1) throw ShapeError("plane_slices expects [N,1,D,H,W]");
  const std::size_t n = x.dim(0), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  switch (plane) {
    case Plane::Coronal: return engine::reshape(x, {n * d, 1, h, w});
    case Plane::Axial: return engine::reshape(engine::permute(x, {0, 3, 1, 2, 4}), {n * h, 1, d, w});
    case Plane::Sagittal: return engine::reshape(engine::permute(x, {0, 4, 1, 2, 3}), {n * w, 1, d, h});
  }
  return x;
}

}  // namespace isoplane::nets
