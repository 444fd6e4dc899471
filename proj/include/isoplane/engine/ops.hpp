#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "isoplane/engine/tensor.hpp"
#include "isoplane/error.hpp"
#include "isoplane/random.hpp"

namespace isoplane::engine {

namespace detail {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
}

// Elementwise unary op given f(x) and f'(x, f(x)).
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  std::vector<T> out(x.numel());
  const auto& in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [df](Node<T>& self) {
    auto& src = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) src.grad[i] += self.grad[i] * df(src.value[i], self.value[i]);
  });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
    if (y.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) y.grad[i] -= self.grad[i];
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * y.value[i];
    if (y.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) y.grad[i] += self.grad[i] * x.value[i];
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// d|x|/dx taken as 0 at x = 0.
template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : v < T(0) ? T(-1) : T(0); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return detail::unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  return make_result<T>({1}, {static_cast<T>(acc)}, {x.node()}, [](Node<T>& self) {
    auto& src = *self.inputs[0];
    for (auto& g : src.grad) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw InvalidArgument("mean of an empty tensor");
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  const double n = static_cast<double>(x.numel());
  return make_result<T>({1}, {static_cast<T>(acc / n)}, {x.node()}, [n](Node<T>& self) {
    auto& src = *self.inputs[0];
    const T g = static_cast<T>(self.grad[0] / n);
    for (auto& v : src.grad) v += g;
  });
}

// mean((x - target)^2), fused.
template <class T>
Tensor<T> mean_squared_to(const Tensor<T>& x, T target) {
  if (x.numel() == 0) throw InvalidArgument("mean_squared_to on an empty tensor");
  double acc = 0.0;
  for (T v : x.values()) acc += (static_cast<double>(v) - target) * (static_cast<double>(v) - target);
  const double n = static_cast<double>(x.numel());
  return make_result<T>({1}, {static_cast<T>(acc / n)}, {x.node()}, [n, target](Node<T>& self) {
    auto& src = *self.inputs[0];
    const double g = self.grad[0] * 2.0 / n;
    for (std::size_t i = 0; i < src.value.size(); ++i) src.grad[i] += static_cast<T>(g * (src.value[i] - target));
  });
}

// mean |a - b|, fused; subgradient 0 where a == b.
template <class T>
Tensor<T> mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mean_abs_diff");
  if (a.numel() == 0) throw InvalidArgument("mean_abs_diff on an empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += std::abs(static_cast<double>(a.values()[i]) - b.values()[i]);
  const double n = static_cast<double>(a.numel());
  return make_result<T>({1}, {static_cast<T>(acc / n)}, {a.node(), b.node()}, [n](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    const T g = static_cast<T>(self.grad[0] / n);
    for (std::size_t i = 0; i < x.value.size(); ++i) {
      const T d = x.value[i] - y.value[i];
      const T s = d > T(0) ? g : d < T(0) ? -g : T(0);
      if (x.requires_grad) x.grad[i] += s;
      if (y.requires_grad) y.grad[i] -= s;
    }
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape) + " changes element count");
  return make_result<T>(std::move(shape), x.values(), {x.node()}, [](Node<T>& self) {
    auto& src = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) src.grad[i] += self.grad[i];
  });
}

namespace detail {

// Maps every output linear index of permute(x, perm) to its source index.
inline std::vector<std::size_t> permutation_map(const Shape& in, const std::vector<std::size_t>& perm) {
  const std::size_t r = in.size();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out(r);
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[perm[i]];
    strides[i] = in_strides[perm[i]];
  }
  std::vector<std::size_t> map(numel(in));
  std::vector<std::size_t> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < map.size(); ++o) {
    map[o] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      src += strides[d];
      if (counter[d] < out[d]) break;
      src -= strides[d] * out[d];
      counter[d] = 0;
    }
  }
  return map;
}

}  // namespace detail

// Axis permutation: output axis i is input axis perm[i].
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.rank()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> used(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || used[p]) throw ShapeError("permute: not a permutation");
    used[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.dim(perm[i]);
  auto map = detail::permutation_map(x.shape(), perm);
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = x.values()[map[o]];
  return make_result<T>(std::move(out_shape), std::move(out), {x.node()}, [map = std::move(map)](Node<T>& self) {
    auto& src = *self.inputs[0];
    for (std::size_t o = 0; o < self.grad.size(); ++o) src.grad[map[o]] += self.grad[o];
  });
}

// Concatenation along `axis`; all other extents must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw InvalidArgument("concat of nothing");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d)
      if (d != axis && p.dim(d) != ref[d])
        throw ShapeError("concat: shapes " + to_string(ref) + " and " + to_string(p.shape()) + " disagree off axis");
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = out_shape[axis] * inner;
  std::vector<T> out(numel(out_shape));
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
    offset += widths[k];
    inputs.push_back(parts[k].node());
  }
  return make_result<T>(std::move(out_shape), std::move(out), std::move(inputs),
                        [widths, outer, row](Node<T>& self) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                            auto& in = *self.inputs[k];
                            if (in.requires_grad)
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t i = 0; i < widths[k]; ++i)
                                  in.grad[o * widths[k] + i] += self.grad[o * row + offset + i];
                            offset += widths[k];
                          }
                        });
}

// Inverted dropout: survivors scaled by 1/(1-p); identity when not training.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0) || p >= 1.0) throw InvalidArgument("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : T(0);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [mask = std::move(mask)](Node<T>& self) {
    auto& src = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) src.grad[i] += self.grad[i] * mask[i];
  });
}

// Per (instance, channel) standardisation over the spatial extent, no affine
// parameters. Input layout [N, C, spatial...].
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, double epsilon = 1e-5) {
  if (x.rank() < 3) throw ShapeError("instance_norm expects [N, C, spatial...], got " + to_string(x.shape()));
  if (epsilon < 0.0) throw InvalidArgument("instance_norm epsilon must be >= 0");
  const std::size_t groups = x.dim(0) * x.dim(1);
  const std::size_t len = x.numel() / groups;
  if (len == 1 && epsilon == 0.0) throw InvalidArgument("instance_norm over a single element needs epsilon > 0");
  std::vector<T> out(x.numel());
  std::vector<T> inv_std(groups);
  const auto& in = x.values();
  for (std::size_t g = 0; g < groups; ++g) {
    const T* src = in.data() + g * len;
    double m = 0.0;
    for (std::size_t i = 0; i < len; ++i) m += src[i];
    m /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t i = 0; i < len; ++i) var += (src[i] - m) * (src[i] - m);
    var /= static_cast<double>(len);
    const double is = 1.0 / std::sqrt(var + epsilon);
    inv_std[g] = static_cast<T>(is);
    T* dst = out.data() + g * len;
    for (std::size_t i = 0; i < len; ++i) dst[i] = static_cast<T>((src[i] - m) * is);
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()},
                        [inv_std = std::move(inv_std), len, groups](Node<T>& self) {
                          auto& src = *self.inputs[0];
                          for (std::size_t g = 0; g < groups; ++g) {
                            const T* dy = self.grad.data() + g * len;
                            const T* y = self.value.data() + g * len;
                            double mdy = 0.0, mdyy = 0.0;
                            for (std::size_t i = 0; i < len; ++i) {
                              mdy += dy[i];
                              mdyy += static_cast<double>(dy[i]) * y[i];
                            }
                            mdy /= static_cast<double>(len);
                            mdyy /= static_cast<double>(len);
                            T* dx = src.grad.data() + g * len;
                            for (std::size_t i = 0; i < len; ++i)
                              dx[i] += static_cast<T>(inv_std[g] * (dy[i] - mdy - y[i] * mdyy));
                          }
                        });
}

}  // namespace isoplane::engine
