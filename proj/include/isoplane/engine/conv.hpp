#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "isoplane/engine/tensor.hpp"
#include "isoplane/error.hpp"

namespace isoplane::engine {

// Convolution geometry in three spatial axes; 2D layers use a depth axis of
// extent 1 with kernel 1, stride 1, padding 0.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t channels = 0;  // channels of the "image" side (conv input)
  std::array<std::size_t, 3> in{1, 1, 1};
  std::array<std::size_t, 3> out{1, 1, 1};
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};

  std::size_t in_len() const { return in[0] * in[1] * in[2]; }
  std::size_t out_len() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_len() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t col_rows() const { return channels * kernel_len(); }
  std::size_t col_cols() const { return batch * out_len(); }
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

inline long in_index(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad) {
  return static_cast<long>(o * stride + k) - static_cast<long>(pad);
}

// x: [batch, channels, in...] -> col: [channels * kernel, batch * out].
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.col_cols(), olen = g.out_len(), ilen = g.in_len();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
      for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
          const std::size_t row = ((c * g.kernel[0] + kd) * g.kernel[1] + kh) * g.kernel[2] + kw;
          for (std::size_t n = 0; n < g.batch; ++n) {
            T* dst = col + row * cols + n * olen;
            const T* src = x + (n * g.channels + c) * ilen;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              const long id = in_index(od, kd, g.stride[0], g.pad[0]);
              T* drow = dst + od * g.out[1] * g.out[2];
              if (id < 0 || id >= static_cast<long>(g.in[0])) {
                std::fill_n(drow, g.out[1] * g.out[2], T(0));
                continue;
              }
              for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                const long ih = in_index(oh, kh, g.stride[1], g.pad[1]);
                T* d = drow + oh * g.out[2];
                if (ih < 0 || ih >= static_cast<long>(g.in[1])) {
                  std::fill_n(d, g.out[2], T(0));
                  continue;
                }
                const T* s = src + (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
                for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                  const long iw = in_index(ow, kw, g.stride[2], g.pad[2]);
                  d[ow] = (iw < 0 || iw >= static_cast<long>(g.in[2])) ? T(0) : s[iw];
                }
              }
            }
          }
        }
}

// Adjoint of im2col: accumulates col entries back into x.
template <class T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t cols = g.col_cols(), olen = g.out_len(), ilen = g.in_len();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
      for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
          const std::size_t row = ((c * g.kernel[0] + kd) * g.kernel[1] + kh) * g.kernel[2] + kw;
          for (std::size_t n = 0; n < g.batch; ++n) {
            const T* src = col + row * cols + n * olen;
            T* dst = x + (n * g.channels + c) * ilen;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              const long id = in_index(od, kd, g.stride[0], g.pad[0]);
              if (id < 0 || id >= static_cast<long>(g.in[0])) continue;
              for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                const long ih = in_index(oh, kh, g.stride[1], g.pad[1]);
                if (ih < 0 || ih >= static_cast<long>(g.in[1])) continue;
                const T* s = src + (od * g.out[1] + oh) * g.out[2];
                T* d = dst + (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
                for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                  const long iw = in_index(ow, kw, g.stride[2], g.pad[2]);
                  if (iw >= 0 && iw < static_cast<long>(g.in[2])) d[iw] += s[ow];
                }
              }
            }
          }
        }
}

// [batch, channels, len] <-> [channels, batch * len].
template <class T>
void to_channel_major(const T* x, std::size_t batch, std::size_t channels, std::size_t len, T* out) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(x + (n * channels + c) * len, len, out + c * batch * len + n * len);
}

template <class T>
void from_channel_major(const T* x, std::size_t batch, std::size_t channels, std::size_t len, T* out) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(x + c * batch * len + n * len, len, out + (n * channels + c) * len);
}

struct LayerSpec {
  std::size_t spatial_rank;  // 2 or 3
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
};

inline std::array<std::size_t, 3> spatial3(const Shape& s, std::size_t rank) {
  if (rank == 2) return {1, s[2], s[3]};
  return {s[2], s[3], s[4]};
}

inline Shape make_shape(std::size_t n, std::size_t c, const std::array<std::size_t, 3>& sp, std::size_t rank) {
  if (rank == 2) return {n, c, sp[1], sp[2]};
  return {n, c, sp[0], sp[1], sp[2]};
}

inline void fill_kernel(ConvGeometry& g, const LayerSpec& l) {
  const std::size_t first = l.spatial_rank == 2 ? 1 : 0;
  for (std::size_t a = first; a < 3; ++a) {
    g.kernel[a] = l.kernel;
    g.stride[a] = l.stride;
    g.pad[a] = l.pad;
  }
}

template <class T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, std::size_t rank, const char* op,
                     std::size_t weight_out_axis) {
  if (x.rank() != rank + 2)
    throw ShapeError(std::string(op) + ": input must be [N, C, " + std::to_string(rank) + " spatial], got " +
                     to_string(x.shape()));
  if (w.rank() != rank + 2) throw ShapeError(std::string(op) + ": weight rank mismatch " + to_string(w.shape()));
  for (std::size_t a = 2; a < w.rank(); ++a)
    if (w.dim(a) != w.dim(2)) throw ShapeError(std::string(op) + ": kernel must be cubic/square");
  if (b && b->defined() && (b->rank() != 1 || b->dim(0) != w.dim(weight_out_axis)))
    throw ShapeError(std::string(op) + ": bias shape " + to_string(b->shape()) + " does not match " +
                     std::to_string(w.dim(weight_out_axis)) + " output channels");
}

}  // namespace detail

// Cross-correlation. x: [N, Cin, spatial], weight: [Cout, Cin, k...], bias: [Cout]
// or undefined. Output extent per axis (in + 2*pad - k) / stride + 1.
template <class T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride = 2,
               std::size_t pad = 1) {
  const std::size_t rank = x.rank() - 2;
  if (rank != 2 && rank != 3) throw ShapeError("conv: only 2D and 3D inputs, got " + to_string(x.shape()));
  detail::check_conv_args(x, weight, &bias, rank, "conv", 0);
  const std::size_t cin = x.dim(1), cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw ShapeError("conv: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  ConvGeometry g;
  g.batch = x.dim(0);
  g.channels = cin;
  detail::fill_kernel(g, {rank, k, stride, pad});
  g.in = detail::spatial3(x.shape(), rank);
  for (std::size_t a = 0; a < 3; ++a) {
    if (g.in[a] + 2 * g.pad[a] < g.kernel[a])
      throw ShapeError("conv: spatial extent " + std::to_string(g.in[a]) + " smaller than kernel " +
                       std::to_string(g.kernel[a]) + " after padding");
    g.out[a] = (g.in[a] + 2 * g.pad[a] - g.kernel[a]) / g.stride[a] + 1;
  }
  const std::size_t rows = g.col_rows(), cols = g.col_cols(), olen = g.out_len();

  std::vector<T> col(rows * cols);
  detail::im2col(x.values().data(), g, col.data());
  std::vector<T> ycm(cout * cols);
  detail::MapMat<T>(ycm.data(), cout, cols).noalias() =
      detail::ConstMapMat<T>(weight.values().data(), cout, rows) * detail::ConstMapMat<T>(col.data(), rows, cols);
  if (bias.defined())
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t i = 0; i < cols; ++i) ycm[c * cols + i] += bias.values()[c];
  std::vector<T> y(cout * cols);
  detail::from_channel_major(ycm.data(), g.batch, cout, olen, y.data());

  std::vector<std::shared_ptr<Node<T>>> inputs{x.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result<T>(detail::make_shape(g.batch, cout, g.out, rank), std::move(y), std::move(inputs),
                        [g, cout](Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          auto& wn = *self.inputs[1];
                          const std::size_t rows = g.col_rows(), cols = g.col_cols(), olen = g.out_len();
                          std::vector<T> dy(cout * cols);
                          detail::to_channel_major(self.grad.data(), g.batch, cout, olen, dy.data());
                          const detail::ConstMapMat<T> dym(dy.data(), cout, cols);
                          if (wn.requires_grad) {
                            std::vector<T> col(rows * cols);
                            detail::im2col(xn.value.data(), g, col.data());
                            detail::MapMat<T>(wn.grad.data(), cout, rows).noalias() +=
                                dym * detail::ConstMapMat<T>(col.data(), rows, cols).transpose();
                          }
                          if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                            auto& bn = *self.inputs[2];
                            for (std::size_t c = 0; c < cout; ++c) {
                              double acc = 0.0;
                              for (std::size_t i = 0; i < cols; ++i) acc += dy[c * cols + i];
                              bn.grad[c] += static_cast<T>(acc);
                            }
                          }
                          if (xn.requires_grad) {
                            std::vector<T> dcol(rows * cols);
                            detail::MapMat<T>(dcol.data(), rows, cols).noalias() =
                                detail::ConstMapMat<T>(wn.value.data(), cout, rows).transpose() * dym;
                            detail::col2im(dcol.data(), g, xn.grad.data());
                          }
                        });
}

// Transposed convolution, the adjoint of conv() for the same weight tensor.
// x: [N, Cin, spatial], weight: [Cin, Cout, k...], bias: [Cout] or undefined.
// Output extent per axis (in - 1) * stride - 2 * pad + k.
template <class T>
Tensor<T> conv_transpose(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride = 2,
                         std::size_t pad = 1) {
  const std::size_t rank = x.rank() - 2;
  if (rank != 2 && rank != 3) throw ShapeError("conv_transpose: only 2D and 3D inputs, got " + to_string(x.shape()));
  detail::check_conv_args(x, weight, &bias, rank, "conv_transpose", 1);
  const std::size_t cin = x.dim(1), cout = weight.dim(1), k = weight.dim(2);
  if (weight.dim(0) != cin)
    throw ShapeError("conv_transpose: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(0)));
  // Geometry of the forward conv whose adjoint this is: its input is our output.
  ConvGeometry g;
  g.batch = x.dim(0);
  g.channels = cout;
  detail::fill_kernel(g, {rank, k, stride, pad});
  g.out = detail::spatial3(x.shape(), rank);
  for (std::size_t a = 0; a < 3; ++a) {
    const long o = static_cast<long>((g.out[a] - 1) * g.stride[a] + g.kernel[a]) - 2 * static_cast<long>(g.pad[a]);
    if (o <= 0) throw ShapeError("conv_transpose: non-positive output extent");
    g.in[a] = static_cast<std::size_t>(o);
  }
  const std::size_t rows = g.col_rows(), cols = g.col_cols(), xlen = g.out_len(), ylen = g.in_len();

  std::vector<T> xcm(cin * cols);
  detail::to_channel_major(x.values().data(), g.batch, cin, xlen, xcm.data());
  std::vector<T> col(rows * cols);
  detail::MapMat<T>(col.data(), rows, cols).noalias() =
      detail::ConstMapMat<T>(weight.values().data(), cin, rows).transpose() *
      detail::ConstMapMat<T>(xcm.data(), cin, cols);
  std::vector<T> y(g.batch * cout * ylen, T(0));
  detail::col2im(col.data(), g, y.data());
  if (bias.defined())
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t c = 0; c < cout; ++c) {
        T* d = y.data() + (n * cout + c) * ylen;
        for (std::size_t i = 0; i < ylen; ++i) d[i] += bias.values()[c];
      }

  std::vector<std::shared_ptr<Node<T>>> inputs{x.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result<T>(detail::make_shape(g.batch, cout, g.in, rank), std::move(y), std::move(inputs),
                        [g, cin, cout](Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          auto& wn = *self.inputs[1];
                          const std::size_t rows = g.col_rows(), cols = g.col_cols(), xlen = g.out_len(),
                                            ylen = g.in_len();
                          std::vector<T> dcol(rows * cols);
                          detail::im2col(self.grad.data(), g, dcol.data());
                          const detail::ConstMapMat<T> dcolm(dcol.data(), rows, cols);
                          if (wn.requires_grad) {
                            std::vector<T> xcm(cin * cols);
                            detail::to_channel_major(xn.value.data(), g.batch, cin, xlen, xcm.data());
                            detail::MapMat<T>(wn.grad.data(), cin, rows).noalias() +=
                                detail::ConstMapMat<T>(xcm.data(), cin, cols) * dcolm.transpose();
                          }
                          if (xn.requires_grad) {
                            std::vector<T> dx(cin * cols);
                            detail::MapMat<T>(dx.data(), cin, cols).noalias() =
                                detail::ConstMapMat<T>(wn.value.data(), cin, rows) * dcolm;
                            std::vector<T> dxb(dx.size());
                            detail::from_channel_major(dx.data(), g.batch, cin, xlen, dxb.data());
                            for (std::size_t i = 0; i < dxb.size(); ++i) xn.grad[i] += dxb[i];
                          }
                          if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                            auto& bn = *self.inputs[2];
                            for (std::size_t c = 0; c < cout; ++c) {
                              double acc = 0.0;
                              for (std::size_t n = 0; n < g.batch; ++n) {
                                const T* d = self.grad.data() + (n * cout + c) * ylen;
                                for (std::size_t i = 0; i < ylen; ++i) acc += d[i];
                              }
                              bn.grad[c] += static_cast<T>(acc);
                            }
                          }
                        });
}

}  // namespace isoplane::engine
