#pragma once

// Layer kernels over raw buffers, templated on the scalar type so the same
// arithmetic runs in float for training and in double for gradient checks.
// All images are NCHW, row-major.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace pfm::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int channels = 0;  // channels of the image side
  int height = 0;
  int width = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  int out_h = 0;  // positions of the column side
  int out_w = 0;

  int rows() const { return channels * kernel_h * kernel_w; }
  int positions() const { return out_h * out_w; }
};

// Unfolds one image into columns [rows x positions], writing into `col` whose
// rows have leading dimension `ld`.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col, std::ptrdiff_t ld) {
  int r = 0;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = image + static_cast<std::ptrdiff_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj, ++r) {
        T* dst = col + r * ld;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          T* row = dst + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            row[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the image.
template <typename T>
void col2im_add(const T* col, std::ptrdiff_t ld, const ConvGeometry& g, T* image) {
  int r = 0;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = image + static_cast<std::ptrdiff_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj, ++r) {
        const T* src = col + r * ld;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + iy * g.width;
          const T* row = src + oy * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.width) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

// Batched unfold: columns of sample n occupy [n*positions, (n+1)*positions).
template <typename T>
void im2col_batch(const T* images, int batch, const ConvGeometry& g, std::vector<T>& col) {
  const std::ptrdiff_t ld = static_cast<std::ptrdiff_t>(batch) * g.positions();
  col.resize(static_cast<std::size_t>(g.rows()) * ld);
  const std::ptrdiff_t image_size = static_cast<std::ptrdiff_t>(g.channels) * g.height * g.width;
  for (int n = 0; n < batch; ++n) im2col(images + n * image_size, g, col.data() + n * g.positions(), ld);
}

template <typename T>
void col2im_batch_add(const std::vector<T>& col, int batch, const ConvGeometry& g, T* images) {
  const std::ptrdiff_t ld = static_cast<std::ptrdiff_t>(batch) * g.positions();
  const std::ptrdiff_t image_size = static_cast<std::ptrdiff_t>(g.channels) * g.height * g.width;
  for (int n = 0; n < batch; ++n) col2im_add(col.data() + n * g.positions(), ld, g, images + n * image_size);
}

// [C x (N*P)] channel-major matrix <-> NCP tensor layout.
template <typename T>
void channel_major_to_nchw(const T* mat, int batch, int channels, int positions, T* out) {
  const std::ptrdiff_t ld = static_cast<std::ptrdiff_t>(batch) * positions;
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c)
      std::copy_n(mat + c * ld + n * positions, positions,
                  out + (static_cast<std::ptrdiff_t>(n) * channels + c) * positions);
}

template <typename T>
void nchw_to_channel_major(const T* in, int batch, int channels, int positions, T* mat) {
  const std::ptrdiff_t ld = static_cast<std::ptrdiff_t>(batch) * positions;
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c)
      std::copy_n(in + (static_cast<std::ptrdiff_t>(n) * channels + c) * positions, positions,
                  mat + c * ld + n * positions);
}

// Convolution. weight: [Cout x Cin*kh*kw], bias: [Cout]. g describes the input
// image and output positions. `col` receives the unfolded input for backward.
template <typename T>
void conv2d_forward(const T* x, int batch, const ConvGeometry& g, const T* weight, const T* bias,
                    int out_channels, T* y, std::vector<T>& col) {
  im2col_batch(x, batch, g, col);
  const int cols = batch * g.positions();
  RowMat<T> out = ConstMatMap<T>(weight, out_channels, g.rows()) * ConstMatMap<T>(col.data(), g.rows(), cols);
  for (int c = 0; c < out_channels; ++c) out.row(c).array() += bias[c];
  channel_major_to_nchw(out.data(), batch, out_channels, g.positions(), y);
}

template <typename T>
void conv2d_backward(const T* dy, int batch, const ConvGeometry& g, const T* weight, int out_channels,
                     const std::vector<T>& col, T* dweight, T* dbias, T* dx) {
  const int cols = batch * g.positions();
  RowMat<T> dout(out_channels, cols);
  nchw_to_channel_major(dy, batch, out_channels, g.positions(), dout.data());
  if (dweight) {
    MatMap<T>(dweight, out_channels, g.rows()).noalias() +=
        dout * ConstMatMap<T>(col.data(), g.rows(), cols).transpose();
  }
  if (dbias) {
    for (int c = 0; c < out_channels; ++c) dbias[c] += dout.row(c).sum();
  }
  if (dx) {
    std::vector<T> dcol(static_cast<std::size_t>(g.rows()) * cols);
    MatMap<T>(dcol.data(), g.rows(), cols).noalias() =
        ConstMatMap<T>(weight, out_channels, g.rows()).transpose() * dout;
    col2im_batch_add(dcol, batch, g, dx);
  }
}

// Transposed convolution. weight: [Cin x Cout*kh*kw]. g describes the OUTPUT
// image (channels = Cout) and its positions are the input's spatial extent.
template <typename T>
void transposed_conv2d_forward(const T* x, int batch, int in_channels, const ConvGeometry& g, const T* weight,
                               const T* bias, T* y) {
  const int cols = batch * g.positions();
  RowMat<T> xmat(in_channels, cols);
  nchw_to_channel_major(x, batch, in_channels, g.positions(), xmat.data());
  std::vector<T> col(static_cast<std::size_t>(g.rows()) * cols);
  MatMap<T>(col.data(), g.rows(), cols).noalias() =
      ConstMatMap<T>(weight, in_channels, g.rows()).transpose() * xmat;
  const std::ptrdiff_t out_size = static_cast<std::ptrdiff_t>(g.channels) * g.height * g.width;
  std::fill(y, y + batch * out_size, T(0));
  col2im_batch_add(col, batch, g, y);
  const int plane = g.height * g.width;
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < g.channels; ++c) {
      T* p = y + n * out_size + static_cast<std::ptrdiff_t>(c) * plane;
      for (int i = 0; i < plane; ++i) p[i] += bias[c];
    }
}

template <typename T>
void transposed_conv2d_backward(const T* dy, const T* x, int batch, int in_channels, const ConvGeometry& g,
                                const T* weight, T* dweight, T* dbias, T* dx) {
  const int cols = batch * g.positions();
  std::vector<T> dcol;
  im2col_batch(dy, batch, g, dcol);
  const ConstMatMap<T> dcol_mat(dcol.data(), g.rows(), cols);
  if (dweight) {
    RowMat<T> xmat(in_channels, cols);
    nchw_to_channel_major(x, batch, in_channels, g.positions(), xmat.data());
    MatMap<T>(dweight, in_channels, g.rows()).noalias() += xmat * dcol_mat.transpose();
  }
  if (dbias) {
    const int plane = g.height * g.width;
    const std::ptrdiff_t out_size = static_cast<std::ptrdiff_t>(g.channels) * plane;
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < g.channels; ++c) {
        const T* p = dy + n * out_size + static_cast<std::ptrdiff_t>(c) * plane;
        T s = 0;
        for (int i = 0; i < plane; ++i) s += p[i];
        dbias[c] += s;
      }
  }
  if (dx) {
    RowMat<T> dxmat = ConstMatMap<T>(weight, in_channels, g.rows()) * dcol_mat;
    std::vector<T> buf(static_cast<std::size_t>(batch) * in_channels * g.positions());
    channel_major_to_nchw(dxmat.data(), batch, in_channels, g.positions(), buf.data());
    for (std::size_t i = 0; i < buf.size(); ++i) dx[i] += buf[i];
  }
}

// Max pooling without padding; `argmax` receives the flat input index of each
// output's winner (first maximum in scan order).
template <typename T>
void max_pool_forward(const T* x, int batch, int channels, int height, int width, int kernel, int stride,
                      int out_h, int out_w, T* y, std::vector<int>* argmax) {
  if (argmax) argmax->resize(static_cast<std::size_t>(batch) * channels * out_h * out_w);
  std::size_t o = 0;
  for (int nc = 0; nc < batch * channels; ++nc) {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(nc) * height * width;
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::ptrdiff_t best_i = base;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride + ky;
          for (int kx = 0; kx < kernel; ++kx) {
            const std::ptrdiff_t i = base + iy * width + ox * stride + kx;
            if (x[i] > best) {
              best = x[i];
              best_i = i;
            }
          }
        }
        y[o] = best;
        if (argmax) (*argmax)[o] = static_cast<int>(best_i);
      }
    }
  }
}

// y = x W^T + b with x: [N x in], W: [out x in].
template <typename T>
void fully_connected_forward(const T* x, int batch, int in, int out, const T* weight, const T* bias, T* y) {
  MatMap<T> ymat(y, batch, out);
  ymat.noalias() = ConstMatMap<T>(x, batch, in) * ConstMatMap<T>(weight, out, in).transpose();
  for (int n = 0; n < batch; ++n)
    for (int j = 0; j < out; ++j) ymat(n, j) += bias[j];
}

template <typename T>
void fully_connected_backward(const T* dy, const T* x, int batch, int in, int out, const T* weight, T* dweight,
                              T* dbias, T* dx) {
  const ConstMatMap<T> dymat(dy, batch, out);
  if (dweight) MatMap<T>(dweight, out, in).noalias() += dymat.transpose() * ConstMatMap<T>(x, batch, in);
  if (dbias)
    for (int j = 0; j < out; ++j) dbias[j] += dymat.col(j).sum();
  if (dx) MatMap<T>(dx, batch, in).noalias() += dymat * ConstMatMap<T>(weight, out, in);
}

// Mean softmax cross-entropy over the batch; `probs` receives the softmax.
template <typename T>
T softmax_cross_entropy_forward(const T* logits, int batch, int classes, const int* labels, T* probs) {
  T loss = 0;
  for (int n = 0; n < batch; ++n) {
    const T* z = logits + n * classes;
    T* p = probs + n * classes;
    const T zmax = *std::max_element(z, z + classes);
    T sum = 0;
    for (int c = 0; c < classes; ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (int c = 0; c < classes; ++c) p[c] /= sum;
    loss += -(z[labels[n]] - zmax - std::log(sum));
  }
  return loss / static_cast<T>(batch);
}

// 0.5 * sum(w * (x - t)^2) / batch; weights may be null (all ones).
template <typename T>
T euclidean_loss_forward(const T* x, const T* target, const T* weights, std::size_t count, int batch) {
  T loss = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const T d = x[i] - target[i];
    loss += (weights ? weights[i] : T(1)) * d * d;
  }
  return T(0.5) * loss / static_cast<T>(batch);
}

}  // namespace pfm::kernels
