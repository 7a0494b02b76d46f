#include "crossda/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "crossda/error.hpp"

namespace crossda::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw Error(Errc::dimension, std::string(op) + ": " + what);
}

struct ConvGeometry {
  std::size_t n, ci, h, w, co, k, stride, pad, ho, wo;

  std::size_t rows() const { return ci * k * k; }
  std::size_t plane() const { return ho * wo; }
  std::size_t cols() const { return n * plane(); }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t np = g.cols();
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* plane = x + (n * g.ci + c) * g.h * g.w;
          T* dst = row + n * g.plane();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill(dst + oy * g.wo, dst + (oy + 1) * g.wo, T{0});
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              dst[oy * g.wo + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t np = g.cols();
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          T* plane = dx + (n * g.ci + c) * g.h * g.w;
          const T* src = row + n * g.plane();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            T* dst = plane + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[oy * g.wo + ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid_value(T x) {
  const T eps = std::numeric_limits<T>::epsilon();
  const T s = x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
  return std::clamp(s, eps, T{1} - eps);
}

}  // namespace

template <typename T>
Var conv2d(BasicTape<T>& tape, Var xv, Var wv, Var bv, std::size_t stride, std::size_t pad) {
  const auto& x = tape.value(xv);
  const auto& w = tape.value(wv);
  const auto& b = tape.value(bv);
  require(x.shape().rank() == 4 && w.shape().rank() == 4, "conv2d", "input and weights must be rank 4");
  require(w.shape()[1] == x.shape()[1], "conv2d",
          "weights expect " + std::to_string(w.shape()[1]) + " input channels, got " + std::to_string(x.shape()[1]));
  require(w.shape()[2] == w.shape()[3], "conv2d", "kernel must be square");
  require(b.shape().rank() == 1 && b.shape()[0] == w.shape()[0], "conv2d", "bias must have one entry per output channel");
  if (stride == 0) throw Error(Errc::invalid_argument, "conv2d: stride must be >= 1");

  ConvGeometry g{x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], w.shape()[0], w.shape()[2], stride, pad, 0, 0};
  require(g.h + 2 * pad >= g.k && g.w + 2 * pad >= g.k, "conv2d", "kernel larger than padded input");
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;

  auto cols = std::make_shared<std::vector<T>>(g.rows() * g.cols());
  im2col(x.data(), g, cols->data());

  Eigen::Map<const RowMat<T>> wm(w.data(), static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(g.rows()));
  Eigen::Map<const RowMat<T>> cm(cols->data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
  RowMat<T> y = wm * cm;

  BasicTensor<T> out(Shape{g.n, g.co, g.ho, g.wo});
  const std::size_t plane = g.plane();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.co; ++co) {
      const T* src = y.data() + co * g.cols() + n * plane;
      T* dst = out.data() + (n * g.co + co) * plane;
      const T bias = b[co];
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + bias;
    }
  }

  const bool needs = tape.requires_grad(xv) || tape.requires_grad(wv) || tape.requires_grad(bv);
  if (!tape.requires_grad(wv)) cols.reset();
  return tape.record(std::move(out), needs, [xv, wv, bv, g, cols](BasicTape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    const std::size_t plane = g.plane();
    RowMat<T> dy(static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(g.cols()));
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.co; ++co) {
        const T* src = gy.data() + (n * g.co + co) * plane;
        std::copy(src, src + plane, dy.data() + co * g.cols() + n * plane);
      }
    }
    if (t.requires_grad(bv)) {
      auto& gb = t.grad_accumulator(bv);
      for (std::size_t co = 0; co < g.co; ++co) gb[co] += dy.row(static_cast<Eigen::Index>(co)).sum();
    }
    if (t.requires_grad(wv)) {
      auto& gw = t.grad_accumulator(wv);
      Eigen::Map<const RowMat<T>> cm(cols->data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
      Eigen::Map<RowMat<T>> gwm(gw.data(), static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(g.rows()));
      gwm.noalias() += dy * cm.transpose();
    }
    if (t.requires_grad(xv)) {
      const auto& w = t.value(wv);
      Eigen::Map<const RowMat<T>> wm(w.data(), static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(g.rows()));
      RowMat<T> dcols = wm.transpose() * dy;
      col2im_add(dcols.data(), g, t.grad_accumulator(xv).data());
    }
  });
}

template <typename T>
Var upsample2x(BasicTape<T>& tape, Var xv) {
  const auto& x = tape.value(xv);
  require(x.shape().rank() == 4, "upsample2x", "input must be rank 4");
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  BasicTensor<T> out(Shape{n, c, 2 * h, 2 * w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = out.data() + p * 4 * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return tape.record(std::move(out), tape.requires_grad(xv), [xv, n, c, h, w](BasicTape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad_accumulator(xv);
    for (std::size_t p = 0; p < n * c; ++p) {
      const T* src = gy.data() + p * 4 * h * w;
      T* dst = gx.data() + p * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          const T* q = src + (2 * y) * 2 * w + 2 * xx;
          dst[y * w + xx] += (q[0] + q[1]) + (q[2 * w] + q[2 * w + 1]);
        }
      }
    }
  });
}

namespace {

// Nearest 2x upsampling followed by a 3x3, pad-1 convolution splits into four
// 2x2 convolutions on the low-resolution input, one per output phase
// (py, px). Tap ky of the 3x3 kernel lands on low-resolution row offset
// floor((py + ky - 1) / 2), which is slot 0 or 1 of the phase window.
constexpr std::size_t phase_slot(std::size_t phase, std::size_t k) { return phase == 0 ? (k == 0 ? 0 : 1) : (k == 2 ? 1 : 0); }

struct PhaseGeometry {
  std::size_t n, ci, h, w, co;

  std::size_t rows() const { return ci * 4; }
  std::size_t cols() const { return n * h * w; }
};

template <typename T>
void phase_im2col(const T* x, const PhaseGeometry& g, std::size_t py, std::size_t px, T* cols) {
  const std::size_t np = g.cols();
  const auto oy0 = static_cast<std::ptrdiff_t>(py) - 1;
  const auto ox0 = static_cast<std::ptrdiff_t>(px) - 1;
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t bb = 0; bb < 2; ++bb) {
        T* row = cols + ((c * 2 + a) * 2 + bb) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* plane = x + (n * g.ci + c) * g.h * g.w;
          T* dst = row + n * g.h * g.w;
          for (std::size_t y = 0; y < g.h; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y + a) + oy0;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill(dst + y * g.w, dst + (y + 1) * g.w, T{0});
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t xx = 0; xx < g.w; ++xx) {
              const auto ix = static_cast<std::ptrdiff_t>(xx + bb) + ox0;
              dst[y * g.w + xx] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void phase_col2im_add(const T* cols, const PhaseGeometry& g, std::size_t py, std::size_t px, T* dx) {
  const std::size_t np = g.cols();
  const auto oy0 = static_cast<std::ptrdiff_t>(py) - 1;
  const auto ox0 = static_cast<std::ptrdiff_t>(px) - 1;
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t bb = 0; bb < 2; ++bb) {
        const T* row = cols + ((c * 2 + a) * 2 + bb) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          T* plane = dx + (n * g.ci + c) * g.h * g.w;
          const T* src = row + n * g.h * g.w;
          for (std::size_t y = 0; y < g.h; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y + a) + oy0;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            T* dst = plane + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t xx = 0; xx < g.w; ++xx) {
              const auto ix = static_cast<std::ptrdiff_t>(xx + bb) + ox0;
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[y * g.w + xx];
            }
          }
        }
      }
    }
  }
}

// Phase kernel [Co, Ci*4] from the 3x3 kernel [Co, Ci, 3, 3].
template <typename T>
RowMat<T> phase_kernel(const BasicTensor<T>& w, std::size_t co, std::size_t ci, std::size_t py, std::size_t px) {
  RowMat<T> p = RowMat<T>::Zero(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci * 4));
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t c = 0; c < ci; ++c) {
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::size_t slot = (c * 2 + phase_slot(py, ky)) * 2 + phase_slot(px, kx);
          p(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(slot)) += w[((o * ci + c) * 3 + ky) * 3 + kx];
        }
      }
    }
  }
  return p;
}

}  // namespace

template <typename T>
Var upsample_conv2d(BasicTape<T>& tape, Var xv, Var wv, Var bv) {
  const auto& x = tape.value(xv);
  const auto& w = tape.value(wv);
  const auto& b = tape.value(bv);
  require(x.shape().rank() == 4 && w.shape().rank() == 4, "upsample_conv2d", "input and weights must be rank 4");
  require(w.shape()[1] == x.shape()[1], "upsample_conv2d",
          "weights expect " + std::to_string(w.shape()[1]) + " input channels, got " + std::to_string(x.shape()[1]));
  require(w.shape()[2] == 3 && w.shape()[3] == 3, "upsample_conv2d", "kernel must be 3x3");
  require(b.shape().rank() == 1 && b.shape()[0] == w.shape()[0], "upsample_conv2d",
          "bias must have one entry per output channel");

  const PhaseGeometry g{x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], w.shape()[0]};
  const bool keep_cols = tape.requires_grad(wv);
  auto saved = std::make_shared<std::vector<std::vector<T>>>();
  BasicTensor<T> out(Shape{g.n, g.co, 2 * g.h, 2 * g.w});
  const std::size_t plane = g.h * g.w;
  std::vector<T> cols(g.rows() * g.cols());
  for (std::size_t py = 0; py < 2; ++py) {
    for (std::size_t px = 0; px < 2; ++px) {
      phase_im2col(x.data(), g, py, px, cols.data());
      const RowMat<T> pk = phase_kernel(w, g.co, g.ci, py, px);
      Eigen::Map<const RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
      RowMat<T> y = pk * cm;
      for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t o = 0; o < g.co; ++o) {
          const T* src = y.data() + o * g.cols() + n * plane;
          T* dst = out.data() + (n * g.co + o) * 4 * plane;
          const T bias = b[o];
          for (std::size_t yy = 0; yy < g.h; ++yy) {
            T* drow = dst + (2 * yy + py) * 2 * g.w + px;
            const T* srow = src + yy * g.w;
            for (std::size_t xx = 0; xx < g.w; ++xx) drow[2 * xx] = srow[xx] + bias;
          }
        }
      }
      if (keep_cols) saved->push_back(cols);
    }
  }

  const bool needs = tape.requires_grad(xv) || tape.requires_grad(wv) || tape.requires_grad(bv);
  return tape.record(std::move(out), needs, [xv, wv, bv, g, saved](BasicTape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    const std::size_t plane = g.h * g.w;
    const auto& w = t.value(wv);
    RowMat<T> dy(static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(g.cols()));
    for (std::size_t py = 0; py < 2; ++py) {
      for (std::size_t px = 0; px < 2; ++px) {
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t o = 0; o < g.co; ++o) {
            const T* src = gy.data() + (n * g.co + o) * 4 * plane;
            T* dst = dy.data() + o * g.cols() + n * plane;
            for (std::size_t yy = 0; yy < g.h; ++yy) {
              const T* srow = src + (2 * yy + py) * 2 * g.w + px;
              for (std::size_t xx = 0; xx < g.w; ++xx) dst[yy * g.w + xx] = srow[2 * xx];
            }
          }
        }
        if (t.requires_grad(bv)) {
          auto& gb = t.grad_accumulator(bv);
          for (std::size_t o = 0; o < g.co; ++o) gb[o] += dy.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (t.requires_grad(wv)) {
          const auto& cols = (*saved)[py * 2 + px];
          Eigen::Map<const RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
          const RowMat<T> dp = dy * cm.transpose();
          auto& gw = t.grad_accumulator(wv);
          for (std::size_t o = 0; o < g.co; ++o) {
            for (std::size_t c = 0; c < g.ci; ++c) {
              for (std::size_t ky = 0; ky < 3; ++ky) {
                for (std::size_t kx = 0; kx < 3; ++kx) {
                  const std::size_t slot = (c * 2 + phase_slot(py, ky)) * 2 + phase_slot(px, kx);
                  gw[((o * g.ci + c) * 3 + ky) * 3 + kx] += dp(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(slot));
                }
              }
            }
          }
        }
        if (t.requires_grad(xv)) {
          const RowMat<T> pk = phase_kernel(w, g.co, g.ci, py, px);
          const RowMat<T> dcols = pk.transpose() * dy;
          phase_col2im_add(dcols.data(), g, py, px, t.grad_accumulator(xv).data());
        }
      }
    }
  });
}

template <typename T>
Var activation(BasicTape<T>& tape, Var xv, Activation kind) {
  const auto& x = tape.value(xv);
  BasicTensor<T> out(x.shape());
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    switch (kind) {
      case Activation::relu: out[i] = v > T{0} ? v : T{0}; break;
      case Activation::leaky_relu: out[i] = v > T{0} ? v : slope * v; break;
      case Activation::sigmoid: out[i] = sigmoid_value(v); break;
      case Activation::tanh: out[i] = std::tanh(v); break;
    }
  }
  return tape.record(std::move(out), tape.requires_grad(xv), [xv, kind, slope](BasicTape<T>& t, Var self) {
    const auto& y = t.value(self);
    const auto& x = t.value(xv);
    const auto& gy = t.grad(self);
    auto& gx = t.grad_accumulator(xv);
    for (std::size_t i = 0; i < y.size(); ++i) {
      switch (kind) {
        case Activation::relu: gx[i] += x[i] > T{0} ? gy[i] : T{0}; break;
        case Activation::leaky_relu: gx[i] += x[i] > T{0} ? gy[i] : slope * gy[i]; break;
        case Activation::sigmoid: gx[i] += gy[i] * y[i] * (T{1} - y[i]); break;
        case Activation::tanh: gx[i] += gy[i] * (T{1} - y[i] * y[i]); break;
      }
    }
  });
}

template <typename T>
Var add(BasicTape<T>& tape, Var av, Var bv) {
  const auto& a = tape.value(av);
  const auto& b = tape.value(bv);
  require(a.shape() == b.shape(), "add", "shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  const bool needs = tape.requires_grad(av) || tape.requires_grad(bv);
  return tape.record(std::move(out), needs, [av, bv](BasicTape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    for (Var v : {av, bv}) {
      if (!t.requires_grad(v)) continue;
      auto& g = t.grad_accumulator(v);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

template <typename T>
Var affine_scalar(BasicTape<T>& tape, Var xv, double scale, double shift) {
  const auto& x = tape.value(xv);
  BasicTensor<T> out(x.shape());
  const T s = static_cast<T>(scale);
  const T b = static_cast<T>(shift);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i] + b;
  return tape.record(std::move(out), tape.requires_grad(xv), [xv, s](BasicTape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad_accumulator(xv);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += s * gy[i];
  });
}

template <typename T>
Var softplus(BasicTape<T>& tape, Var xv) {
  const auto& x = tape.value(xv);
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::log1p(std::exp(-std::abs(x[i]))) + std::max(x[i], T{0});
  }
  return tape.record(std::move(out), tape.requires_grad(xv), [xv](BasicTape<T>& t, Var self) {
    const auto& x = t.value(xv);
    const auto& gy = t.grad(self);
    auto& gx = t.grad_accumulator(xv);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const T s = x[i] >= T{0} ? T{1} / (T{1} + std::exp(-x[i])) : std::exp(x[i]) / (T{1} + std::exp(x[i]));
      gx[i] += gy[i] * s;
    }
  });
}

template <typename T>
Var linear(BasicTape<T>& tape, Var xv, Var wv, Var bv) {
  const auto& x = tape.value(xv);
  const auto& w = tape.value(wv);
  const auto& b = tape.value(bv);
  require(x.shape().rank() == 2 && w.shape().rank() == 2 && w.shape()[1] == x.shape()[1], "linear",
          "expected x [N,F] and w [O,F]");
  require(b.shape().rank() == 1 && b.shape()[0] == w.shape()[0], "linear", "bias must have one entry per output");
  const auto n = static_cast<Eigen::Index>(x.shape()[0]);
  const auto f = static_cast<Eigen::Index>(x.shape()[1]);
  const auto o = static_cast<Eigen::Index>(w.shape()[0]);
  BasicTensor<T> out(Shape{x.shape()[0], w.shape()[0]});
  Eigen::Map<const RowMat<T>> xm(x.data(), n, f);
  Eigen::Map<const RowMat<T>> wm(w.data(), o, f);
  Eigen::Map<RowMat<T>> ym(out.data(), n, o);
  ym.noalias() = xm * wm.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < o; ++j) ym(i, j) += b[static_cast<std::size_t>(j)];
  }
  const bool needs = tape.requires_grad(xv) || tape.requires_grad(wv) || tape.requires_grad(bv);
  return tape.record(std::move(out), needs, [xv, wv, bv, n, f, o](BasicTape<T>& t, Var self) {
    Eigen::Map<const RowMat<T>> gy(t.grad(self).data(), n, o);
    if (t.requires_grad(xv)) {
      Eigen::Map<const RowMat<T>> wm(t.value(wv).data(), o, f);
      Eigen::Map<RowMat<T>> gx(t.grad_accumulator(xv).data(), n, f);
      gx.noalias() += gy * wm;
    }
    if (t.requires_grad(wv)) {
      Eigen::Map<const RowMat<T>> xm(t.value(xv).data(), n, f);
      Eigen::Map<RowMat<T>> gw(t.grad_accumulator(wv).data(), o, f);
      gw.noalias() += gy.transpose() * xm;
    }
    if (t.requires_grad(bv)) {
      auto& gb = t.grad_accumulator(bv);
      for (Eigen::Index j = 0; j < o; ++j) gb[static_cast<std::size_t>(j)] += gy.col(j).sum();
    }
  });
}

template <typename T>
InstanceStats instance_stats(BasicTape<T>& tape, Var xv) {
  const auto& x = tape.value(xv);
  require(x.shape().rank() == 4, "instance_stats", "input must be rank 4");
  const std::size_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  require(hw >= 1, "instance_stats", "empty spatial extent");
  BasicTensor<T> mu(Shape{n, c});
  BasicTensor<T> sigma(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* v = x.data() + p * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += v[i];
    const double m = s / static_cast<double>(hw);
    double sq = 0.0;
    for (std::size_t i = 0; i < hw; ++i) sq += (v[i] - m) * (v[i] - m);
    mu[p] = static_cast<T>(m);
    sigma[p] = static_cast<T>(std::sqrt(sq / static_cast<double>(hw) + kInstanceEps));
  }
  const bool needs = tape.requires_grad(xv);
  InstanceStats out;
  out.mu = tape.record(std::move(mu), needs, [xv, hw](BasicTape<T>& t, Var self) {
    const auto& gmu = t.grad(self);
    auto& gx = t.grad_accumulator(xv);
    for (std::size_t p = 0; p < gmu.size(); ++p) {
      const T g = gmu[p] / static_cast<T>(hw);
      T* dst = gx.data() + p * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] += g;
    }
  });
  const Var mu_var = out.mu;
  out.sigma = tape.record(std::move(sigma), needs, [xv, hw, mu_var](BasicTape<T>& t, Var self) {
    const auto& gs = t.grad(self);
    const auto& sig = t.value(self);
    const auto& mu = t.value(mu_var);
    const auto& x = t.value(xv);
    auto& gx = t.grad_accumulator(xv);
    for (std::size_t p = 0; p < gs.size(); ++p) {
      const T scale = gs[p] / (static_cast<T>(hw) * sig[p]);
      const T* v = x.data() + p * hw;
      T* dst = gx.data() + p * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] += scale * (v[i] - mu[p]);
    }
  });
  return out;
}

template <typename T>
Var adain(BasicTape<T>& tape, Var cv, Var muv, Var sigv) {
  const auto& x = tape.value(cv);
  const auto& smu = tape.value(muv);
  const auto& ssig = tape.value(sigv);
  require(x.shape().rank() == 4, "adain", "content must be rank 4");
  const std::size_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  const Shape stat_shape{n, c};
  require(smu.shape() == stat_shape && ssig.shape() == stat_shape, "adain",
          "style statistics must be shaped " + stat_shape.str());

  // Per (sample, channel): content mean, 1/std, and target spread.
  constexpr double kDelta = 1e-12;
  struct Saved {
    std::vector<double> mean, rstd, spread;
  };
  auto saved = std::make_shared<Saved>();
  saved->mean.resize(n * c);
  saved->rstd.resize(n * c);
  saved->spread.resize(n * c);

  BasicTensor<T> out(x.shape());
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* v = x.data() + p * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += v[i];
    const double m = s / static_cast<double>(hw);
    double sq = 0.0;
    for (std::size_t i = 0; i < hw; ++i) sq += (v[i] - m) * (v[i] - m);
    const double r = 1.0 / std::sqrt(sq / static_cast<double>(hw) + kDelta);
    const double target = static_cast<double>(ssig[p]);
    const double a = std::sqrt(std::max(target * target - kInstanceEps, 0.0));
    saved->mean[p] = m;
    saved->rstd[p] = r;
    saved->spread[p] = a;
    T* dst = out.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      dst[i] = static_cast<T>(static_cast<double>(smu[p]) + a * (v[i] - m) * r);
    }
  }

  const bool needs = tape.requires_grad(cv) || tape.requires_grad(muv) || tape.requires_grad(sigv);
  return tape.record(std::move(out), needs, [cv, muv, sigv, hw, saved](BasicTape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    const auto& x = t.value(cv);
    const auto& ssig = t.value(sigv);
    const std::size_t planes = saved->mean.size();
    for (std::size_t p = 0; p < planes; ++p) {
      const T* g = gy.data() + p * hw;
      const T* v = x.data() + p * hw;
      const double m = saved->mean[p], r = saved->rstd[p], a = saved->spread[p];
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * (v[i] - m) * r;
      }
      if (t.requires_grad(muv)) t.grad_accumulator(muv)[p] += static_cast<T>(sum_g);
      if (t.requires_grad(sigv) && a > 0.0) {
        t.grad_accumulator(sigv)[p] += static_cast<T>(sum_gx * static_cast<double>(ssig[p]) / a);
      }
      if (t.requires_grad(cv)) {
        // d/dx of a * (x - m) * r with m and r depending on x.
        T* dst = t.grad_accumulator(cv).data() + p * hw;
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) {
          const double xhat = (v[i] - m) * r;
          dst[i] += static_cast<T>(a * r * (g[i] - sum_g * inv - xhat * sum_gx * inv));
        }
      }
    }
  });
}

template <typename T>
Var sum(BasicTape<T>& tape, Var xv) {
  const auto& x = tape.value(xv);
  double s = 0.0;
  for (T v : x.values()) s += v;
  BasicTensor<T> out(Shape{1}, static_cast<T>(s));
  return tape.record(std::move(out), tape.requires_grad(xv), [xv](BasicTape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad_accumulator(xv).values()) v += g;
  });
}

template <typename T>
Var mean(BasicTape<T>& tape, Var xv) {
  const auto& x = tape.value(xv);
  require(x.size() > 0, "mean", "empty tensor");
  double s = 0.0;
  for (T v : x.values()) s += v;
  const double count = static_cast<double>(x.size());
  BasicTensor<T> out(Shape{1}, static_cast<T>(s / count));
  return tape.record(std::move(out), tape.requires_grad(xv), [xv, count](BasicTape<T>& t, Var self) {
    const T g = static_cast<T>(t.grad(self)[0] / count);
    for (auto& v : t.grad_accumulator(xv).values()) v += g;
  });
}

template <typename T>
Var dot(BasicTape<T>& tape, Var xv, const BasicTensor<T>& weights) {
  const auto& x = tape.value(xv);
  require(x.size() == weights.size(), "dot", "weight count does not match tensor size");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * weights[i];
  BasicTensor<T> out(Shape{1}, static_cast<T>(s));
  return tape.record(std::move(out), tape.requires_grad(xv), [xv, weights](BasicTape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    auto& gx = t.grad_accumulator(xv);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

#define CROSSDA_INSTANTIATE_OPS(T)                                                        \
  template Var conv2d<T>(BasicTape<T>&, Var, Var, Var, std::size_t, std::size_t);        \
  template Var upsample2x<T>(BasicTape<T>&, Var);                                         \
  template Var upsample_conv2d<T>(BasicTape<T>&, Var, Var, Var);                         \
  template Var activation<T>(BasicTape<T>&, Var, Activation);                             \
  template Var add<T>(BasicTape<T>&, Var, Var);                                           \
  template Var affine_scalar<T>(BasicTape<T>&, Var, double, double);                      \
  template Var softplus<T>(BasicTape<T>&, Var);                                           \
  template Var linear<T>(BasicTape<T>&, Var, Var, Var);                                   \
  template InstanceStats instance_stats<T>(BasicTape<T>&, Var);                           \
  template Var adain<T>(BasicTape<T>&, Var, Var, Var);                                    \
  template Var sum<T>(BasicTape<T>&, Var);                                                \
  template Var mean<T>(BasicTape<T>&, Var);                                               \
  template Var dot<T>(BasicTape<T>&, Var, const BasicTensor<T>&);

CROSSDA_INSTANTIATE_OPS(float)
CROSSDA_INSTANTIATE_OPS(double)

#undef CROSSDA_INSTANTIATE_OPS

}  // namespace crossda::nn
