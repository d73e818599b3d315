#include "langseg/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace langseg {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;

namespace {

void check_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " tensor, got shape " + shape_to_string(t.shape()));
  }
}

// Column buffer for im2col; reused across calls. Aligned like Tensor
// storage so GEMM behavior stays layout-independent.
DoubleVec& col_scratch() {
  static thread_local DoubleVec buf;
  return buf;
}

struct ConvDims {
  std::size_t cin, h, w, cout, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  check_rank(x, 3, "conv2d input");
  check_rank(w, 4, "conv2d kernel");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), w.dim(3), 0, 0};
  if (w.dim(1) != d.cin) {
    throw ShapeError("conv2d: kernel " + shape_to_string(w.shape()) +
                     " does not match input channels of " + shape_to_string(x.shape()));
  }
  if (d.kh % 2 == 0 || d.kw % 2 == 0) {
    throw ShapeError("conv2d: kernel dims must be odd, got " + shape_to_string(w.shape()));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad) {
    throw ShapeError("conv2d: kernel " + shape_to_string(w.shape()) +
                     " larger than padded input " + shape_to_string(x.shape()) +
                     " with pad " + std::to_string(pad));
  }
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  return d;
}

// cols: [cin*kh*kw, oh*ow]
void im2col(const Tensor& x, const ConvDims& d, std::size_t stride, std::size_t pad,
            DoubleVec& cols) {
  const std::size_t n = d.oh * d.ow;
  cols.assign(d.cin * d.kh * d.kw * n, 0.0);
  const double* xp = x.data();
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        double* row = cols.data() + (((c * d.kh) + ky) * d.kw + kx) * n;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          const double* src = xp + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          double* dst = row + oy * d.ow;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(d.w)) dst[ox] = src[ix];
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
void col2im_add(const DoubleVec& cols, const ConvDims& d, std::size_t stride,
                std::size_t pad, Tensor& dx) {
  const std::size_t n = d.oh * d.ow;
  double* xp = dx.data();
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const double* row = cols.data() + (((c * d.kh) + ky) * d.kw + kx) * n;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          double* dst = xp + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          const double* src = row + oy * d.ow;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(d.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool conv_is_1x1_fast(const ConvDims& d, std::size_t stride, std::size_t pad) {
  return d.kh == 1 && d.kw == 1 && stride == 1 && pad == 0;
}

struct ResizeAxis {
  std::vector<std::size_t> i0, i1;
  std::vector<double> frac;
};

ResizeAxis bilinear_axis(std::size_t in, std::size_t out) {
  ResizeAxis a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.frac.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = (out == 1) ? 0.0
                          : static_cast<double>(o) * static_cast<double>(in - 1) /
                                static_cast<double>(out - 1);
    std::size_t lo = static_cast<std::size_t>(s);
    if (lo >= in - 1) lo = in - 1;  // s == in-1 endpoint
    a.i0[o] = lo;
    a.i1[o] = std::min(lo + 1, in - 1);
    a.frac[o] = s - static_cast<double>(lo);
  }
  return a;
}

std::vector<std::size_t> mask_class_ids(const Tensor& probs, const Tensor& gt, const char* op) {
  check_rank(probs, 3, op);
  check_rank(gt, 2, op);
  const std::size_t c = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
  if (gt.dim(0) != h || gt.dim(1) != w) {
    throw ShapeError(std::string(op) + ": prediction " + shape_to_string(probs.shape()) +
                     " vs mask " + shape_to_string(gt.shape()));
  }
  std::vector<std::size_t> ids(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = gt.at(y, x);
      const long id = std::lround(v);
      if (id < 0 || id >= static_cast<long>(c)) {
        throw DataError(std::string(op) + ": class id " + std::to_string(v) +
                        " out of range [0," + std::to_string(c) + ") at pixel (" +
                        std::to_string(y) + "," + std::to_string(x) + ")");
      }
      ids[y * w + x] = static_cast<std::size_t>(id);
    }
  }
  return ids;
}

}  // namespace

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

namespace kern {

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_to_string(a.shape()) +
                     " x " + shape_to_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  MapM(out.data(), out.dim(0), out.dim(1)).noalias() =
      CMapM(a.data(), a.dim(0), a.dim(1)) * CMapM(b.data(), b.dim(0), b.dim(1));
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  Tensor out({d.cout, d.oh, d.ow});
  const std::size_t n = d.oh * d.ow;
  if (conv_is_1x1_fast(d, stride, pad)) {
    MapM(out.data(), d.cout, n).noalias() =
        CMapM(w.data(), d.cout, d.cin) * CMapM(x.data(), d.cin, n);
    return out;
  }
  auto& cols = col_scratch();
  im2col(x, d, stride, pad, cols);
  MapM(out.data(), d.cout, n).noalias() =
      CMapM(w.data(), d.cout, d.cin * d.kh * d.kw) * CMapM(cols.data(), d.cin * d.kh * d.kw, n);
  return out;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  check_rank(x, 3, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output dims must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == h && out_w == w) return x;  // bitwise passthrough
  const ResizeAxis ay = bilinear_axis(h, out_h);
  const ResizeAxis ax = bilinear_axis(w, out_w);
  Tensor out({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = x.data() + ch * h * w;
    double* dst = out.data() + ch * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double fy = ay.frac[oy];
      const double* r0 = src + ay.i0[oy] * w;
      const double* r1 = src + ay.i1[oy] * w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double fx = ax.frac[ox];
        const double top = r0[ax.i0[ox]] * (1.0 - fx) + r0[ax.i1[ox]] * fx;
        const double bot = r1[ax.i0[ox]] * (1.0 - fx) + r1[ax.i1[ox]] * fx;
        dst[oy * out_w + ox] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

Tensor nearest_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  check_rank(x, 3, "nearest_resize");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t sy = oy * h / out_h;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        out.at(ch, oy, ox) = x.at(ch, sy, ox * w / out_w);
      }
    }
  }
  return out;
}

Tensor nearest_resize_mask(const Tensor& mask, std::size_t out_h, std::size_t out_w) {
  check_rank(mask, 2, "nearest_resize_mask");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  Tensor out({out_h, out_w});
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const std::size_t sy = oy * h / out_h;
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      out.at(oy, ox) = mask.at(sy, ox * w / out_w);
    }
  }
  return out;
}

Tensor softmax_channels(const Tensor& x) {
  check_rank(x, 3, "softmax_channels");
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  Tensor out(x.shape());
  const double* xp = x.data();
  double* yp = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    double m = xp[i];
    for (std::size_t ch = 1; ch < c; ++ch) m = std::max(m, xp[ch * n + i]);
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double e = std::exp(xp[ch * n + i] - m);
      yp[ch * n + i] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (std::size_t ch = 0; ch < c; ++ch) yp[ch * n + i] *= inv;
  }
  return out;
}

Tensor fuse_text_conv(const Tensor& feat, const Tensor& text, const Tensor& w, const Tensor& b) {
  check_rank(feat, 3, "fuse_text_conv");
  check_rank(text, 1, "fuse_text_conv");
  check_rank(w, 2, "fuse_text_conv");
  const std::size_t f = feat.dim(0), n = feat.dim(1) * feat.dim(2);
  const std::size_t d = text.dim(0), co = w.dim(0);
  if (w.dim(1) != f + d) {
    throw ShapeError("fuse_text_conv: weight " + shape_to_string(w.shape()) +
                     " does not match feature width " + std::to_string(f) + " + text width " +
                     std::to_string(d));
  }
  if (b.size() != co) {
    throw ShapeError("fuse_text_conv: bias " + shape_to_string(b.shape()) + " vs " +
                     std::to_string(co) + " output channels");
  }
  Tensor out({co, feat.dim(1), feat.dim(2)});
  CMapM wm(w.data(), co, f + d);
  MapM ym(out.data(), co, n);
  ym.noalias() = wm.leftCols(static_cast<Eigen::Index>(f)) * CMapM(feat.data(), f, n);
  Eigen::VectorXd tb = wm.rightCols(static_cast<Eigen::Index>(d)) * CMapV(text.data(), d);
  tb += CMapV(b.data(), co);
  ym.colwise() += tb;
  return out;
}

}  // namespace kern

// ---------------------------------------------------------------------------
// tape ops
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tensor y = kern::matmul(a->value, b->value);
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    const std::size_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    CMapM g(self.grad.data(), m, n);
    if (a->requires_grad) {
      MapM(a->ensure_grad().data(), m, k).noalias() += g * CMapM(b->value.data(), k, n).transpose();
    }
    if (b->requires_grad) {
      MapM(b->ensure_grad().data(), k, n).noalias() += CMapM(a->value.data(), m, k).transpose() * g;
    }
  });
}

Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t pad) {
  Tensor y = kern::conv2d(x->value, w->value, stride, pad);
  return make_node(std::move(y), {x, w}, [x, w, stride, pad](Node& self) {
    const ConvDims d = conv_dims(x->value, w->value, stride, pad);
    const std::size_t n = d.oh * d.ow;
    const std::size_t kdim = d.cin * d.kh * d.kw;
    CMapM g(self.grad.data(), d.cout, n);
    if (conv_is_1x1_fast(d, stride, pad)) {
      if (w->requires_grad) {
        MapM(w->ensure_grad().data(), d.cout, d.cin).noalias() +=
            g * CMapM(x->value.data(), d.cin, n).transpose();
      }
      if (x->requires_grad) {
        MapM(x->ensure_grad().data(), d.cin, n).noalias() +=
            CMapM(w->value.data(), d.cout, d.cin).transpose() * g;
      }
      return;
    }
    if (w->requires_grad) {
      auto& cols = col_scratch();
      im2col(x->value, d, stride, pad, cols);
      MapM(w->ensure_grad().data(), d.cout, kdim).noalias() +=
          g * CMapM(cols.data(), kdim, n).transpose();
    }
    if (x->requires_grad) {
      DoubleVec dcols(kdim * n);
      MapM(dcols.data(), kdim, n).noalias() =
          CMapM(w->value.data(), d.cout, kdim).transpose() * g;
      col2im_add(dcols, d, stride, pad, x->ensure_grad());
    }
  });
}

Var bilinear_resize(const Var& x, std::size_t out_h, std::size_t out_w) {
  Tensor y = kern::bilinear_resize(x->value, out_h, out_w);
  return make_node(std::move(y), {x}, [x, out_h, out_w](Node& self) {
    if (!x->requires_grad) return;
    Tensor& dx = x->ensure_grad();
    const std::size_t c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (out_h == h && out_w == w) {
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
      return;
    }
    const ResizeAxis ay = bilinear_axis(h, out_h);
    const ResizeAxis ax = bilinear_axis(w, out_w);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* gp = self.grad.data() + ch * out_h * out_w;
      double* dst = dx.data() + ch * h * w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const double fy = ay.frac[oy];
        double* r0 = dst + ay.i0[oy] * w;
        double* r1 = dst + ay.i1[oy] * w;
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const double fx = ax.frac[ox];
          const double g = gp[oy * out_w + ox];
          r0[ax.i0[ox]] += g * (1.0 - fy) * (1.0 - fx);
          r0[ax.i1[ox]] += g * (1.0 - fy) * fx;
          r1[ax.i0[ox]] += g * fy * (1.0 - fx);
          r1[ax.i1[ox]] += g * fy * fx;
        }
      }
    }
  });
}

Var softmax_channels(const Var& x) {
  Tensor y = kern::softmax_channels(x->value);
  return make_node(std::move(y), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    const std::size_t c = x->value.dim(0), n = x->value.dim(1) * x->value.dim(2);
    const double* yp = self.value.data();
    const double* gp = self.grad.data();
    double* dx = x->ensure_grad().data();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) dot += gp[ch * n + i] * yp[ch * n + i];
      for (std::size_t ch = 0; ch < c; ++ch) {
        dx[ch * n + i] += yp[ch * n + i] * (gp[ch * n + i] - dot);
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) {
    throw ShapeError("add: shape mismatch " + shape_to_string(a->value.shape()) + " vs " +
                     shape_to_string(b->value.shape()));
  }
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    for (const Var& p : {a, b}) {
      if (!p->requires_grad) continue;
      Tensor& d = p->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) {
    throw ShapeError("sub: shape mismatch " + shape_to_string(a->value.shape()) + " vs " +
                     shape_to_string(b->value.shape()));
  }
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b->value[i];
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      Tensor& d = a->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
    if (b->requires_grad) {
      Tensor& d = b->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) {
    throw ShapeError("mul: shape mismatch " + shape_to_string(a->value.shape()) + " vs " +
                     shape_to_string(b->value.shape()));
  }
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b->value[i];
  return make_node(std::move(y), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      Tensor& d = a->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor& d = b->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * a->value[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor y = a->value;
  for (double& v : y.values()) v *= c;
  return make_node(std::move(y), {a}, [a, c](Node& self) {
    if (!a->requires_grad) return;
    Tensor& d = a->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * self.grad[i];
  });
}

Var add_const(const Var& a, double c) {
  Tensor y = a->value;
  for (double& v : y.values()) v += c;
  return make_node(std::move(y), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& d = a->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("add_n: empty operand list");
  Tensor y = xs[0]->value;
  for (std::size_t k = 1; k < xs.size(); ++k) {
    if (!xs[k]->value.same_shape(y)) {
      throw ShapeError("add_n: shape mismatch " + shape_to_string(y.shape()) + " vs " +
                       shape_to_string(xs[k]->value.shape()));
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += xs[k]->value[i];
  }
  return make_node(std::move(y), xs, [xs](Node& self) {
    for (const Var& p : xs) {
      if (!p->requires_grad) continue;
      Tensor& d = p->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Var relu(const Var& a) {
  Tensor y = a->value;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(y), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& d = a->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (a->value[i] > 0.0) d[i] += self.grad[i];
    }
  });
}

Var tanh(const Var& a) {
  Tensor y = a->value;
  for (double& v : y.values()) v = std::tanh(v);
  return make_node(std::move(y), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& d = a->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double t = self.value[i];
      d[i] += self.grad[i] * (1.0 - t * t);
    }
  });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a->value.values()) s += v;
  return make_node(Tensor::scalar(s), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& d = a->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g;
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_product(shape) != a->value.size()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a->value.shape()) + " as " +
                     shape_to_string(shape));
  }
  Tensor y(std::move(shape), a->value.values());
  return make_node(std::move(y), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& d = a->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Var add_channel_bias(const Var& x, const Var& b) {
  check_rank(x->value, 3, "add_channel_bias");
  const std::size_t c = x->value.dim(0), n = x->value.dim(1) * x->value.dim(2);
  if (b->value.size() != c) {
    throw ShapeError("add_channel_bias: bias " + shape_to_string(b->value.shape()) + " vs " +
                     std::to_string(c) + " channels");
  }
  Tensor y = x->value;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double bv = b->value[ch];
    double* row = y.data() + ch * n;
    for (std::size_t i = 0; i < n; ++i) row[i] += bv;
  }
  return make_node(std::move(y), {x, b}, [x, b, c, n](Node& self) {
    if (x->requires_grad) {
      Tensor& d = x->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
    if (b->requires_grad) {
      Tensor& d = b->ensure_grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* row = self.grad.data() + ch * n;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += row[i];
        d[ch] += s;
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  check_rank(x->value, 1, "linear");
  check_rank(w->value, 2, "linear");
  const std::size_t n = x->value.dim(0), m = w->value.dim(1);
  if (w->value.dim(0) != n || b->value.size() != m) {
    throw ShapeError("linear: x " + shape_to_string(x->value.shape()) + ", w " +
                     shape_to_string(w->value.shape()) + ", b " +
                     shape_to_string(b->value.shape()));
  }
  Tensor y({m});
  MapV(y.data(), m).noalias() =
      CMapM(w->value.data(), n, m).transpose() * CMapV(x->value.data(), n) +
      CMapV(b->value.data(), m);
  return make_node(std::move(y), {x, w, b}, [x, w, b, n, m](Node& self) {
    CMapV g(self.grad.data(), m);
    if (x->requires_grad) {
      MapV(x->ensure_grad().data(), n).noalias() += CMapM(w->value.data(), n, m) * g;
    }
    if (w->requires_grad) {
      MapM(w->ensure_grad().data(), n, m).noalias() += CMapV(x->value.data(), n) * g.transpose();
    }
    if (b->requires_grad) {
      MapV(b->ensure_grad().data(), m).noalias() += g;
    }
  });
}

Var embed_mean(const Var& table, const std::vector<std::size_t>& ids, std::size_t pad_id) {
  check_rank(table->value, 2, "embed_mean");
  const std::size_t v = table->value.dim(0), d = table->value.dim(1);
  // accumulate (count, row) in ascending id order so the mean is bitwise
  // invariant under token permutation
  std::map<std::size_t, std::size_t> counts;
  std::size_t n = 0;
  for (std::size_t id : ids) {
    if (id >= v) {
      throw DataError("embed_mean: token id " + std::to_string(id) +
                      " out of range for vocabulary of size " + std::to_string(v));
    }
    if (id != pad_id) {
      ++counts[id];
      ++n;
    }
  }
  Tensor y({d});
  if (n > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    for (const auto& [id, count] : counts) {
      const double* row = table->value.data() + id * d;
      const double w = static_cast<double>(count) * inv;
      for (std::size_t j = 0; j < d; ++j) y[j] += row[j] * w;
    }
  }
  return make_node(std::move(y), {table}, [table, counts, n, d](Node& self) {
    if (!table->requires_grad || n == 0) return;
    Tensor& dt = table->ensure_grad();
    const double inv = 1.0 / static_cast<double>(n);
    for (const auto& [id, count] : counts) {
      double* row = dt.data() + id * d;
      const double w = static_cast<double>(count) * inv;
      for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[j] * w;
    }
  });
}

Var fuse_text_conv(const Var& feat, const Var& text, const Var& w, const Var& b) {
  Tensor y = kern::fuse_text_conv(feat->value, text->value, w->value, b->value);
  return make_node(std::move(y), {feat, text, w, b}, [feat, text, w, b](Node& self) {
    const std::size_t f = feat->value.dim(0);
    const std::size_t n = feat->value.dim(1) * feat->value.dim(2);
    const std::size_t d = text->value.dim(0), co = w->value.dim(0);
    const auto fi = static_cast<Eigen::Index>(f);
    const auto di = static_cast<Eigen::Index>(d);
    CMapM g(self.grad.data(), co, n);
    CMapM wm(w->value.data(), co, f + d);
    const Eigen::VectorXd rowsum = g.rowwise().sum();
    if (feat->requires_grad) {
      MapM(feat->ensure_grad().data(), f, n).noalias() +=
          wm.leftCols(fi).transpose() * g;
    }
    if (w->requires_grad) {
      MapM dw(w->ensure_grad().data(), co, f + d);
      dw.leftCols(fi).noalias() += g * CMapM(feat->value.data(), f, n).transpose();
      dw.rightCols(di).noalias() += rowsum * CMapV(text->value.data(), d).transpose();
    }
    if (text->requires_grad) {
      MapV(text->ensure_grad().data(), d).noalias() += wm.rightCols(di).transpose() * rowsum;
    }
    if (b->requires_grad) {
      MapV(b->ensure_grad().data(), co).noalias() += rowsum;
    }
  });
}

Var global_avg_pool(const Var& x) {
  check_rank(x->value, 3, "global_avg_pool");
  const std::size_t f = x->value.dim(0), n = x->value.dim(1) * x->value.dim(2);
  Tensor y({f});
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t ch = 0; ch < f; ++ch) {
    const double* row = x->value.data() + ch * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += row[i];
    y[ch] = s * inv;
  }
  return make_node(std::move(y), {x}, [x, f, n, inv](Node& self) {
    if (!x->requires_grad) return;
    Tensor& d = x->ensure_grad();
    for (std::size_t ch = 0; ch < f; ++ch) {
      const double g = self.grad[ch] * inv;
      double* row = d.data() + ch * n;
      for (std::size_t i = 0; i < n; ++i) row[i] += g;
    }
  });
}

Var scale_combine(const std::vector<Var>& maps, const Var& weights) {
  if (maps.empty()) throw ContractError("scale_combine: empty map list");
  const std::size_t k = maps.size();
  if (weights->value.size() != k) {
    throw ShapeError("scale_combine: " + std::to_string(k) + " maps vs weights " +
                     shape_to_string(weights->value.shape()));
  }
  for (const Var& m : maps) {
    if (!m->value.same_shape(maps[0]->value)) {
      throw ShapeError("scale_combine: map shape mismatch " +
                       shape_to_string(maps[0]->value.shape()) + " vs " +
                       shape_to_string(m->value.shape()));
    }
  }
  Tensor y = Tensor::zeros(maps[0]->value.shape());
  for (std::size_t j = 0; j < k; ++j) {
    const double wj = weights->value[j];
    const double* src = maps[j]->value.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += wj * src[i];
  }
  std::vector<Var> parents = maps;
  parents.push_back(weights);
  return make_node(std::move(y), std::move(parents), [maps, weights, k](Node& self) {
    for (std::size_t j = 0; j < k; ++j) {
      const double* src = maps[j]->value.data();
      if (maps[j]->requires_grad) {
        const double wj = weights->value[j];
        Tensor& d = maps[j]->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += wj * self.grad[i];
      }
      if (weights->requires_grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) s += self.grad[i] * src[i];
        weights->ensure_grad()[j] += s;
      }
    }
  });
}

Var nll_mask(const Var& probs, const Tensor& gt, double eps) {
  const std::vector<std::size_t> ids = mask_class_ids(probs->value, gt, "nll_mask");
  const std::size_t n = ids.size();
  const std::size_t hw = probs->value.dim(1) * probs->value.dim(2);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss -= std::log(std::max(probs->value[ids[i] * hw + i], eps));
  }
  loss /= static_cast<double>(n);
  return make_node(Tensor::scalar(loss), {probs}, [probs, ids, eps, n, hw](Node& self) {
    if (!probs->requires_grad) return;
    Tensor& d = probs->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = probs->value[ids[i] * hw + i];
      if (p > eps) d[ids[i] * hw + i] -= g / p;
    }
  });
}

Var cosine_distance(const Var& u, const Var& v) {
  check_rank(u->value, 1, "cosine_distance");
  if (!u->value.same_shape(v->value)) {
    throw ShapeError("cosine_distance: shape mismatch " + shape_to_string(u->value.shape()) +
                     " vs " + shape_to_string(v->value.shape()));
  }
  const std::size_t n = u->value.dim(0);
  CMapV uv(u->value.data(), n), vv(v->value.data(), n);
  const double nu = uv.norm(), nv = vv.norm();
  constexpr double kNormFloor = 1e-12;
  if (nu < kNormFloor || nv < kNormFloor) {
    // Degenerate pair: constant distance 1, no gradient.
    return make_node(Tensor::scalar(1.0), {u, v}, [](Node&) {});
  }
  const double dot = uv.dot(vv);
  const double dval = 1.0 - dot / (nu * nv);
  return make_node(Tensor::scalar(dval), {u, v}, [u, v, n, nu, nv, dot](Node& self) {
    const double g = self.grad[0];
    CMapV uv(u->value.data(), n), vv(v->value.data(), n);
    if (u->requires_grad) {
      MapV du(u->ensure_grad().data(), n);
      du.noalias() += g * (dot / (nu * nu * nu * nv) * uv - vv / (nu * nv));
    }
    if (v->requires_grad) {
      MapV dv(v->ensure_grad().data(), n);
      dv.noalias() += g * (dot / (nv * nv * nv * nu) * vv - uv / (nu * nv));
    }
  });
}

}  // namespace langseg
