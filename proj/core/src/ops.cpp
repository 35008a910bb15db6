#include "paec/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

namespace paec::ag {
namespace {

template <typename Real>
using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapR = Eigen::Map<MatR<Real>>;
template <typename Real>
using CMapR = Eigen::Map<const MatR<Real>>;

template <typename Real>
using Backward = std::function<std::function<void()>(Node<Real>&)>;

// Gradient buffer of an input, or nullptr when it does not need one.
template <typename Real>
Real* grad_of(Node<Real>* n) {
  return (n && n->requires_grad) ? n->grad_buffer() : nullptr;
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                    " vs " + shape_string(b.shape()));
}

template <typename Real>
void check_bias(const Tensor<Real>& bias, std::size_t channels, const char* op) {
  if (!bias.defined()) return;
  check(bias.size() == channels, std::string(op) + ": bias has " + std::to_string(bias.size()) +
                                     " entries, expected " + std::to_string(channels));
}

// Adds bias[c] to every element of row c of a [channels][cols] buffer.
template <typename Real>
void add_row_bias(std::vector<Real>& out, const Tensor<Real>& bias, std::size_t cols) {
  if (!bias.defined()) return;
  const auto b = bias.data();
  for (std::size_t c = 0; c < b.size(); ++c) {
    Real* row = out.data() + c * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += b[c];
  }
}

template <typename Real>
void accumulate_row_sums(Real* db, const Real* g, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    Real acc = 0;
    const Real* row = g + r * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j];
    db[r] += acc;
  }
}

// Shared geometry of the causal convolution family.
struct ConvGeometry {
  std::size_t cin, cout, frames, bins_in, bins_out, kt, kf, stride, dilation;
  std::size_t taps() const { return kt * kf; }
  std::size_t shift(std::size_t t_tap) const { return (kt - 1 - t_tap) * dilation; }
};

// cols[(ci, kt, kf)][(t, fo)] = x[ci][t - shift(kt)][fo * stride + kf]
template <typename Real>
void im2col(const ConvGeometry& g, const Real* x, Real* cols) {
  const std::size_t n = g.frames * g.bins_out;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t a = 0; a < g.kt; ++a) {
      const std::size_t sh = g.shift(a);
      for (std::size_t b = 0; b < g.kf; ++b) {
        Real* row = cols + ((ci * g.kt + a) * g.kf + b) * n;
        for (std::size_t t = 0; t < g.frames; ++t) {
          Real* dst = row + t * g.bins_out;
          if (t < sh) {
            std::fill(dst, dst + g.bins_out, Real(0));
            continue;
          }
          const Real* src = x + (ci * g.frames + (t - sh)) * g.bins_in + b;
          for (std::size_t fo = 0; fo < g.bins_out; ++fo) dst[fo] = src[fo * g.stride];
        }
      }
    }
  }
}

// Adjoint of im2col: dx[ci][t - shift][fo * stride + kf] += cols[...].
template <typename Real>
void col2im_add(const ConvGeometry& g, const Real* cols, Real* dx) {
  const std::size_t n = g.frames * g.bins_out;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t a = 0; a < g.kt; ++a) {
      const std::size_t sh = g.shift(a);
      for (std::size_t b = 0; b < g.kf; ++b) {
        const Real* row = cols + ((ci * g.kt + a) * g.kf + b) * n;
        for (std::size_t t = sh; t < g.frames; ++t) {
          const Real* src = row + t * g.bins_out;
          Real* dst = dx + (ci * g.frames + (t - sh)) * g.bins_in + b;
          for (std::size_t fo = 0; fo < g.bins_out; ++fo) dst[fo * g.stride] += src[fo];
        }
      }
    }
  }
}

// Transposed layout: input bins are the "small" side.
// cols[(co, kt, kf)][(t, fi)] contributes to out[co][t + shift][fi * stride + kf].
template <typename Real>
void tcol2im_add(const ConvGeometry& g, const Real* cols, Real* out) {
  const std::size_t n = g.frames * g.bins_in;
  for (std::size_t co = 0; co < g.cout; ++co) {
    for (std::size_t a = 0; a < g.kt; ++a) {
      const std::size_t sh = g.shift(a);
      for (std::size_t b = 0; b < g.kf; ++b) {
        const Real* row = cols + ((co * g.kt + a) * g.kf + b) * n;
        for (std::size_t t = 0; t + sh < g.frames; ++t) {
          const Real* src = row + t * g.bins_in;
          Real* dst = out + (co * g.frames + t + sh) * g.bins_out + b;
          for (std::size_t fi = 0; fi < g.bins_in; ++fi) dst[fi * g.stride] += src[fi];
        }
      }
    }
  }
}

template <typename Real>
void tim2col(const ConvGeometry& g, const Real* gout, Real* cols) {
  const std::size_t n = g.frames * g.bins_in;
  for (std::size_t co = 0; co < g.cout; ++co) {
    for (std::size_t a = 0; a < g.kt; ++a) {
      const std::size_t sh = g.shift(a);
      for (std::size_t b = 0; b < g.kf; ++b) {
        Real* row = cols + ((co * g.kt + a) * g.kf + b) * n;
        for (std::size_t t = 0; t < g.frames; ++t) {
          Real* dst = row + t * g.bins_in;
          if (t + sh >= g.frames) {
            std::fill(dst, dst + g.bins_in, Real(0));
            continue;
          }
          const Real* src = gout + (co * g.frames + t + sh) * g.bins_out + b;
          for (std::size_t fi = 0; fi < g.bins_in; ++fi) dst[fi] = src[fi * g.stride];
        }
      }
    }
  }
}

template <typename Real>
Tensor<Real> conv_forward(const Tensor<Real>& x, const Tensor<Real>& weight,
                          const Tensor<Real>& bias, const ConvGeometry& g, Shape out_shape) {
  const std::size_t k = g.cin * g.taps();
  const std::size_t n = g.frames * g.bins_out;
  auto cols = std::make_shared<std::vector<Real>>(k * n);
  im2col(g, x.data().data(), cols->data());
  std::vector<Real> out(g.cout * n);
  MapR<Real>(out.data(), g.cout, n).noalias() =
      CMapR<Real>(weight.data().data(), g.cout, k) * CMapR<Real>(cols->data(), k, n);
  add_row_bias(out, bias, n);

  Node<Real>* xn = x.node();
  Node<Real>* wn = weight.node();
  Node<Real>* bn = bias.defined() ? bias.node() : nullptr;
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, wn, bn, cols, g, k, n] {
      CMapR<Real> go(o.grad.data(), g.cout, n);
      if (Real* dw = grad_of(wn)) {
        MapR<Real>(dw, g.cout, k).noalias() += go * CMapR<Real>(cols->data(), k, n).transpose();
      }
      if (Real* db = grad_of(bn)) accumulate_row_sums(db, o.grad.data(), g.cout, n);
      if (Real* dx = grad_of(xn)) {
        std::vector<Real> dcols(k * n);
        MapR<Real>(dcols.data(), k, n).noalias() =
            CMapR<Real>(wn->value.data(), g.cout, k).transpose() * go;
        col2im_add(g, dcols.data(), dx);
      }
    });
  };
  return make_result<Real>(std::move(out_shape), std::move(out), {&x, &weight, &bias}, bw);
}

template <typename Real>
Tensor<Real> binary_elementwise(const Tensor<Real>& a, const Tensor<Real>& b, int kind) {
  require_same_shape(a, b, kind == 0 ? "add" : kind == 1 ? "sub" : "mul");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = kind == 0 ? av[i] + bv[i] : kind == 1 ? av[i] - bv[i] : av[i] * bv[i];
  }
  Node<Real>* an = a.node();
  Node<Real>* bn = b.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, an, bn, kind] {
      const std::size_t size = o.grad.size();
      const Real* go = o.grad.data();
      if (Real* da = grad_of(an)) {
        if (kind == 2) {
          for (std::size_t i = 0; i < size; ++i) da[i] += go[i] * bn->value[i];
        } else {
          for (std::size_t i = 0; i < size; ++i) da[i] += go[i];
        }
      }
      if (Real* db = grad_of(bn)) {
        if (kind == 2) {
          for (std::size_t i = 0; i < size; ++i) db[i] += go[i] * an->value[i];
        } else if (kind == 1) {
          for (std::size_t i = 0; i < size; ++i) db[i] -= go[i];
        } else {
          for (std::size_t i = 0; i < size; ++i) db[i] += go[i];
        }
      }
    });
  };
  return make_result<Real>(a.shape(), std::move(out), {&a, &b}, bw);
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_elementwise(a, b, 0);
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_elementwise(a, b, 1);
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_elementwise(a, b, 2);
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  Node<Real>* an = a.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, an, factor] {
      if (Real* da = grad_of(an)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) da[i] += factor * o.grad[i];
      }
    });
  };
  return make_result<Real>(a.shape(), std::move(out), {&a}, bw);
}

template <typename Real>
Tensor<Real> square(const Tensor<Real>& a) {
  std::vector<Real> out(a.size());
  const auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  Node<Real>* an = a.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, an] {
      if (Real* da = grad_of(an)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) da[i] += Real(2) * an->value[i] * o.grad[i];
      }
    });
  };
  return make_result<Real>(a.shape(), std::move(out), {&a}, bw);
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  std::vector<Real> out(a.size());
  const auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Real(1) / (Real(1) + std::exp(-av[i]));
  Node<Real>* an = a.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, an] {
      if (Real* da = grad_of(an)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          const Real y = o.value[i];
          da[i] += o.grad[i] * y * (Real(1) - y);
        }
      }
    });
  };
  return make_result<Real>(a.shape(), std::move(out), {&a}, bw);
}

template <typename Real>
Tensor<Real> prelu(const Tensor<Real>& x, const Tensor<Real>& alpha) {
  check(x.rank() >= 1 && alpha.size() == x.dim(0),
        "prelu: alpha must have one entry per channel of " + shape_string(x.shape()));
  const std::size_t channels = x.dim(0);
  const std::size_t inner = x.size() / channels;
  std::vector<Real> out(x.size());
  const auto xv = x.data();
  const auto al = alpha.data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = c * inner; i < (c + 1) * inner; ++i) {
      out[i] = xv[i] >= Real(0) ? xv[i] : al[c] * xv[i];
    }
  }
  Node<Real>* xn = x.node();
  Node<Real>* an = alpha.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, an, channels, inner] {
      Real* dx = grad_of(xn);
      Real* dal = grad_of(an);
      for (std::size_t c = 0; c < channels; ++c) {
        Real acc = 0;
        const Real a = an->value[c];
        for (std::size_t i = c * inner; i < (c + 1) * inner; ++i) {
          const Real v = xn->value[i];
          if (v >= Real(0)) {
            if (dx) dx[i] += o.grad[i];
          } else {
            if (dx) dx[i] += a * o.grad[i];
            acc += v * o.grad[i];
          }
        }
        if (dal) dal[c] += acc;
      }
    });
  };
  return make_result<Real>(x.shape(), std::move(out), {&x, &alpha}, bw);
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  Node<Real>* xn = x.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn] {
      if (Real* dx = grad_of(xn)) {
        const Real g = o.grad[0];
        for (std::size_t i = 0; i < xn->value.size(); ++i) dx[i] += g;
      }
    });
  };
  return make_result<Real>({}, {acc}, {&x}, bw);
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  check(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), Real(1) / static_cast<Real>(x.size()));
}

template <typename Real>
Tensor<Real> magnitude(const Tensor<Real>& re, const Tensor<Real>& im) {
  require_same_shape(re, im, "magnitude");
  std::vector<Real> out(re.size());
  const auto rv = re.data();
  const auto iv = im.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(rv[i] * rv[i] + iv[i] * iv[i]);
  Node<Real>* rn = re.node();
  Node<Real>* in = im.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, rn, in] {
      Real* dr = grad_of(rn);
      Real* di = grad_of(in);
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const Real m = o.value[i];
        if (m <= Real(0)) continue;
        const Real g = o.grad[i] / m;
        if (dr) dr[i] += g * rn->value[i];
        if (di) di[i] += g * in->value[i];
      }
    });
  };
  return make_result<Real>(re.shape(), std::move(out), {&re, &im}, bw);
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  check(shape_size(shape) == x.size(),
        "reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  std::vector<Real> out(x.data().begin(), x.data().end());
  Node<Real>* xn = x.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn] {
      if (Real* dx = grad_of(xn)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) dx[i] += o.grad[i];
      }
    });
  };
  return make_result<Real>(std::move(shape), std::move(out), {&x}, bw);
}

template <typename Real>
Tensor<Real> concat_channels(const Tensor<Real>& a, const Tensor<Real>& b) {
  check(a.rank() >= 1 && a.rank() == b.rank() &&
            std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1),
        "concat_channels: incompatible shapes " + shape_string(a.shape()) + " and " +
            shape_string(b.shape()));
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<Real> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  Node<Real>* an = a.node();
  Node<Real>* bn = b.node();
  const std::size_t na = a.size();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, an, bn, na] {
      if (Real* da = grad_of(an)) {
        for (std::size_t i = 0; i < na; ++i) da[i] += o.grad[i];
      }
      if (Real* db = grad_of(bn)) {
        for (std::size_t i = na; i < o.grad.size(); ++i) db[i - na] += o.grad[i];
      }
    });
  };
  return make_result<Real>(std::move(shape), std::move(out), {&a, &b}, bw);
}

template <typename Real>
Tensor<Real> tile_time(const Tensor<Real>& v, std::size_t frames) {
  const std::size_t d = v.size();
  std::vector<Real> out(d * frames);
  const auto vv = v.data();
  for (std::size_t i = 0; i < d; ++i) std::fill_n(out.begin() + i * frames, frames, vv[i]);
  Node<Real>* vn = v.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, vn, d, frames] {
      if (Real* dv = grad_of(vn)) accumulate_row_sums(dv, o.grad.data(), d, frames);
    });
  };
  return make_result<Real>({d, frames}, std::move(out), {&v}, bw);
}

template <typename Real>
Tensor<Real> flatten_freq(const Tensor<Real>& x) {
  check(x.rank() == 3, "flatten_freq: expected [C][T][F], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(0), t = x.dim(1), f = x.dim(2);
  std::vector<Real> out(x.size());
  const auto xv = x.data();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t fi = 0; fi < f; ++fi)
        out[(ci * f + fi) * t + ti] = xv[(ci * t + ti) * f + fi];
  Node<Real>* xn = x.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, c, t, f] {
      if (Real* dx = grad_of(xn)) {
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t ti = 0; ti < t; ++ti)
            for (std::size_t fi = 0; fi < f; ++fi)
              dx[(ci * t + ti) * f + fi] += o.grad[(ci * f + fi) * t + ti];
      }
    });
  };
  return make_result<Real>({c * f, t}, std::move(out), {&x}, bw);
}

template <typename Real>
Tensor<Real> unflatten_freq(const Tensor<Real>& x, std::size_t bins) {
  check(x.rank() == 2 && bins > 0 && x.dim(0) % bins == 0,
        "unflatten_freq: cannot split " + shape_string(x.shape()) + " into bins of " +
            std::to_string(bins));
  const std::size_t c = x.dim(0) / bins, t = x.dim(1), f = bins;
  std::vector<Real> out(x.size());
  const auto xv = x.data();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t fi = 0; fi < f; ++fi)
        out[(ci * t + ti) * f + fi] = xv[(ci * f + fi) * t + ti];
  Node<Real>* xn = x.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, c, t, f] {
      if (Real* dx = grad_of(xn)) {
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t ti = 0; ti < t; ++ti)
            for (std::size_t fi = 0; fi < f; ++fi)
              dx[(ci * f + fi) * t + ti] += o.grad[(ci * t + ti) * f + fi];
      }
    });
  };
  return make_result<Real>({c, t, f}, std::move(out), {&x}, bw);
}

template <typename Real>
Tensor<Real> conv2d_causal(const Tensor<Real>& x, const Tensor<Real>& weight,
                           const Tensor<Real>& bias, std::size_t stride_f, std::size_t dilation_t) {
  check(x.rank() == 3, "conv2d_causal: input must be [C][T][F], got " + shape_string(x.shape()));
  check(weight.rank() == 4, "conv2d_causal: weight must be [Cout][Cin][KT][KF]");
  check(weight.dim(1) == x.dim(0), "conv2d_causal: weight expects " +
                                       std::to_string(weight.dim(1)) + " input channels, got " +
                                       std::to_string(x.dim(0)));
  check(stride_f >= 1 && dilation_t >= 1, "conv2d_causal: stride and dilation must be positive");
  const std::size_t kf = weight.dim(3);
  check(kf <= x.dim(2), "conv2d_causal: kernel width " + std::to_string(kf) +
                            " exceeds frequency size " + std::to_string(x.dim(2)));
  ConvGeometry g{x.dim(0), weight.dim(0), x.dim(1), x.dim(2), (x.dim(2) - kf) / stride_f + 1,
                 weight.dim(2), kf, stride_f, dilation_t};
  check_bias(bias, g.cout, "conv2d_causal");
  return conv_forward(x, weight, bias, g, {g.cout, g.frames, g.bins_out});
}

template <typename Real>
Tensor<Real> conv1d_causal(const Tensor<Real>& x, const Tensor<Real>& weight,
                           const Tensor<Real>& bias, std::size_t dilation) {
  check(x.rank() == 2, "conv1d_causal: input must be [C][T], got " + shape_string(x.shape()));
  check(weight.rank() == 3, "conv1d_causal: weight must be [Cout][Cin][K]");
  check(weight.dim(1) == x.dim(0), "conv1d_causal: channel mismatch");
  check(dilation >= 1, "conv1d_causal: dilation must be positive");
  ConvGeometry g{x.dim(0), weight.dim(0), x.dim(1), 1, 1, weight.dim(2), 1, 1, dilation};
  check_bias(bias, g.cout, "conv1d_causal");
  return conv_forward(x, weight, bias, g, {g.cout, g.frames});
}

template <typename Real>
Tensor<Real> tconv2d_causal(const Tensor<Real>& x, const Tensor<Real>& weight,
                            const Tensor<Real>& bias, std::size_t stride_f, std::size_t out_bins) {
  check(x.rank() == 3, "tconv2d_causal: input must be [C][T][F], got " + shape_string(x.shape()));
  check(weight.rank() == 4, "tconv2d_causal: weight must be [Cin][Cout][KT][KF]");
  check(weight.dim(0) == x.dim(0), "tconv2d_causal: channel mismatch");
  check(stride_f >= 1, "tconv2d_causal: stride must be positive");
  const std::size_t kf = weight.dim(3);
  const std::size_t natural = (x.dim(2) - 1) * stride_f + kf;
  check(out_bins >= natural && out_bins - natural < stride_f,
        "tconv2d_causal: " + std::to_string(x.dim(2)) + " bins cannot expand to " +
            std::to_string(out_bins) + " with stride " + std::to_string(stride_f) +
            " and kernel " + std::to_string(kf));
  ConvGeometry g{x.dim(0), weight.dim(1), x.dim(1), x.dim(2), out_bins, weight.dim(2), kf,
                 stride_f, 1};
  check_bias(bias, g.cout, "tconv2d_causal");

  const std::size_t kp = g.cout * g.taps();
  const std::size_t n = g.frames * g.bins_in;
  std::vector<Real> cols(kp * n);
  MapR<Real>(cols.data(), kp, n).noalias() =
      CMapR<Real>(weight.data().data(), g.cin, kp).transpose() *
      CMapR<Real>(x.data().data(), g.cin, n);
  std::vector<Real> out(g.cout * g.frames * g.bins_out, Real(0));
  tcol2im_add(g, cols.data(), out.data());
  add_row_bias(out, bias, g.frames * g.bins_out);

  Node<Real>* xn = x.node();
  Node<Real>* wn = weight.node();
  Node<Real>* bn = bias.defined() ? bias.node() : nullptr;
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, wn, bn, g, kp, n] {
      if (Real* db = grad_of(bn)) {
        accumulate_row_sums(db, o.grad.data(), g.cout, g.frames * g.bins_out);
      }
      Real* dw = grad_of(wn);
      Real* dx = grad_of(xn);
      if (!dw && !dx) return;
      std::vector<Real> dcols(kp * n);
      tim2col(g, o.grad.data(), dcols.data());
      CMapR<Real> dc(dcols.data(), kp, n);
      if (dw) {
        MapR<Real>(dw, g.cin, kp).noalias() +=
            CMapR<Real>(xn->value.data(), g.cin, n) * dc.transpose();
      }
      if (dx) {
        MapR<Real>(dx, g.cin, n).noalias() += CMapR<Real>(wn->value.data(), g.cin, kp) * dc;
      }
    });
  };
  return make_result<Real>({g.cout, g.frames, g.bins_out}, std::move(out), {&x, &weight, &bias},
                           bw);
}

template <typename Real>
Tensor<Real> pointwise(const Tensor<Real>& x, const Tensor<Real>& weight,
                       const Tensor<Real>& bias) {
  check(x.rank() >= 1 && weight.rank() == 2 && weight.dim(1) == x.dim(0),
        "pointwise: weight " + shape_string(weight.shape()) + " does not match input " +
            shape_string(x.shape()));
  const std::size_t cin = x.dim(0), cout = weight.dim(0);
  const std::size_t n = x.size() / cin;
  check_bias(bias, cout, "pointwise");
  std::vector<Real> out(cout * n);
  MapR<Real>(out.data(), cout, n).noalias() =
      CMapR<Real>(weight.data().data(), cout, cin) * CMapR<Real>(x.data().data(), cin, n);
  add_row_bias(out, bias, n);
  Shape shape = x.shape();
  shape[0] = cout;
  Node<Real>* xn = x.node();
  Node<Real>* wn = weight.node();
  Node<Real>* bn = bias.defined() ? bias.node() : nullptr;
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, wn, bn, cin, cout, n] {
      CMapR<Real> go(o.grad.data(), cout, n);
      if (Real* dw = grad_of(wn)) {
        MapR<Real>(dw, cout, cin).noalias() +=
            go * CMapR<Real>(xn->value.data(), cin, n).transpose();
      }
      if (Real* db = grad_of(bn)) accumulate_row_sums(db, o.grad.data(), cout, n);
      if (Real* dx = grad_of(xn)) {
        MapR<Real>(dx, cin, n).noalias() +=
            CMapR<Real>(wn->value.data(), cout, cin).transpose() * go;
      }
    });
  };
  return make_result<Real>(std::move(shape), std::move(out), {&x, &weight, &bias}, bw);
}

template <typename Real>
Tensor<Real> dense(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  check(x.rank() >= 1 && weight.rank() == 2 && weight.dim(1) == x.shape().back(),
        "dense: weight " + shape_string(weight.shape()) + " does not match input " +
            shape_string(x.shape()));
  const std::size_t in = weight.dim(1), outd = weight.dim(0);
  const std::size_t rows = x.size() / in;
  if (bias.defined()) {
    check(bias.size() == outd, "dense: bias size mismatch");
  }
  std::vector<Real> out(rows * outd);
  MapR<Real> y(out.data(), rows, outd);
  y.noalias() = CMapR<Real>(x.data().data(), rows, in) *
                CMapR<Real>(weight.data().data(), outd, in).transpose();
  if (bias.defined()) {
    const auto b = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outd; ++j) out[r * outd + j] += b[j];
  }
  Shape shape = x.shape();
  shape.back() = outd;
  Node<Real>* xn = x.node();
  Node<Real>* wn = weight.node();
  Node<Real>* bn = bias.defined() ? bias.node() : nullptr;
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, wn, bn, in, outd, rows] {
      CMapR<Real> go(o.grad.data(), rows, outd);
      if (Real* dw = grad_of(wn)) {
        MapR<Real>(dw, outd, in).noalias() +=
            go.transpose() * CMapR<Real>(xn->value.data(), rows, in);
      }
      if (Real* db = grad_of(bn)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < outd; ++j) db[j] += o.grad[r * outd + j];
      }
      if (Real* dx = grad_of(xn)) {
        MapR<Real>(dx, rows, in).noalias() += go * CMapR<Real>(wn->value.data(), outd, in);
      }
    });
  };
  return make_result<Real>(std::move(shape), std::move(out), {&x, &weight, &bias}, bw);
}

template <typename Real>
Tensor<Real> instance_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                           const Tensor<Real>& beta, NormStatsCache* stats, double eps) {
  check(x.rank() == 2, "instance_norm: input must be [C][T], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(0), t = x.dim(1);
  check(gamma.size() == c && beta.size() == c, "instance_norm: affine parameters must be [C]");
  check(t > 0, "instance_norm: empty time axis");

  std::vector<double> mu(c), inv(c);
  const bool replay = stats && stats->mode == NormStatsCache::Mode::kReplay;
  const auto xv = x.data();
  if (replay) {
    check(stats->cursor < stats->mean.size(), "instance_norm: replay cache exhausted");
    mu = stats->mean[stats->cursor];
    inv = stats->inv_std[stats->cursor];
    ++stats->cursor;
    check(mu.size() == c, "instance_norm: replayed statistics have the wrong channel count");
  } else {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const Real* row = xv.data() + ci * t;
      double m = 0.0;
      for (std::size_t i = 0; i < t; ++i) m += row[i];
      m /= static_cast<double>(t);
      double var = 0.0;
      for (std::size_t i = 0; i < t; ++i) var += (row[i] - m) * (row[i] - m);
      var /= static_cast<double>(t);
      mu[ci] = m;
      inv[ci] = 1.0 / std::sqrt(var + eps);
    }
    if (stats) {
      stats->mean.push_back(mu);
      stats->inv_std.push_back(inv);
    }
  }

  auto normalized = std::make_shared<std::vector<Real>>(x.size());
  std::vector<Real> out(x.size());
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t k = ci * t + i;
      const Real nv = static_cast<Real>((xv[k] - mu[ci]) * inv[ci]);
      (*normalized)[k] = nv;
      out[k] = gv[ci] * nv + bv[ci];
    }
  }

  Node<Real>* xn = x.node();
  Node<Real>* gn = gamma.node();
  Node<Real>* bn = beta.node();
  Backward<Real> bw = [=](Node<Real>& o) {
    return std::function<void()>([&o, xn, gn, bn, normalized, inv, c, t, replay] {
      Real* dx = grad_of(xn);
      Real* dg = grad_of(gn);
      Real* db = grad_of(bn);
      const auto& nv = *normalized;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const Real* go = o.grad.data() + ci * t;
        const Real* y = nv.data() + ci * t;
        Real sum_g = 0, sum_gy = 0;
        for (std::size_t i = 0; i < t; ++i) {
          sum_g += go[i];
          sum_gy += go[i] * y[i];
        }
        if (dg) dg[ci] += sum_gy;
        if (db) db[ci] += sum_g;
        if (!dx) continue;
        const Real g = gn->value[ci];
        const Real is = static_cast<Real>(inv[ci]);
        Real* dxr = dx + ci * t;
        if (replay) {
          for (std::size_t i = 0; i < t; ++i) dxr[i] += g * is * go[i];
        } else {
          const Real mg = sum_g / static_cast<Real>(t);
          const Real mgy = sum_gy / static_cast<Real>(t);
          for (std::size_t i = 0; i < t; ++i) dxr[i] += g * is * (go[i] - mg - y[i] * mgy);
        }
      }
    });
  };
  return make_result<Real>(x.shape(), std::move(out), {&x, &gamma, &beta}, bw);
}

#define PAEC_INSTANTIATE_OPS(R)                                                                 \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                   \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                                   \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                   \
  template Tensor<R> scale(const Tensor<R>&, R);                                                \
  template Tensor<R> square(const Tensor<R>&);                                                  \
  template Tensor<R> sigmoid(const Tensor<R>&);                                                 \
  template Tensor<R> prelu(const Tensor<R>&, const Tensor<R>&);                                 \
  template Tensor<R> sum(const Tensor<R>&);                                                     \
  template Tensor<R> mean(const Tensor<R>&);                                                    \
  template Tensor<R> magnitude(const Tensor<R>&, const Tensor<R>&);                             \
  template Tensor<R> reshape(const Tensor<R>&, Shape);                                          \
  template Tensor<R> concat_channels(const Tensor<R>&, const Tensor<R>&);                       \
  template Tensor<R> tile_time(const Tensor<R>&, std::size_t);                                  \
  template Tensor<R> flatten_freq(const Tensor<R>&);                                            \
  template Tensor<R> unflatten_freq(const Tensor<R>&, std::size_t);                             \
  template Tensor<R> conv2d_causal(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,        \
                                   std::size_t, std::size_t);                                   \
  template Tensor<R> tconv2d_causal(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,       \
                                    std::size_t, std::size_t);                                  \
  template Tensor<R> conv1d_causal(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,        \
                                   std::size_t);                                                \
  template Tensor<R> pointwise(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);           \
  template Tensor<R> dense(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);               \
  template Tensor<R> instance_norm(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,        \
                                   NormStatsCache*, double);

PAEC_INSTANTIATE_OPS(float)
PAEC_INSTANTIATE_OPS(double)

#undef PAEC_INSTANTIATE_OPS

}  // namespace paec::ag
