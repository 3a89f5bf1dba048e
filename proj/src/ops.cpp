#include "spnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spnas::ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
  }
}

void require_dim(std::size_t got, std::size_t want, const char* op, const std::string& what) {
  if (got != want) {
    throw ShapeError(std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (!s.defined() || s.numel() != 1) {
    throw ShapeError(std::string(op) + ": expected scalar tensor");
  }
}

// Output indices o in [lo, hi) such that o * stride + offset lies in [0, extent).
struct Range {
  std::size_t lo, hi;
};

Range valid_range(long extent, long out_extent, long stride, long offset) {
  long lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  long last = extent - 1 - offset;
  long hi = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

std::size_t out_extent(std::size_t in, int stride) {
  return (in + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

void check_stride_kernel(int stride, std::size_t k, const char* op) {
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument(std::string(op) + ": stride must be 1 or 2, got " +
                                std::to_string(stride));
  }
  if (k % 2 == 0) {
    throw ShapeError(std::string(op) + ": kernel size must be odd, got " + std::to_string(k));
  }
}

// Shared plane kernels. `acc` over a single (input plane, filter) pair.
struct PlaneGeom {
  std::size_t h, w, ho, wo, k;
  int stride;
};

void plane_forward(const PlaneGeom& g, const double* x, const double* f, double* out) {
  const long pad = static_cast<long>(g.k / 2);
  const long s = g.stride;
  for (std::size_t ki = 0; ki < g.k; ++ki) {
    const long di = static_cast<long>(ki) - pad;
    const Range rh = valid_range(static_cast<long>(g.h), static_cast<long>(g.ho), s, di);
    for (std::size_t kj = 0; kj < g.k; ++kj) {
      const long dj = static_cast<long>(kj) - pad;
      const Range rw = valid_range(static_cast<long>(g.w), static_cast<long>(g.wo), s, dj);
      const double wv = f[ki * g.k + kj];
      for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
        const double* xrow = x + (static_cast<long>(oh) * s + di) * static_cast<long>(g.w) + dj;
        double* orow = out + oh * g.wo;
        if (s == 1) {
          for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) orow[ow] += wv * xrow[ow];
        } else {
          for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) orow[ow] += wv * xrow[ow * 2];
        }
      }
    }
  }
}

// dx += conv^T(dout, f); df += corr(dout, x). Either output pointer may be null.
void plane_backward(const PlaneGeom& g, const double* x, const double* f, const double* dout,
                    double* dx, double* df) {
  const long pad = static_cast<long>(g.k / 2);
  const long s = g.stride;
  for (std::size_t ki = 0; ki < g.k; ++ki) {
    const long di = static_cast<long>(ki) - pad;
    const Range rh = valid_range(static_cast<long>(g.h), static_cast<long>(g.ho), s, di);
    for (std::size_t kj = 0; kj < g.k; ++kj) {
      const long dj = static_cast<long>(kj) - pad;
      const Range rw = valid_range(static_cast<long>(g.w), static_cast<long>(g.wo), s, dj);
      const double wv = f[ki * g.k + kj];
      double acc = 0.0;
      for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
        const long base = (static_cast<long>(oh) * s + di) * static_cast<long>(g.w) + dj;
        const double* drow = dout + oh * g.wo;
        if (dx) {
          double* dxrow = dx + base;
          for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) dxrow[ow * s] += wv * drow[ow];
        }
        if (df) {
          const double* xrow = x + base;
          for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) acc += drow[ow] * xrow[ow * s];
        }
      }
      if (df) df[ki * g.k + kj] += acc;
    }
  }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, int stride) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  require_dim(w.dim(1), x.dim(1), "conv2d", "weight dimension 1 (input channels)");
  require_dim(w.dim(3), w.dim(2), "conv2d", "weight dimension 3 (kernel width)");
  const std::size_t k = w.dim(2);
  check_stride_kernel(stride, k, "conv2d");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0);
  const PlaneGeom g{h, wd, out_extent(h, stride), out_extent(wd, stride), k, stride};
  const bool track = tape.needs_grad({&x, &w});
  Tensor out = tape.make_output({n, cout, g.ho, g.wo}, track);

  const double* xp = x.data().data();
  const double* wp = w.data().data();
  double* op = out.mutable_data().data();
  const std::size_t in_plane = h * wd, out_plane = g.ho * g.wo, fsize = k * k;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ci = 0; ci < cin; ++ci)
        plane_forward(g, xp + (b * cin + ci) * in_plane, wp + (co * cin + ci) * fsize,
                      op + (b * cout + co) * out_plane);

  if (track) {
    tape.record(out, [x, w, out, g, n, cin, cout]() mutable {
      const std::size_t in_plane = g.h * g.w, out_plane = g.ho * g.wo, fsize = g.k * g.k;
      double* dx = x.requires_grad() ? x.mutable_grad().data() : nullptr;
      double* dw = w.requires_grad() ? w.mutable_grad().data() : nullptr;
      const double* d = out.grad().data();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t ci = 0; ci < cin; ++ci)
            plane_backward(g, x.data().data() + (b * cin + ci) * in_plane,
                           w.data().data() + (co * cin + ci) * fsize,
                           d + (b * cout + co) * out_plane,
                           dx ? dx + (b * cin + ci) * in_plane : nullptr,
                           dw ? dw + (co * cin + ci) * fsize : nullptr);
    });
  }
  return out;
}

Tensor conv2d_depthwise(Tape& tape, const Tensor& x, const Tensor& w, int stride) {
  require_rank(x, 4, "conv2d_depthwise", "input");
  require_rank(w, 3, "conv2d_depthwise", "weight");
  require_dim(w.dim(0), x.dim(1), "conv2d_depthwise", "weight dimension 0 (channels)");
  require_dim(w.dim(2), w.dim(1), "conv2d_depthwise", "weight dimension 2 (kernel width)");
  const std::size_t k = w.dim(1);
  check_stride_kernel(stride, k, "conv2d_depthwise");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const PlaneGeom g{h, wd, out_extent(h, stride), out_extent(wd, stride), k, stride};
  const bool track = tape.needs_grad({&x, &w});
  Tensor out = tape.make_output({n, c, g.ho, g.wo}, track);

  const double* xp = x.data().data();
  const double* wp = w.data().data();
  double* op = out.mutable_data().data();
  const std::size_t in_plane = h * wd, out_plane = g.ho * g.wo, fsize = k * k;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      plane_forward(g, xp + (b * c + ch) * in_plane, wp + ch * fsize,
                    op + (b * c + ch) * out_plane);

  if (track) {
    tape.record(out, [x, w, out, g, n, c]() mutable {
      const std::size_t in_plane = g.h * g.w, out_plane = g.ho * g.wo, fsize = g.k * g.k;
      double* dx = x.requires_grad() ? x.mutable_grad().data() : nullptr;
      double* dw = w.requires_grad() ? w.mutable_grad().data() : nullptr;
      const double* d = out.grad().data();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
          plane_backward(g, x.data().data() + (b * c + ch) * in_plane, w.data().data() + ch * fsize,
                         d + (b * c + ch) * out_plane,
                         dx ? dx + (b * c + ch) * in_plane : nullptr,
                         dw ? dw + ch * fsize : nullptr);
    });
  }
  return out;
}

Tensor conv2d_pointwise(Tape& tape, const Tensor& x, const Tensor& w) {
  require_rank(x, 4, "conv2d_pointwise", "input");
  require_rank(w, 2, "conv2d_pointwise", "weight");
  require_dim(w.dim(1), x.dim(1), "conv2d_pointwise", "weight dimension 1 (input channels)");
  const std::size_t n = x.dim(0), cin = x.dim(1), hw = x.dim(2) * x.dim(3), cout = w.dim(0);
  const bool track = tape.needs_grad({&x, &w});
  Tensor out = tape.make_output({n, cout, x.dim(2), x.dim(3)}, track);

  const double* xp = x.data().data();
  const double* wp = w.data().data();
  double* op = out.mutable_data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* orow = op + (b * cout + co) * hw;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double wv = wp[co * cin + ci];
        const double* xrow = xp + (b * cin + ci) * hw;
        for (std::size_t p = 0; p < hw; ++p) orow[p] += wv * xrow[p];
      }
    }
  }

  if (track) {
    tape.record(out, [x, w, out, n, cin, cout, hw]() mutable {
      const double* d = out.grad().data();
      const double* xp = x.data().data();
      const double* wp = w.data().data();
      if (x.requires_grad()) {
        double* dx = x.mutable_grad().data();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ci = 0; ci < cin; ++ci) {
            double* dxrow = dx + (b * cin + ci) * hw;
            for (std::size_t co = 0; co < cout; ++co) {
              const double wv = wp[co * cin + ci];
              const double* drow = d + (b * cout + co) * hw;
              for (std::size_t p = 0; p < hw; ++p) dxrow[p] += wv * drow[p];
            }
          }
      }
      if (w.requires_grad()) {
        double* dw = w.mutable_grad().data();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t co = 0; co < cout; ++co) {
            const double* drow = d + (b * cout + co) * hw;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* xrow = xp + (b * cin + ci) * hw;
              double acc = 0.0;
              for (std::size_t p = 0; p < hw; ++p) acc += drow[p] * xrow[p];
              dw[co * cin + ci] += acc;
            }
          }
      }
    });
  }
  return out;
}

Tensor channel_affine(Tape& tape, const Tensor& x, const Tensor& scale, const Tensor& bias) {
  if (!x.defined() || x.rank() < 2) throw ShapeError("channel_affine: input must have rank >= 2");
  require_rank(scale, 1, "channel_affine", "scale");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  require_dim(scale.dim(0), c, "channel_affine", "scale dimension 0 (channels)");
  const bool has_bias = bias.defined();
  if (has_bias) {
    require_rank(bias, 1, "channel_affine", "bias");
    require_dim(bias.dim(0), c, "channel_affine", "bias dimension 0 (channels)");
  }
  const bool track = tape.needs_grad({&x, &scale, has_bias ? &bias : nullptr});
  Tensor out = tape.make_output(x.shape(), track);
  const double* xp = x.data().data();
  double* op = out.mutable_data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double s = scale[ch], o = has_bias ? bias[ch] : 0.0;
      const std::size_t base = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) op[base + i] = xp[base + i] * s + o;
    }
  if (track) {
    tape.record(out, [x, scale, bias, out, n, c, inner, has_bias]() mutable {
      const double* d = out.grad().data();
      const double* xp = x.data().data();
      double* dx = x.requires_grad() ? x.mutable_grad().data() : nullptr;
      double* ds = scale.requires_grad() ? scale.mutable_grad().data() : nullptr;
      double* db = has_bias && bias.requires_grad() ? bias.mutable_grad().data() : nullptr;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double s = scale[ch];
          const std::size_t base = (b * c + ch) * inner;
          double acc_s = 0.0, acc_b = 0.0;
          for (std::size_t i = 0; i < inner; ++i) {
            if (dx) dx[base + i] += d[base + i] * s;
            acc_s += d[base + i] * xp[base + i];
            acc_b += d[base + i];
          }
          if (ds) ds[ch] += acc_s;
          if (db) db[ch] += acc_b;
        }
    });
  }
  return out;
}

Tensor relu6(Tape& tape, const Tensor& x) {
  const bool track = tape.needs_grad({&x});
  Tensor out = tape.make_output(x.shape(), track);
  auto xs = x.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = std::clamp(xs[i], 0.0, 6.0);
  if (track) {
    tape.record(out, [x, out]() mutable {
      auto xs = x.data();
      auto d = out.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (xs[i] > 0.0 && xs[i] < 6.0) dx[i] += d[i];
    });
  }
  return out;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const bool track = tape.needs_grad({&x});
  Tensor out = tape.make_output({n, c}, track);
  const double inv = 1.0 / static_cast<double>(hw);
  auto xs = x.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) acc += xs[i * hw + p];
    os[i] = acc * inv;
  }
  if (track) {
    tape.record(out, [x, out, n, c, hw, inv]() mutable {
      auto d = out.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < n * c; ++i) {
        const double g = d[i] * inv;
        for (std::size_t p = 0; p < hw; ++p) dx[i * hw + p] += g;
      }
    });
  }
  return out;
}

Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "dense", "input");
  require_rank(w, 2, "dense", "weight");
  require_dim(w.dim(1), x.dim(1), "dense", "weight dimension 1 (features)");
  const bool has_bias = b.defined();
  if (has_bias) {
    require_rank(b, 1, "dense", "bias");
    require_dim(b.dim(0), w.dim(0), "dense", "bias dimension 0 (outputs)");
  }
  const std::size_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
  const bool track = tape.needs_grad({&x, &w, has_bias ? &b : nullptr});
  Tensor out = tape.make_output({n, o}, track);
  auto xs = x.data();
  auto ws = w.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < o; ++j) {
      double acc = has_bias ? b[j] : 0.0;
      for (std::size_t k = 0; k < f; ++k) acc += xs[i * f + k] * ws[j * f + k];
      os[i * o + j] = acc;
    }
  if (track) {
    tape.record(out, [x, w, b, out, n, f, o, has_bias]() mutable {
      auto d = out.grad();
      auto xs = x.data();
      auto ws = w.data();
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < o; ++j)
            for (std::size_t k = 0; k < f; ++k) dx[i * f + k] += d[i * o + j] * ws[j * f + k];
      }
      if (w.requires_grad()) {
        auto dw = w.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < o; ++j)
            for (std::size_t k = 0; k < f; ++k) dw[j * f + k] += d[i * o + j] * xs[i * f + k];
      }
      if (has_bias && b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < o; ++j) db[j] += d[i * o + j];
      }
    });
  }
  return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require_dim(labels.size(), n, "softmax_cross_entropy", "label count");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                              " at index " + std::to_string(i) + " outside [0, " +
                              std::to_string(k) + ")");
    }
  }
  const bool track = tape.needs_grad({&logits});
  Tensor out = tape.make_output({1}, track);
  std::vector<double> probs(n * k);
  auto ls = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = ls.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - mx);
      z += probs[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= z;
    total += -(row[labels[i]] - mx - std::log(z));
  }
  out.mutable_data()[0] = total / static_cast<double>(n);
  if (track) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape.record(out, [logits, out, probs = std::move(probs), lab = std::move(lab), n, k]() mutable {
      const double g = out.grad()[0] / static_cast<double>(n);
      auto dl = logits.mutable_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double target = static_cast<std::size_t>(lab[i]) == j ? 1.0 : 0.0;
          dl[i * k + j] += g * (probs[i * k + j] - target);
        }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool track = tape.needs_grad({&a, &b});
  Tensor out = tape.make_output(a.shape(), track);
  auto as = a.data();
  auto bs = b.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] + bs[i];
  if (track) {
    tape.record(out, [a, b, out]() mutable {
      auto d = out.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool track = tape.needs_grad({&a, &b});
  Tensor out = tape.make_output(a.shape(), track);
  auto as = a.data();
  auto bs = b.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] * bs[i];
  if (track) {
    tape.record(out, [a, b, out]() mutable {
      auto d = out.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * b[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * a[i];
      }
    });
  }
  return out;
}

Tensor affine_const(Tape& tape, const Tensor& x, double alpha, double beta) {
  const bool track = tape.needs_grad({&x});
  Tensor out = tape.make_output(x.shape(), track);
  auto xs = x.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = alpha * xs[i] + beta;
  if (track) {
    tape.record(out, [x, out, alpha]() mutable {
      auto d = out.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < d.size(); ++i) dx[i] += alpha * d[i];
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, const Tensor& s) {
  require_scalar(s, "scale");
  const bool track = tape.needs_grad({&x, &s});
  Tensor out = tape.make_output(x.shape(), track);
  const double sv = s[0];
  auto xs = x.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = xs[i] * sv;
  if (track) {
    tape.record(out, [x, s, out]() mutable {
      auto d = out.grad();
      auto xs = x.data();
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * s[0];
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) acc += d[i] * xs[i];
        s.mutable_grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor scale_masked(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask,
                    const Tensor& s) {
  require_scalar(s, "scale_masked");
  require_dim(mask.size(), x.numel(), "scale_masked", "mask length");
  const bool track = tape.needs_grad({&x, &s});
  Tensor out = tape.make_output(x.shape(), track);
  const double sv = s[0];
  auto xs = x.data();
  auto os = out.mutable_data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = mask[i] ? xs[i] * sv : xs[i];
  if (track) {
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record(out, [x, s, out, m = std::move(m)]() mutable {
      auto d = out.grad();
      auto xs = x.data();
      const double sv = s[0];
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += m[i] ? d[i] * sv : d[i];
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i)
          if (m[i]) acc += d[i] * xs[i];
        s.mutable_grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  const bool track = tape.needs_grad({&x});
  Tensor out = tape.make_output({1}, track);
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.mutable_data()[0] = acc;
  if (track) {
    tape.record(out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& v : x.mutable_grad()) v += g;
    });
  }
  return out;
}

Tensor sum_sq(Tape& tape, const Tensor& x) {
  const bool track = tape.needs_grad({&x});
  Tensor out = tape.make_output({1}, track);
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  out.mutable_data()[0] = acc;
  if (track) {
    tape.record(out, [x, out]() mutable {
      const double g = out.grad()[0];
      auto xs = x.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < xs.size(); ++i) dx[i] += 2.0 * g * xs[i];
    });
  }
  return out;
}

Tensor masked_sum_sq(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask) {
  require_dim(mask.size(), x.numel(), "masked_sum_sq", "mask length");
  const bool track = tape.needs_grad({&x});
  Tensor out = tape.make_output({1}, track);
  auto xs = x.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (mask[i]) acc += xs[i] * xs[i];
  out.mutable_data()[0] = acc;
  if (track) {
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record(out, [x, out, m = std::move(m)]() mutable {
      const double g = out.grad()[0];
      auto xs = x.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (m[i]) dx[i] += 2.0 * g * xs[i];
    });
  }
  return out;
}

Tensor log_floor(Tape& tape, const Tensor& x, double floor) {
  require_scalar(x, "log_floor");
  if (!(floor > 0.0)) throw std::invalid_argument("log_floor: floor must be positive");
  const bool track = tape.needs_grad({&x});
  Tensor out = tape.make_output({1}, track);
  const double v = x[0];
  const bool clamped = !(v > floor);
  out.mutable_data()[0] = std::log(clamped ? floor : v);
  if (track && !clamped) {
    tape.record(out, [x, out]() mutable { x.mutable_grad()[0] += out.grad()[0] / x[0]; });
  }
  return out;
}

}  // namespace spnas::ops
