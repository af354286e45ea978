#include "unicon/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace unicon::nn {

namespace {

template <typename S>
void require_same_size(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.value().size() != b.value().size()) {
    throw std::invalid_argument(std::string(op) + ": size mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

template <typename S>
bool wants_grad(const Node<S>& self, std::size_t k) {
  return self.parents.size() > k && self.parents[k]->requires_grad;
}

template <typename S>
Tensor<S>& parent_grad(Node<S>& self, std::size_t k) {
  return self.parents[k]->grad_buffer();
}

// Parent slots are only recorded for parents that exist; optional inputs
// (bias) are appended last so the fixed indices of the others stay valid.
template <typename S>
std::vector<Var<S>> with_optional(std::vector<Var<S>> vars, const Var<S>& opt) {
  if (opt.defined()) vars.push_back(opt);
  return vars;
}

// im2col over a batch slice: cols is [C*K*K, nb*OH*OW] row-major.
template <typename S>
void im2col(const S* x, int nb, int c, int h, int w, int k, int stride, int pad, int oh, int ow, S* cols) {
  const int p = oh * ow;
  const long ncols = static_cast<long>(nb) * p;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* row = cols + (static_cast<long>(ci) * k * k + ky * k + kx) * ncols;
        for (int n = 0; n < nb; ++n) {
          const S* xc = x + (static_cast<long>(n) * c + ci) * h * w;
          S* out = row + static_cast<long>(n) * p;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              std::fill(out + oy * ow, out + (oy + 1) * ow, S(0));
              continue;
            }
            const S* xrow = xc + static_cast<long>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              out[oy * ow + ox] = (ix < 0 || ix >= w) ? S(0) : xrow[ix];
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* cols, int nb, int c, int h, int w, int k, int stride, int pad, int oh, int ow, S* gx) {
  const int p = oh * ow;
  const long ncols = static_cast<long>(nb) * p;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* row = cols + (static_cast<long>(ci) * k * k + ky * k + kx) * ncols;
        for (int n = 0; n < nb; ++n) {
          S* gc = gx + (static_cast<long>(n) * c + ci) * h * w;
          const S* in = row + static_cast<long>(n) * p;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            S* grow = gc + static_cast<long>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) grow[ix] += in[oy * ow + ox];
            }
          }
        }
      }
    }
  }
}

constexpr int kConvChunk = 64;

}  // namespace

template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const int m = x.rows();
  const int k = x.cols();
  const int n = w.rows();
  if (w.cols() != k) {
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && static_cast<int>(b.value().size()) != n) throw std::invalid_argument("linear: bias size");
  Tensor<S> y({m, n});
  y.mat().noalias() = x.value().mat() * w.value().mat().transpose();
  if (b.defined()) {
    const S* bp = b.value().ptr();
    for (int r = 0; r < m; ++r) {
      S* row = y.ptr() + static_cast<long>(r) * n;
      for (int j = 0; j < n; ++j) row[j] += bp[j];
    }
  }
  const bool has_bias = b.defined();
  return make_result<S>(std::move(y), with_optional<S>({x, w}, b), [m, n, has_bias](Node<S>& self) {
    auto gy = self.grad.mat();
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    if (wants_grad(self, 0)) parent_grad(self, 0).mat().noalias() += gy * wv.mat();
    if (wants_grad(self, 1)) parent_grad(self, 1).mat().noalias() += gy.transpose() * xv.mat();
    if (has_bias && wants_grad(self, 2)) {
      S* gb = parent_grad(self, 2).ptr();
      for (int r = 0; r < m; ++r) {
        const S* row = self.grad.ptr() + static_cast<long>(r) * n;
        for (int j = 0; j < n; ++j) gb[j] += row[j];
      }
    }
  });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_size(a, b, "add");
  Tensor<S> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return make_result<S>(std::move(y), {a, b}, [](Node<S>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = parent_grad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_size(a, b, "sub");
  Tensor<S> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_result<S>(std::move(y), {a, b}, [](Node<S>& self) {
    if (wants_grad(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = parent_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_size(a, b, "mul");
  Tensor<S> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_result<S>(std::move(y), {a, b}, [](Node<S>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (wants_grad(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = parent_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  Tensor<S> y = a.value();
  for (auto& v : y.data) v *= factor;
  return make_result<S>(std::move(y), {a}, [factor](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> y = a.value();
  for (auto& v : y.data) v = v > S(0) ? v : S(0);
  return make_result<S>(std::move(y), {a}, [](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (self.value[i] > S(0)) g[i] += self.grad[i];
    }
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  Tensor<S> y = a.value();
  for (auto& v : y.data) {
    v = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
  }
  return make_result<S>(std::move(y), {a}, [](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const S s = self.value[i];
      g[i] += self.grad[i] * s * (S(1) - s);
    }
  });
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
  Tensor<S> y = a.value();
  for (auto& v : y.data) v = std::tanh(v);
  return make_result<S>(std::move(y), {a}, [](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const S t = self.value[i];
      g[i] += self.grad[i] * (S(1) - t * t);
    }
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int m = parts[0].rows();
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor<S> y({m, total});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    y.mat().block(0, off, m, widths[k]) = parts[k].value().mat();
    off += widths[k];
  }
  return make_result<S>(std::move(y), parts, [widths, m](Node<S>& self) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (wants_grad(self, k)) parent_grad(self, k).mat() += self.grad.mat().block(0, off, m, widths[k]);
      off += widths[k];
    }
  });
}

template <typename S>
Var<S> slice_cols(const Var<S>& x, int start, int count) {
  const int m = x.rows();
  if (start < 0 || count < 0 || start + count > x.cols()) throw std::invalid_argument("slice_cols: out of range");
  Tensor<S> y({m, count});
  y.mat() = x.value().mat().block(0, start, m, count);
  return make_result<S>(std::move(y), {x}, [start, count, m](Node<S>& self) {
    parent_grad(self, 0).mat().block(0, start, m, count) += self.grad.mat();
  });
}

template <typename S>
Var<S> gather_rows(const Var<S>& x, std::span<const int> index) {
  const int w = x.cols();
  const int nrows = x.rows();
  Shape shape = x.shape();
  if (shape.empty()) throw std::invalid_argument("gather_rows: scalar input");
  shape[0] = static_cast<int>(index.size());
  Tensor<S> y(shape);
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int src = index[r];
    if (src < -1 || src >= nrows) throw std::invalid_argument("gather_rows: index out of range");
    if (src >= 0) std::copy_n(x.value().ptr() + static_cast<long>(src) * w, w, y.ptr() + static_cast<long>(r) * w);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_result<S>(std::move(y), {x}, [idx = std::move(idx), w](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      S* dst = g.ptr() + static_cast<long>(idx[r]) * w;
      const S* src = self.grad.ptr() + static_cast<long>(r) * w;
      for (int j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  const int w = parts[0].cols();
  int total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != w) throw std::invalid_argument("concat_rows: trailing shape mismatch");
    offsets.push_back(static_cast<std::size_t>(total) * w);
    total += p.rows();
  }
  shape[0] = total;
  Tensor<S> y(shape);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    std::copy(parts[k].value().data.begin(), parts[k].value().data.end(), y.data.begin() + offsets[k]);
  }
  return make_result<S>(std::move(y), parts, [offsets](Node<S>& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = parent_grad(self, k);
      const S* src = self.grad.ptr() + offsets[k];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
    }
  });
}

template <typename S>
Var<S> combine_rows(const Var<S>& x, int out_rows, std::span<const RowTerm> terms) {
  const int w = x.cols();
  Shape shape = x.shape();
  shape[0] = out_rows;
  Tensor<S> y(shape);
  for (const auto& t : terms) {
    if (t.out < 0 || t.out >= out_rows || t.in < 0 || t.in >= x.rows()) {
      throw std::invalid_argument("combine_rows: term out of range");
    }
    const S c = static_cast<S>(t.coef);
    const S* src = x.value().ptr() + static_cast<long>(t.in) * w;
    S* dst = y.ptr() + static_cast<long>(t.out) * w;
    for (int j = 0; j < w; ++j) dst[j] += c * src[j];
  }
  std::vector<RowTerm> kept(terms.begin(), terms.end());
  return make_result<S>(std::move(y), {x}, [kept = std::move(kept), w](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (const auto& t : kept) {
      const S c = static_cast<S>(t.coef);
      const S* src = self.grad.ptr() + static_cast<long>(t.out) * w;
      S* dst = g.ptr() + static_cast<long>(t.in) * w;
      for (int j = 0; j < w; ++j) dst[j] += c * src[j];
    }
  });
}

template <typename S>
Var<S> group_max(const Var<S>& x, const std::vector<std::vector<int>>& groups) {
  const int w = x.cols();
  const int ng = static_cast<int>(groups.size());
  Tensor<S> y({ng, w});
  std::vector<int> argmax(static_cast<std::size_t>(ng) * w, -1);
  for (int g = 0; g < ng; ++g) {
    for (int r : groups[g]) {
      if (r < 0 || r >= x.rows()) throw std::invalid_argument("group_max: row out of range");
    }
    if (groups[g].empty()) continue;
    for (int j = 0; j < w; ++j) {
      int best = groups[g][0];
      S best_v = x.value()[static_cast<long>(best) * w + j];
      for (std::size_t q = 1; q < groups[g].size(); ++q) {
        const int r = groups[g][q];
        const S v = x.value()[static_cast<long>(r) * w + j];
        if (v > best_v) {
          best_v = v;
          best = r;
        }
      }
      y[static_cast<long>(g) * w + j] = best_v;
      argmax[static_cast<long>(g) * w + j] = best;
    }
  }
  return make_result<S>(std::move(y), {x}, [argmax = std::move(argmax), w](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
      if (argmax[i] < 0) continue;
      g[static_cast<long>(argmax[i]) * w + static_cast<long>(i % w)] += self.grad[i];
    }
  });
}

template <typename S>
Var<S> scale_rows(const Var<S>& x, std::span<const S> weights) {
  if (static_cast<int>(weights.size()) != x.rows()) throw std::invalid_argument("scale_rows: weight count");
  const int w = x.cols();
  Tensor<S> y = x.value();
  for (int r = 0; r < x.rows(); ++r) {
    for (int j = 0; j < w; ++j) y[static_cast<long>(r) * w + j] *= weights[r];
  }
  std::vector<S> wt(weights.begin(), weights.end());
  return make_result<S>(std::move(y), {x}, [wt = std::move(wt), w](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t r = 0; r < wt.size(); ++r) {
      for (int j = 0; j < w; ++j) g[r * w + j] += wt[r] * self.grad[r * w + j];
    }
  });
}

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor<S> y(std::move(shape), x.value().data);
  return make_result<S>(std::move(y), {x}, [](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad) {
  if (x.value().rank() != 4 || w.value().rank() != 4) throw std::invalid_argument("conv2d: rank-4 tensors required");
  const int nb = x.shape()[0], c = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
  const int o = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != c || w.shape()[3] != k) {
    throw std::invalid_argument("conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wd + 2 * pad - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: input too small");
  const int p = oh * ow;
  const int ckk = c * k * k;
  Tensor<S> y({nb, o, oh, ow});
  std::vector<S> cols;
  RowMat<S> out;
  for (int n0 = 0; n0 < nb; n0 += kConvChunk) {
    const int cn = std::min(kConvChunk, nb - n0);
    cols.resize(static_cast<std::size_t>(ckk) * cn * p);
    im2col(x.value().ptr() + static_cast<long>(n0) * c * h * wd, cn, c, h, wd, k, stride, pad, oh, ow, cols.data());
    ConstMatMap<S> colm(cols.data(), ckk, static_cast<long>(cn) * p);
    ConstMatMap<S> wm(w.value().ptr(), o, ckk);
    out.noalias() = wm * colm;
    for (int n = 0; n < cn; ++n) {
      for (int oc = 0; oc < o; ++oc) {
        S* dst = y.ptr() + ((static_cast<long>(n0 + n) * o + oc) * p);
        const S bias = b.defined() ? b.value()[oc] : S(0);
        for (int q = 0; q < p; ++q) dst[q] = out(oc, static_cast<long>(n) * p + q) + bias;
      }
    }
  }
  const bool has_bias = b.defined();
  return make_result<S>(std::move(y), with_optional<S>({x, w}, b),
                        [=](Node<S>& self) {
                          const auto& xv = self.parents[0]->value;
                          const auto& wv = self.parents[1]->value;
                          const bool gx_on = wants_grad(self, 0);
                          const bool gw_on = wants_grad(self, 1);
                          std::vector<S> cols;
                          RowMat<S> gout;
                          RowMat<S> gcols;
                          for (int n0 = 0; n0 < nb; n0 += kConvChunk) {
                            const int cn = std::min(kConvChunk, nb - n0);
                            gout.resize(o, static_cast<long>(cn) * p);
                            for (int n = 0; n < cn; ++n) {
                              for (int oc = 0; oc < o; ++oc) {
                                const S* src = self.grad.ptr() + ((static_cast<long>(n0 + n) * o + oc) * p);
                                for (int q = 0; q < p; ++q) gout(oc, static_cast<long>(n) * p + q) = src[q];
                              }
                            }
                            if (has_bias && wants_grad(self, 2)) {
                              auto& gb = parent_grad(self, 2);
                              for (int oc = 0; oc < o; ++oc) gb[oc] += gout.row(oc).sum();
                            }
                            ConstMatMap<S> wm(wv.ptr(), o, ckk);
                            if (gw_on) {
                              cols.resize(static_cast<std::size_t>(ckk) * cn * p);
                              im2col(xv.ptr() + static_cast<long>(n0) * c * h * wd, cn, c, h, wd, k, stride, pad, oh,
                                     ow, cols.data());
                              ConstMatMap<S> colm(cols.data(), ckk, static_cast<long>(cn) * p);
                              MatMap<S>(parent_grad(self, 1).ptr(), o, ckk).noalias() += gout * colm.transpose();
                            }
                            if (gx_on) {
                              gcols.noalias() = wm.transpose() * gout;
                              col2im(gcols.data(), cn, c, h, wd, k, stride, pad, oh, ow,
                                     parent_grad(self, 0).ptr() + static_cast<long>(n0) * c * h * wd);
                            }
                          }
                        });
}

template <typename S>
Var<S> max_pool2d(const Var<S>& x, int kernel, int stride, int pad) {
  if (x.value().rank() != 4) throw std::invalid_argument("max_pool2d: rank-4 tensor required");
  const int nb = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int oh = (h + 2 * pad - kernel) / stride + 1;
  const int ow = (w + 2 * pad - kernel) / stride + 1;
  Tensor<S> y({nb, c, oh, ow});
  std::vector<long> arg(y.size(), -1);
  for (long plane = 0; plane < static_cast<long>(nb) * c; ++plane) {
    const S* xp = x.value().ptr() + plane * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        S best = -std::numeric_limits<S>::infinity();
        long best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const S v = xp[iy * w + ix];
            if (best_i < 0 || v > best) {
              best = v;
              best_i = plane * h * w + iy * w + ix;
            }
          }
        }
        const long oi = plane * oh * ow + oy * ow + ox;
        y[oi] = best_i < 0 ? S(0) : best;
        arg[oi] = best_i;
      }
    }
  }
  return make_result<S>(std::move(y), {x}, [arg = std::move(arg)](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] >= 0) g[arg[i]] += self.grad[i];
    }
  });
}

template <typename S>
Var<S> global_avg_pool(const Var<S>& x) {
  if (x.value().rank() != 4) throw std::invalid_argument("global_avg_pool: rank-4 tensor required");
  const int nb = x.shape()[0], c = x.shape()[1];
  const int p = x.shape()[2] * x.shape()[3];
  Tensor<S> y({nb, c});
  for (long plane = 0; plane < static_cast<long>(nb) * c; ++plane) {
    const S* xp = x.value().ptr() + plane * p;
    S s = 0;
    for (int q = 0; q < p; ++q) s += xp[q];
    y[plane] = s / static_cast<S>(p);
  }
  return make_result<S>(std::move(y), {x}, [p](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    const S inv = S(1) / static_cast<S>(p);
    for (std::size_t plane = 0; plane < self.grad.size(); ++plane) {
      const S gv = self.grad[plane] * inv;
      S* gp = g.ptr() + plane * p;
      for (int q = 0; q < p; ++q) gp[q] += gv;
    }
  });
}

template <typename S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, Tensor<S>& running_mean,
                  Tensor<S>& running_var, bool training, S momentum, S eps) {
  const int r = x.value().rank();
  if (r != 2 && r != 4) throw std::invalid_argument("batch_norm: rank 2 or 4 required");
  const int outer = x.shape()[0];
  const int c = x.shape()[1];
  const int inner = r == 4 ? x.shape()[2] * x.shape()[3] : 1;
  const long m = static_cast<long>(outer) * inner;
  if (static_cast<int>(gamma.value().size()) != c) throw std::invalid_argument("batch_norm: channel mismatch");

  std::vector<S> mean(c, S(0)), invstd(c, S(0));
  const S* xv = x.value().ptr();
  if (training) {
    for (int o = 0; o < outer; ++o) {
      for (int ch = 0; ch < c; ++ch) {
        const S* p = xv + (static_cast<long>(o) * c + ch) * inner;
        for (int q = 0; q < inner; ++q) mean[ch] += p[q];
      }
    }
    for (auto& v : mean) v /= static_cast<S>(m);
    std::vector<S> var(c, S(0));
    for (int o = 0; o < outer; ++o) {
      for (int ch = 0; ch < c; ++ch) {
        const S* p = xv + (static_cast<long>(o) * c + ch) * inner;
        for (int q = 0; q < inner; ++q) var[ch] += (p[q] - mean[ch]) * (p[q] - mean[ch]);
      }
    }
    for (int ch = 0; ch < c; ++ch) {
      const S biased = var[ch] / static_cast<S>(m);
      invstd[ch] = S(1) / std::sqrt(biased + eps);
      const S unbiased = m > 1 ? var[ch] / static_cast<S>(m - 1) : biased;
      running_mean[ch] = (S(1) - momentum) * running_mean[ch] + momentum * mean[ch];
      running_var[ch] = (S(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = S(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<S> xhat(x.shape());
  Tensor<S> y(x.shape());
  for (int o = 0; o < outer; ++o) {
    for (int ch = 0; ch < c; ++ch) {
      const long base = (static_cast<long>(o) * c + ch) * inner;
      for (int q = 0; q < inner; ++q) {
        const S xh = (xv[base + q] - mean[ch]) * invstd[ch];
        xhat[base + q] = xh;
        y[base + q] = gamma.value()[ch] * xh + beta.value()[ch];
      }
    }
  }
  return make_result<S>(
      std::move(y), {x, gamma, beta},
      [xhat = std::move(xhat), invstd = std::move(invstd), outer, c, inner, m, training](Node<S>& self) {
        const auto& gam = self.parents[1]->value;
        std::vector<S> sum_g(c, S(0)), sum_gx(c, S(0));
        for (int o = 0; o < outer; ++o) {
          for (int ch = 0; ch < c; ++ch) {
            const long base = (static_cast<long>(o) * c + ch) * inner;
            for (int q = 0; q < inner; ++q) {
              sum_g[ch] += self.grad[base + q];
              sum_gx[ch] += self.grad[base + q] * xhat[base + q];
            }
          }
        }
        if (wants_grad(self, 1)) {
          auto& gg = parent_grad(self, 1);
          for (int ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
        }
        if (wants_grad(self, 2)) {
          auto& gb = parent_grad(self, 2);
          for (int ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
        }
        if (!wants_grad(self, 0)) return;
        auto& gx = parent_grad(self, 0);
        const S inv_m = S(1) / static_cast<S>(m);
        for (int o = 0; o < outer; ++o) {
          for (int ch = 0; ch < c; ++ch) {
            const long base = (static_cast<long>(o) * c + ch) * inner;
            const S gscale = gam[ch] * invstd[ch];
            for (int q = 0; q < inner; ++q) {
              const S gy = self.grad[base + q];
              if (training) {
                gx[base + q] += gscale * (gy - inv_m * sum_g[ch] - xhat[base + q] * inv_m * sum_gx[ch]);
              } else {
                gx[base + q] += gscale * gy;
              }
            }
          }
        }
      });
}

template <typename S>
Var<S> bce(const Var<S>& prob, std::span<const S> target, std::span<const S> weight) {
  const std::size_t n = prob.value().size();
  if (target.size() != n || weight.size() != n) throw std::invalid_argument("bce: target/weight size mismatch");
  const S eps = static_cast<S>(kProbEpsilon);
  S wsum = 0;
  S total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (weight[i] == S(0)) continue;
    const S p = std::clamp(prob.value()[i], eps, S(1) - eps);
    total += weight[i] * (-target[i] * std::log(p) - (S(1) - target[i]) * std::log(S(1) - p));
    wsum += weight[i];
  }
  Tensor<S> y({1});
  y[0] = wsum > S(0) ? total / wsum : S(0);
  std::vector<S> t(target.begin(), target.end()), w(weight.begin(), weight.end());
  return make_result<S>(std::move(y), {prob}, [t = std::move(t), w = std::move(w), wsum, eps](Node<S>& self) {
    if (wsum <= S(0)) return;
    auto& g = parent_grad(self, 0);
    const auto& pv = self.parents[0]->value;
    const S scale = self.grad[0] / wsum;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (w[i] == S(0)) continue;
      const S p = pv[i];
      if (p < eps || p > S(1) - eps) continue;
      g[i] += scale * w[i] * (-t[i] / p + (S(1) - t[i]) / (S(1) - p));
    }
  });
}

template <typename S>
Var<S> sum_all(const Var<S>& x) {
  Tensor<S> y({1});
  for (S v : x.value().data) y[0] += v;
  return make_result<S>(std::move(y), {x}, [](Node<S>& self) {
    auto& g = parent_grad(self, 0);
    for (auto& v : g.data) v += self.grad[0];
  });
}

#define UNICON_INSTANTIATE_OPS(S)                                                                          \
  template Var<S> linear<S>(const Var<S>&, const Var<S>&, const Var<S>&);                                 \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                                   \
  template Var<S> sub<S>(const Var<S>&, const Var<S>&);                                                   \
  template Var<S> mul<S>(const Var<S>&, const Var<S>&);                                                   \
  template Var<S> scale<S>(const Var<S>&, S);                                                             \
  template Var<S> neg<S>(const Var<S>&);                                                                  \
  template Var<S> relu<S>(const Var<S>&);                                                                 \
  template Var<S> sigmoid<S>(const Var<S>&);                                                              \
  template Var<S> tanh<S>(const Var<S>&);                                                                 \
  template Var<S> concat_cols<S>(const std::vector<Var<S>>&);                                             \
  template Var<S> slice_cols<S>(const Var<S>&, int, int);                                                 \
  template Var<S> gather_rows<S>(const Var<S>&, std::span<const int>);                                    \
  template Var<S> concat_rows<S>(const std::vector<Var<S>>&);                                             \
  template Var<S> combine_rows<S>(const Var<S>&, int, std::span<const RowTerm>);                          \
  template Var<S> group_max<S>(const Var<S>&, const std::vector<std::vector<int>>&);                      \
  template Var<S> scale_rows<S>(const Var<S>&, std::span<const S>);                                       \
  template Var<S> reshape<S>(const Var<S>&, Shape);                                                       \
  template Var<S> conv2d<S>(const Var<S>&, const Var<S>&, const Var<S>&, int, int);                       \
  template Var<S> max_pool2d<S>(const Var<S>&, int, int, int);                                            \
  template Var<S> global_avg_pool<S>(const Var<S>&);                                                      \
  template Var<S> batch_norm<S>(const Var<S>&, const Var<S>&, const Var<S>&, Tensor<S>&, Tensor<S>&, bool, \
                                S, S);                                                                     \
  template Var<S> bce<S>(const Var<S>&, std::span<const S>, std::span<const S>);                          \
  template Var<S> sum_all<S>(const Var<S>&);

UNICON_INSTANTIATE_OPS(float)
UNICON_INSTANTIATE_OPS(double)

}  // namespace unicon::nn
