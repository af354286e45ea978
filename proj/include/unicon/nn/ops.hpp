#pragma once

#include "unicon/nn/tensor.hpp"

#include <span>
#include <vector>

namespace unicon::nn {

// x: [m, k], w: [n, k], b: [n] (may be undefined) -> x * w^T + b : [m, n]
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b);

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> scale(const Var<S>& a, S factor);
template <typename S>
Var<S> neg(const Var<S>& a);

template <typename S>
Var<S> relu(const Var<S>& a);
template <typename S>
Var<S> sigmoid(const Var<S>& a);
template <typename S>
Var<S> tanh(const Var<S>& a);

// Column-wise concatenation of matrices with equal row counts.
template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts);
template <typename S>
Var<S> slice_cols(const Var<S>& x, int start, int count);

// Row gather along the leading dimension; index -1 yields a zero row.
template <typename S>
Var<S> gather_rows(const Var<S>& x, std::span<const int> index);
// Stacks tensors along the leading dimension (trailing shapes must match).
template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts);

struct RowTerm {
  int out;
  int in;
  double coef;
};
// out[t.out] += t.coef * x[t.in] for every term; rows without terms are zero.
template <typename S>
Var<S> combine_rows(const Var<S>& x, int out_rows, std::span<const RowTerm> terms);

// Element-wise maximum over each group of rows. Ties route the gradient to
// the earliest row of the group. Empty groups produce zero rows.
template <typename S>
Var<S> group_max(const Var<S>& x, const std::vector<std::vector<int>>& groups);

// Row-wise multiplication by constant weights.
template <typename S>
Var<S> scale_rows(const Var<S>& x, std::span<const S> weights);

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape);

// x: [B, C, H, W], w: [O, C, K, K], b: [O] (may be undefined).
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad);
template <typename S>
Var<S> max_pool2d(const Var<S>& x, int kernel, int stride, int pad);
// [B, C, H, W] -> [B, C]
template <typename S>
Var<S> global_avg_pool(const Var<S>& x);

// Normalizes dimension 1 of x ([rows, C] or [B, C, H, W]). In training mode
// the batch statistics are used and the running buffers are updated in place.
template <typename S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, Tensor<S>& running_mean,
                  Tensor<S>& running_var, bool training, S momentum = S(0.1), S eps = S(1e-5));

inline constexpr double kProbEpsilon = 1e-7;

// Weighted mean binary cross-entropy of probabilities against {0,1}
// targets, probabilities clamped to [eps, 1 - eps]. Returns a scalar; zero
// when all weights are zero.
template <typename S>
Var<S> bce(const Var<S>& prob, std::span<const S> target, std::span<const S> weight);

// Sum of all elements -> scalar [1].
template <typename S>
Var<S> sum_all(const Var<S>& x);

}  // namespace unicon::nn
