#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "onlstm/numerics/tape.hpp"

// Differentiable primitives. Every operand must live on the same tape; the
// result is recorded on that tape. "Rows" and "columns" follow Tensor: the last
// axis is the column axis and all leading axes are flattened into rows.
namespace onlstm::ops {

// a[m x k] * b[k x n]
Var matmul(Var a, Var b);
// a[m x k] * transpose(b[n x k])
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// Adds bias[n] to every row of a[... x n].
Var add_row(Var a, Var bias);
// scale * a + shift, elementwise.
Var affine(Var a, double scale, double shift);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var abs(Var a);

// Numerically stable softmax along the last axis.
Var softmax(Var a);
// Inclusive prefix sum along the last axis.
Var cumsum(Var a);
// cumsum(softmax(a)) fused so the values stay in [0, 1] exactly. The backward
// pass honors derivative faults on both kSoftmax and kCumsum.
Var cumax(Var a);

// Joins along the last axis; all operands need the same row count.
Var concat_cols(const std::vector<Var>& parts);
// Stacks rank-2 operands with equal column counts.
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
// Rows [begin, begin + count) of a rank-2 operand.
Var slice_rows(Var a, std::size_t begin, std::size_t count);
// Repeats every column `times` times consecutively: [x, y] -> [x, x, y, y].
Var repeat_cols(Var a, std::size_t times);
// Picks rows of table[V x E] by index.
Var gather_rows(Var table, std::span<const int> ids);

// Sum of all elements, as a one-element tensor.
Var sum(Var a);
// Sum over rows of -log softmax(logits[r])[targets[r]].
Var cross_entropy(Var logits, std::span<const int> targets);

}  // namespace onlstm::ops

namespace onlstm {

// Value-level helpers (no tape involved).
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor cumsum_rows(const Tensor& x);
Tensor cumax_rows(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace onlstm
