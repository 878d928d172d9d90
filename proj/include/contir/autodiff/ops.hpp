#pragma once

#include <cstddef>
#include <vector>

#include "contir/autodiff/tape.hpp"
#include "contir/autodiff/tensor.hpp"

// Differentiable primitives. Every function records one node on the tape its
// inputs belong to and throws ShapeError / DomainError / NumericError on
// contract violations.
namespace contir::ad {

// Elementwise arithmetic with numpy-style broadcasting (shapes aligned from
// the trailing axis; extents must match or be 1).
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
/// Throws DomainError on a zero denominator.
Var divide(Var a, Var b);

Var scale(Var a, double factor);
Var shift(Var a, double offset);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }
inline Var operator/(Var a, Var b) { return divide(a, b); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator-(Var a) { return scale(a, -1.0); }

/// [..., m, k] x [k, n] -> [..., m, n], or batched [B..., m, k] x [B..., k, n].
Var matmul(Var a, Var b);
/// Swaps the last two axes.
Var transpose(Var a);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var reshape(Var a, Shape shape);
/// Elements [begin, end) along `axis`.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);

Var sum(Var a, std::size_t axis, bool keepdim = false);
Var sum_all(Var a);
Var mean_all(Var a);
/// Maximum along `axis`. The subgradient goes to the first maximal index.
Var max(Var a, std::size_t axis, bool keepdim = false);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
/// Natural log; every element must be > 0.
Var log(Var a);
Var relu(Var a);

/// Rows of `table` ([V, n]) selected by `ids`; output shape ids.shape + [n].
/// Not differentiable with respect to the ids.
Var embedding(Var table, const IndexTensor& ids);

/// Replaces entries where the (broadcast) mask is 0 by `value`; those
/// entries pass no gradient.
Var masked_fill(Var a, const Tensor& mask, double value);

/// input [B, L, C_in], weight [C_out, W, C_in], bias [C_out]
/// -> [B, L - W + 1, C_out] (valid positions only).
Var conv1d(Var input, Var weight, Var bias);

/// x / max(||x||, eps) over the last axis.
Var l2_normalize(Var a, double eps = 1e-12);

/// Row-wise cosines: [..., m, n] and [..., p, n] -> [..., m, p].
Var cosine_matrix(Var a, Var b);

/// Identity forward, zero backward.
Var stop_gradient(Var a);

}  // namespace contir::ad
