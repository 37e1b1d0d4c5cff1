#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "rtfm/graph.hpp"
#include "rtfm/tensor.hpp"

// Differentiable operations recorded on an ad::Graph. Every op validates
// shapes (DimensionError), rejects non-finite results (NumericError) and
// registers its vector-Jacobian product for backward().
namespace rtfm::ad {

// Elementwise, same-shape binary ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var relu(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var abs(Var a);
Var square(Var a);
/// Values clipped to [lo, hi]; gradient is zero where clipping happened.
Var clamp(Var a, double lo, double hi);

/// Sum / mean of all elements as a scalar.
Var sum(Var a);
Var mean(Var a);

/// [m x n] * [n x p] -> [m x p].
Var matmul(Var a, Var b);
Var transpose(Var a);

/// Same-length dilated 1-D convolution over the row (time) axis.
///
/// signal is [T x Cin], kernels [Cout x Cin x W] with odd W, output
/// [T x Cout]:
///   out[t][o] = sum_c sum_w kernels[o][c][w] * signal[t + (w - (W-1)/2) * dilation][c]
/// with zeros outside [0, T).
Var conv1d_dilated(Var signal, Var kernels, std::size_t dilation);

/// x [T x C] plus bias [C] broadcast over rows.
Var add_row_bias(Var x, Var bias);

/// Concatenate matrices with equal row counts along the column axis.
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
/// Columns [begin, end) of a matrix.
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// Rows [begin, end) of a matrix, or elements of a vector.
Var slice_rows(Var x, std::size_t begin, std::size_t end);

/// Euclidean norm of each row: [T x D] -> [T]. Zero rows get zero gradient.
Var row_norms(Var x);

/// Selected rows of a matrix (or elements of a vector), in the given order.
/// Gradient flows only to the selected entries.
Var gather_rows(Var x, std::span<const std::size_t> indices);

Var reshape(Var a, Shape shape);

/// Softmax across each row of a matrix.
Var row_softmax(Var a);

/// Multiplies by a fixed mask (entries 0 or 1/(1-p) for inverted dropout).
Var dropout(Var a, const Tensor& mask);

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// 1/(1-rate).
Tensor make_dropout_mask(const Shape& shape, double rate, std::mt19937_64& rng);

/// Indices of the k rows with the largest Euclidean norm, in descending norm
/// order; equal norms resolve to the lower row index first.
std::vector<std::size_t> topk_rows_by_l2(const Tensor& x, std::size_t k);

/// Row norms of a plain matrix.
std::vector<double> row_l2_norms(const Tensor& x);

}  // namespace rtfm::ad
