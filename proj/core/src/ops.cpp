#include "rtfm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "rtfm/errors.hpp"

namespace rtfm::ad {

namespace {

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ContractError("variable has no graph");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr) {
    throw ContractError("operands belong to different graphs");
  }
  return *a.graph;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(a.shape()));
  }
}

// Unary elementwise op given f(x) and df/dx evaluated at (x, f(x)).
template <class F, class DF>
Var unary(Var a, const char* name, F f, DF df) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  std::vector<double> y(out.values().begin(), out.values().end());
  Var inputs[] = {a};
  return g.record(
      std::move(out), inputs,
      [a, y = std::move(y), df](std::span<const double> dy) {
        auto dx = a.graph->grad_buffer(a);
        const Tensor& xv = a.value();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * df(xv[i], y[i]);
      },
      name);
}

// Records which piece of a piecewise op each element falls on.
template <class Region>
Var note_regions(Var out, Var in, Region region) {
  Graph& g = *out.graph;
  const Tensor& x = in.value();
  g.note_branch(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g.note_branch(region(x[i]));
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.clear_grad();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Var inputs[] = {a, b};
  return g.record(
      std::move(out), inputs,
      [a, b](std::span<const double> dy) {
        a.graph->accumulate(a, dy);
        a.graph->accumulate(b, dy);
      },
      "add");
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] - b.value()[i];
  }
  Var inputs[] = {a, b};
  return g.record(
      std::move(out), inputs,
      [a, b](std::span<const double> dy) {
        a.graph->accumulate(a, dy);
        if (a.graph->requires_grad(b)) {
          auto db = a.graph->grad_buffer(b);
          for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
        }
      },
      "sub");
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] * b.value()[i];
  }
  Var inputs[] = {a, b};
  return g.record(
      std::move(out), inputs,
      [a, b](std::span<const double> dy) {
        Graph& gr = *a.graph;
        if (gr.requires_grad(a)) {
          auto da = gr.grad_buffer(a);
          for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b.value()[i];
        }
        if (gr.requires_grad(b)) {
          auto db = gr.grad_buffer(b);
          for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a.value()[i];
        }
      },
      "mul");
}

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var relu(Var a) {
  Var out = unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  return note_regions(out, a, [](double x) { return std::uint64_t{x > 0.0}; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var abs(Var a) {
  Var out = unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
  return note_regions(out, a, [](double x) { return std::uint64_t{x > 0.0} + (x < 0.0 ? 2 : 0); });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ParameterError("clamp: lo must not exceed hi");
  Var out = unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
  return note_regions(out, a, [lo, hi](double x) {
    return std::uint64_t{x < lo} + (x > hi ? 2 : 0);
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  const auto& x = a.value().values();
  const double s = std::accumulate(x.begin(), x.end(), 0.0);
  Var inputs[] = {a};
  return g.record(
      Tensor::scalar(s), inputs,
      [a](std::span<const double> dy) {
        auto dx = a.graph->grad_buffer(a);
        for (auto& v : dx) v += dy[0];
      },
      "sum");
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), n = av.cols(), p = bv.cols();
  if (bv.rows() != n) {
    throw DimensionError("matmul: inner extents differ, " +
                         shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()));
  }
  Tensor out(Shape{m, p});
  const double* A = av.data();
  const double* B = bv.data();
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = C + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = A[i * n + k];
      if (aik == 0.0) continue;
      const double* bk = B + k * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
  Var inputs[] = {a, b};
  return g.record(
      std::move(out), inputs,
      [a, b, m, n, p](std::span<const double> dC) {
        Graph& gr = *a.graph;
        const double* A = a.value().data();
        const double* B = b.value().data();
        if (gr.requires_grad(a)) {
          // dA = dC * B^T
          double* dA = gr.grad_buffer(a).data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* dci = dC.data() + i * p;
            for (std::size_t k = 0; k < n; ++k) {
              const double* bk = B + k * p;
              double acc = 0.0;
              for (std::size_t j = 0; j < p; ++j) acc += dci[j] * bk[j];
              dA[i * n + k] += acc;
            }
          }
        }
        if (gr.requires_grad(b)) {
          // dB = A^T * dC
          double* dB = gr.grad_buffer(b).data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* dci = dC.data() + i * p;
            for (std::size_t k = 0; k < n; ++k) {
              const double aik = A[i * n + k];
              if (aik == 0.0) continue;
              double* dbk = dB + k * p;
              for (std::size_t j = 0; j < p; ++j) dbk[j] += aik * dci[j];
            }
          }
        }
      },
      "matmul");
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = x(i, j);
  Var inputs[] = {a};
  return g.record(
      std::move(out), inputs,
      [a, r, c](std::span<const double> dy) {
        auto dx = a.graph->grad_buffer(a);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dy[j * r + i];
      },
      "transpose");
}

Var conv1d_dilated(Var signal, Var kernels, std::size_t dilation) {
  Graph& g = graph_of(signal, kernels);
  const Tensor& x = signal.value();
  const Tensor& k = kernels.value();
  require_matrix(x, "conv1d_dilated");
  if (k.rank() != 3) {
    throw DimensionError("conv1d_dilated: kernels must be [Cout x Cin x W], got " +
                         shape_string(k.shape()));
  }
  const std::size_t T = x.rows(), cin = x.cols();
  const std::size_t cout = k.dim(0), W = k.dim(2);
  if (k.dim(1) != cin) {
    throw DimensionError("conv1d_dilated: kernel expects " +
                         std::to_string(k.dim(1)) + " input channels, signal has " +
                         std::to_string(cin));
  }
  if (W % 2 == 0) {
    throw ParameterError("conv1d_dilated: unsupported even kernel width " +
                         std::to_string(W));
  }
  if (dilation < 1) throw ParameterError("conv1d_dilated: dilation must be >= 1");

  const auto half = static_cast<std::ptrdiff_t>((W - 1) / 2);
  const auto dil = static_cast<std::ptrdiff_t>(dilation);
  const auto Ts = static_cast<std::ptrdiff_t>(T);

  // Repack to [W][Cout][Cin] so the inner loop is contiguous over channels.
  std::vector<double> packed(W * cout * cin);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t w = 0; w < W; ++w)
        packed[(w * cout + o) * cin + c] = k[(o * cin + c) * W + w];

  Tensor out(Shape{T, cout});
  for (std::ptrdiff_t t = 0; t < Ts; ++t) {
    double* yt = out.data() + t * cout;
    for (std::size_t w = 0; w < W; ++w) {
      const std::ptrdiff_t s = t + (static_cast<std::ptrdiff_t>(w) - half) * dil;
      if (s < 0 || s >= Ts) continue;
      const double* xs = x.data() + s * cin;
      for (std::size_t o = 0; o < cout; ++o) {
        const double* kw = packed.data() + (w * cout + o) * cin;
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c) acc += kw[c] * xs[c];
        yt[o] += acc;
      }
    }
  }

  Var inputs[] = {signal, kernels};
  return g.record(
      std::move(out), inputs,
      [signal, kernels, packed = std::move(packed), T, cin, cout, W, half,
       dil](std::span<const double> dy) {
        Graph& gr = *signal.graph;
        const Tensor& x = signal.value();
        const auto Ts = static_cast<std::ptrdiff_t>(T);
        const bool need_x = gr.requires_grad(signal);
        const bool need_k = gr.requires_grad(kernels);
        std::vector<double> dpacked(need_k ? W * cout * cin : 0, 0.0);
        double* dx = need_x ? gr.grad_buffer(signal).data() : nullptr;
        for (std::ptrdiff_t t = 0; t < Ts; ++t) {
          const double* dyt = dy.data() + t * cout;
          for (std::size_t w = 0; w < W; ++w) {
            const std::ptrdiff_t s = t + (static_cast<std::ptrdiff_t>(w) - half) * dil;
            if (s < 0 || s >= Ts) continue;
            const double* xs = x.data() + s * cin;
            for (std::size_t o = 0; o < cout; ++o) {
              const double go = dyt[o];
              if (go == 0.0) continue;
              if (need_x) {
                const double* kw = packed.data() + (w * cout + o) * cin;
                double* dxs = dx + s * cin;
                for (std::size_t c = 0; c < cin; ++c) dxs[c] += go * kw[c];
              }
              if (need_k) {
                double* dkw = dpacked.data() + (w * cout + o) * cin;
                for (std::size_t c = 0; c < cin; ++c) dkw[c] += go * xs[c];
              }
            }
          }
        }
        if (need_k) {
          auto dk = gr.grad_buffer(kernels);
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t w = 0; w < W; ++w)
                dk[(o * cin + c) * W + w] += dpacked[(w * cout + o) * cin + c];
        }
      },
      "conv1d_dilated");
}

Var add_row_bias(Var x, Var bias) {
  Graph& g = graph_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_row_bias");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (bv.size() != cols) {
    throw DimensionError("add_row_bias: bias of size " + std::to_string(bv.size()) +
                         " for " + std::to_string(cols) + " columns");
  }
  Tensor out = xv;
  out.clear_grad();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += bv[c];
  Var inputs[] = {x, bias};
  return g.record(
      std::move(out), inputs,
      [x, bias, rows, cols](std::span<const double> dy) {
        Graph& gr = *x.graph;
        gr.accumulate(x, dy);
        if (gr.requires_grad(bias)) {
          auto db = gr.grad_buffer(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
        }
      },
      "add_row_bias");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ParameterError("concat_cols: no inputs");
  Graph& g = graph_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    graph_of(parts[0], p);
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row counts differ");
    }
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out(Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[i], widths[i], out.data() + r * total + offset);
    offset += widths[i];
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return g.record(
      std::move(out), ins,
      [ins, widths, rows, total](std::span<const double> dy) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < ins.size(); ++i) {
          Graph& gr = *ins[i].graph;
          if (gr.requires_grad(ins[i])) {
            auto dx = gr.grad_buffer(ins[i]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[i]; ++c)
                dx[r * widths[i] + c] += dy[r * total + offset + c];
          }
          offset += widths[i];
        }
      },
      "concat_cols");
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  require_matrix(v, "slice_cols");
  const std::size_t rows = v.rows(), cols = v.cols();
  if (begin >= end || end > cols) {
    throw ParameterError("slice_cols: bad column range");
  }
  const std::size_t w = end - begin;
  Tensor out(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(v.data() + r * cols + begin, w, out.data() + r * w);
  Var inputs[] = {x};
  return g.record(
      std::move(out), inputs,
      [x, rows, cols, begin, w](std::span<const double> dy) {
        auto dx = x.graph->grad_buffer(x);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) dx[r * cols + begin + c] += dy[r * w + c];
      },
      "slice_cols");
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  if (v.rank() != 1 && v.rank() != 2) {
    throw DimensionError("slice_rows: expected a vector or matrix");
  }
  const std::size_t rows = v.dim(0);
  const std::size_t width = v.size() / rows;
  if (begin >= end || end > rows) throw ParameterError("slice_rows: bad row range");
  Shape shape = v.shape();
  shape[0] = end - begin;
  std::vector<double> vals(v.values().begin() + begin * width,
                           v.values().begin() + end * width);
  Var inputs[] = {x};
  return g.record(
      Tensor(std::move(shape), std::move(vals)), inputs,
      [x, begin, width](std::span<const double> dy) {
        auto dx = x.graph->grad_buffer(x);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * width + i] += dy[i];
      },
      "slice_rows");
}

Var row_norms(Var x) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  require_matrix(v, "row_norms");
  const std::size_t rows = v.rows(), cols = v.cols();
  Tensor out = Tensor::vector(row_l2_norms(v));
  std::vector<double> norms(out.values().begin(), out.values().end());
  Var inputs[] = {x};
  return g.record(
      std::move(out), inputs,
      [x, rows, cols, norms = std::move(norms)](std::span<const double> dy) {
        auto dx = x.graph->grad_buffer(x);
        const Tensor& v = x.value();
        for (std::size_t r = 0; r < rows; ++r) {
          if (norms[r] == 0.0 || dy[r] == 0.0) continue;
          const double s = dy[r] / norms[r];
          for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += s * v(r, c);
        }
      },
      "row_norms");
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  if (v.rank() != 1 && v.rank() != 2) {
    throw DimensionError("gather_rows: expected a vector or matrix");
  }
  if (indices.empty()) throw ParameterError("gather_rows: empty index set");
  const std::size_t rows = v.dim(0);
  const std::size_t width = v.size() / rows;
  Shape shape = v.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ParameterError("gather_rows: index out of range");
    std::copy_n(v.data() + indices[i] * width, width, out.data() + i * width);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  g.note_branch(idx.size());
  for (auto i : idx) g.note_branch(i);
  Var inputs[] = {x};
  return g.record(
      std::move(out), inputs,
      [x, idx = std::move(idx), width](std::span<const double> dy) {
        auto dx = x.graph->grad_buffer(x);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t c = 0; c < width; ++c) dx[idx[i] * width + c] += dy[i * width + c];
      },
      "gather_rows");
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  Var inputs[] = {a};
  return g.record(
      std::move(out), inputs,
      [a](std::span<const double> dy) { a.graph->accumulate(a, dy); }, "reshape");
}

Var row_softmax(Var a) {
  Graph& g = graph_of(a);
  const Tensor& v = a.value();
  require_matrix(v, "row_softmax");
  const std::size_t rows = v.rows(), cols = v.cols();
  Tensor out(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = v(r, 0);
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, v(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (out(r, c) = std::exp(v(r, c) - mx));
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= z;
  }
  std::vector<double> y(out.values().begin(), out.values().end());
  Var inputs[] = {a};
  return g.record(
      std::move(out), inputs,
      [a, y = std::move(y), rows, cols](std::span<const double> dy) {
        auto dx = a.graph->grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * y[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            dx[r * cols + c] += y[r * cols + c] * (dy[r * cols + c] - dot);
        }
      },
      "row_softmax");
}

Var dropout(Var a, const Tensor& mask) {
  Graph& g = graph_of(a);
  if (mask.shape() != a.value().shape()) {
    throw DimensionError("dropout: mask shape " + shape_string(mask.shape()) +
                         " does not match " + shape_string(a.value().shape()));
  }
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * mask[i];
  std::vector<double> m(mask.values().begin(), mask.values().end());
  Var inputs[] = {a};
  return g.record(
      std::move(out), inputs,
      [a, m = std::move(m)](std::span<const double> dy) {
        auto dx = a.graph->grad_buffer(a);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * m[i];
      },
      "dropout");
}

Tensor make_dropout_mask(const Shape& shape, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1)");
  }
  Tensor mask(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : mask.values()) v = u(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

std::vector<double> row_l2_norms(const Tensor& x) {
  if (x.rank() != 2) {
    throw DimensionError("row norms need a matrix, got " + shape_string(x.shape()));
  }
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c) * x(r, c);
    norms[r] = std::sqrt(s);
  }
  return norms;
}

std::vector<std::size_t> topk_rows_by_l2(const Tensor& x, std::size_t k) {
  const auto norms = row_l2_norms(x);
  if (k < 1 || k > norms.size()) {
    throw ParameterError("top-k needs 1 <= k <= T, got k=" + std::to_string(k) +
                         ", T=" + std::to_string(norms.size()));
  }
  std::vector<std::size_t> idx(norms.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (norms[a] != norms[b]) return norms[a] > norms[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

}  // namespace rtfm::ad
