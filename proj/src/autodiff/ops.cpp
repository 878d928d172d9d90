#include "contir/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "contir/error.hpp"

namespace contir::ad {

namespace {

Tape& tape_of(Var a, const char* op) {
  if (!a.valid()) throw StateError(std::string(op) + ": unbound input");
  return a.tape();
}

// Splits `shape` around `axis` into outer * extent * inner.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

struct Broadcast {
  Shape shape;
  bool same = true;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;

  std::size_t a(std::size_t i) const { return same ? i : a_index[i]; }
  std::size_t b(std::size_t i) const { return same ? i : b_index[i]; }
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.shape = a;
    return plan;
  }
  plan.same = false;
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  std::vector<std::size_t> a_dims(rank, 1), b_dims(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    if (i < a.size()) a_dims[rank - 1 - i] = a[a.size() - 1 - i];
    if (i < b.size()) b_dims[rank - 1 - i] = b[b.size() - 1 - i];
  }
  for (std::size_t i = 0; i < rank; ++i) {
    if (a_dims[i] == b_dims[i] || b_dims[i] == 1) {
      out[i] = a_dims[i];
    } else if (a_dims[i] == 1) {
      out[i] = b_dims[i];
    } else {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                       shape_string(b));
    }
  }
  // Strides into each operand; broadcast axes get stride 0.
  std::vector<std::size_t> a_stride(rank, 0), b_stride(rank, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    a_stride[i] = a_dims[i] == 1 ? 0 : sa;
    b_stride[i] = b_dims[i] == 1 ? 0 : sb;
    sa *= a_dims[i];
    sb *= b_dims[i];
  }
  const std::size_t n = element_count(out);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k < n; ++k) {
    plan.a_index[k] = ia;
    plan.b_index[k] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      ia += a_stride[d];
      ib += b_stride[d];
      if (counter[d] < out[d]) break;
      ia -= a_stride[d] * counter[d];
      ib -= b_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  plan.shape = std::move(out);
  return plan;
}

// f(x, y) forward; dfdx(x, y, out) and dfdy(x, y, out) local derivatives.
template <typename F, typename Dx, typename Dy>
Var binary(Var a, Var b, const char* op, F f, Dx dfdx, Dy dfdy) {
  Tape& tape = tape_of(a, op);
  Broadcast plan = plan_broadcast(a.shape(), b.shape(), op);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(plan.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[plan.a(i)], y[plan.b(i)]);
  return tape.record(
      std::move(out), {a, b},
      [plan = std::move(plan), dfdx, dfdy](const BackwardContext& ctx) {
        const Tensor& g = ctx.grad();
        const Tensor& x = ctx.input(0);
        const Tensor& y = ctx.input(1);
        const Tensor& o = ctx.output();
        if (Tensor* gx = ctx.input_grad(0)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            (*gx)[plan.a(i)] += g[i] * dfdx(x[plan.a(i)], y[plan.b(i)], o[i]);
          }
        }
        if (Tensor* gy = ctx.input_grad(1)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            (*gy)[plan.b(i)] += g[i] * dfdy(x[plan.a(i)], y[plan.b(i)], o[i]);
          }
        }
      },
      op);
}

// f(x) forward; dfdx(x, out) local derivative.
template <typename F, typename D>
Var unary(Var a, const char* op, F f, D dfdx) {
  Tape& tape = tape_of(a, op);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return tape.record(
      std::move(out), {a},
      [dfdx](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        const Tensor& x = ctx.input(0);
        const Tensor& o = ctx.output();
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * dfdx(x[i], o[i]);
      },
      op);
}

// c[m, n] += a[m, k] * b[k, n], with optional transposition of a or b.
void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      if (!trans_b) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var subtract(Var a, Var b) {
  return binary(
      a, b, "subtract", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var multiply(Var a, Var b) {
  return binary(
      a, b, "multiply", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var divide(Var a, Var b) {
  for (double v : b.value().values()) {
    if (v == 0.0) throw DomainError("divide: zero denominator");
  }
  return binary(
      a, b, "divide", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var shift(Var a, double offset) {
  return unary(
      a, "shift", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, "matmul");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_string(as) + " and " +
                     shape_string(bs));
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != k) {
    throw ShapeError("matmul: inner extents differ in " + shape_string(as) + " x " +
                     shape_string(bs));
  }
  std::size_t batch = 1;
  bool shared_b = bs.size() == 2;
  if (shared_b) {
    for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  } else {
    if (as.size() != bs.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      throw ShapeError("matmul: batch extents differ in " + shape_string(as) + " x " +
                       shape_string(bs));
    }
    for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  }
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (shared_b) {
    gemm_accumulate(av.data(), bv.data(), out.data(), batch * m, k, n, false, false);
  } else {
    for (std::size_t s = 0; s < batch; ++s) {
      gemm_accumulate(av.data() + s * m * k, bv.data() + s * k * n, out.data() + s * m * n, m, k,
                      n, false, false);
    }
  }
  return tape.record(
      std::move(out), {a, b},
      [batch, m, k, n, shared_b](const BackwardContext& ctx) {
        const Tensor& g = ctx.grad();
        const Tensor& av = ctx.input(0);
        const Tensor& bv = ctx.input(1);
        if (shared_b) {
          if (Tensor* ga = ctx.input_grad(0)) {
            gemm_accumulate(g.data(), bv.data(), ga->data(), batch * m, n, k, false, true);
          }
          if (Tensor* gb = ctx.input_grad(1)) {
            gemm_accumulate(av.data(), g.data(), gb->data(), k, batch * m, n, true, false);
          }
          return;
        }
        for (std::size_t s = 0; s < batch; ++s) {
          const double* gs = g.data() + s * m * n;
          if (Tensor* ga = ctx.input_grad(0)) {
            gemm_accumulate(gs, bv.data() + s * k * n, ga->data() + s * m * k, m, n, k, false,
                            true);
          }
          if (Tensor* gb = ctx.input_grad(1)) {
            gemm_accumulate(av.data() + s * m * k, gs, gb->data() + s * k * n, k, m, n, true,
                            false);
          }
        }
      },
      "matmul");
}

Var transpose(Var a) {
  Tape& tape = tape_of(a, "transpose");
  const Shape& s = a.shape();
  if (s.size() < 2) throw ShapeError("transpose: rank >= 2 required, got " + shape_string(s));
  const std::size_t r = s[s.size() - 2];
  const std::size_t c = s.back();
  const std::size_t batch = element_count(s) / (r * c == 0 ? 1 : r * c);
  Shape os = s;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  Tensor out(os);
  const Tensor& x = a.value();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = x[b * r * c + i * c + j];
    }
  }
  return tape.record(
      std::move(out), {a},
      [batch, r, c](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              (*gx)[b * r * c + i * c + j] += g[b * r * c + j * r + i];
            }
          }
        }
      },
      "transpose");
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = tape_of(parts.front(), "concat");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat: " + shape_string(s) + " does not match " + shape_string(first));
      }
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  AxisSplit split = split_axis(out_shape, axis, "concat");
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& x = parts[p].value();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(x.data() + o * extents[p] * split.inner, extents[p] * split.inner,
                  out.data() + (o * split.extent + offset) * split.inner);
    }
    offset += extents[p];
  }
  return tape.record(
      std::move(out), parts,
      [extents, split](const BackwardContext& ctx) {
        const Tensor& g = ctx.grad();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          if (Tensor* gx = ctx.input_grad(p)) {
            for (std::size_t o = 0; o < split.outer; ++o) {
              const double* src = g.data() + (o * split.extent + offset) * split.inner;
              double* dst = gx->data() + o * extents[p] * split.inner;
              for (std::size_t i = 0; i < extents[p] * split.inner; ++i) dst[i] += src[i];
            }
          }
          offset += extents[p];
        }
      },
      "concat");
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of(a, "reshape");
  Tensor out = a.value().reshaped(std::move(shape));
  return tape.record(
      std::move(out), {a},
      [](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
      },
      "reshape");
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(a, "slice");
  AxisSplit split = split_axis(a.shape(), axis, "slice");
  if (begin > end || end > split.extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for extent " + std::to_string(split.extent));
  }
  Shape os = a.shape();
  os[axis] = end - begin;
  Tensor out(os);
  const Tensor& x = a.value();
  const std::size_t width = (end - begin) * split.inner;
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(x.data() + (o * split.extent + begin) * split.inner, width,
                out.data() + o * width);
  }
  return tape.record(
      std::move(out), {a},
      [split, begin, width](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        for (std::size_t o = 0; o < split.outer; ++o) {
          double* dst = gx->data() + (o * split.extent + begin) * split.inner;
          const double* src = g.data() + o * width;
          for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
        }
      },
      "slice");
}

Var sum(Var a, std::size_t axis, bool keepdim) {
  Tape& tape = tape_of(a, "sum");
  AxisSplit split = split_axis(a.shape(), axis, "sum");
  Shape os = a.shape();
  if (keepdim) {
    os[axis] = 1;
  } else {
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  Tensor out(os);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t k = 0; k < split.extent; ++k) {
      const double* src = x.data() + (o * split.extent + k) * split.inner;
      double* dst = out.data() + o * split.inner;
      for (std::size_t i = 0; i < split.inner; ++i) dst[i] += src[i];
    }
  }
  return tape.record(
      std::move(out), {a},
      [split](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        for (std::size_t o = 0; o < split.outer; ++o) {
          for (std::size_t k = 0; k < split.extent; ++k) {
            double* dst = gx->data() + (o * split.extent + k) * split.inner;
            const double* src = g.data() + o * split.inner;
            for (std::size_t i = 0; i < split.inner; ++i) dst[i] += src[i];
          }
        }
      },
      "sum");
}

Var sum_all(Var a) {
  Tape& tape = tape_of(a, "sum_all");
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return tape.record(
      Tensor::scalar(total), {a},
      [](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const double g = ctx.grad()[0];
        for (double& v : gx->values()) v += g;
      },
      "sum_all");
}

Var mean_all(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var max(Var a, std::size_t axis, bool keepdim) {
  Tape& tape = tape_of(a, "max");
  AxisSplit split = split_axis(a.shape(), axis, "max");
  if (split.extent == 0) throw ShapeError("max: empty axis");
  Shape os = a.shape();
  if (keepdim) {
    os[axis] = 1;
  } else {
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  Tensor out(os);
  std::vector<std::size_t> argmax(out.size());
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t i = 0; i < split.inner; ++i) {
      std::size_t best = o * split.extent * split.inner + i;
      for (std::size_t k = 1; k < split.extent; ++k) {
        std::size_t idx = (o * split.extent + k) * split.inner + i;
        if (x[idx] > x[best]) best = idx;  // strict: first index wins ties
      }
      out[o * split.inner + i] = x[best];
      argmax[o * split.inner + i] = best;
    }
  }
  return tape.record(
      std::move(out), {a},
      [argmax = std::move(argmax)](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[argmax[i]] += g[i];
      },
      "max");
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double o) { return 1.0 - o * o; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log: argument must be > 0, got " + std::to_string(v));
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var embedding(Var table, const IndexTensor& ids) {
  Tape& tape = tape_of(table, "embedding");
  const Shape& ts = table.shape();
  if (ts.size() != 2) throw ShapeError("embedding: table must be [V, n], got " + shape_string(ts));
  if (element_count(ids.shape) != ids.ids.size()) {
    throw ShapeError("embedding: index shape " + shape_string(ids.shape) + " does not match " +
                     std::to_string(ids.ids.size()) + " ids");
  }
  const std::size_t vocab = ts[0];
  const std::size_t dim = ts[1];
  for (std::int64_t id : ids.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(id) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
  }
  Shape os = ids.shape;
  os.push_back(dim);
  Tensor out(os);
  const Tensor& t = table.value();
  for (std::size_t i = 0; i < ids.ids.size(); ++i) {
    std::copy_n(t.data() + static_cast<std::size_t>(ids.ids[i]) * dim, dim, out.data() + i * dim);
  }
  return tape.record(
      std::move(out), {table},
      [rows = ids.ids, dim](const BackwardContext& ctx) {
        Tensor* gt = ctx.input_grad(0);
        if (!gt) return;
        const Tensor& g = ctx.grad();
        for (std::size_t i = 0; i < rows.size(); ++i) {
          double* dst = gt->data() + static_cast<std::size_t>(rows[i]) * dim;
          const double* src = g.data() + i * dim;
          for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
        }
      },
      "embedding");
}

Var masked_fill(Var a, const Tensor& mask, double value) {
  Tape& tape = tape_of(a, "masked_fill");
  Broadcast plan = plan_broadcast(a.shape(), mask.shape(), "masked_fill");
  if (plan.shape != a.shape()) {
    throw ShapeError("masked_fill: mask " + shape_string(mask.shape()) +
                     " does not broadcast onto " + shape_string(a.shape()));
  }
  const Tensor& x = a.value();
  Tensor out(x.shape());
  std::vector<bool> keep(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    keep[i] = mask[plan.b(i)] != 0.0;
    out[i] = keep[i] ? x[i] : value;
  }
  return tape.record(
      std::move(out), {a},
      [keep = std::move(keep)](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (keep[i]) (*gx)[i] += g[i];
        }
      },
      "masked_fill");
}

Var conv1d(Var input, Var weight, Var bias) {
  Tape& tape = tape_of(input, "conv1d");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  const Shape& bs = bias.shape();
  if (is.size() != 3 || ws.size() != 3 || bs.size() != 1 || ws[2] != is[2] || bs[0] != ws[0]) {
    throw ShapeError("conv1d: expected input [B,L,C], weight [O,W,C], bias [O]; got " +
                     shape_string(is) + ", " + shape_string(ws) + ", " + shape_string(bs));
  }
  const std::size_t batch = is[0], length = is[1], in_ch = is[2];
  const std::size_t out_ch = ws[0], window = ws[1];
  if (window == 0 || length < window) {
    throw ShapeError("conv1d: window " + std::to_string(window) + " does not fit length " +
                     std::to_string(length));
  }
  const std::size_t positions = length - window + 1;
  Tensor out(Shape{batch, positions, out_ch});
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  const std::size_t span = window * in_ch;  // contiguous input window
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t p = 0; p < positions; ++p) {
      const double* xw = x.data() + (s * length + p) * in_ch;
      double* o = out.data() + (s * positions + p) * out_ch;
      for (std::size_t c = 0; c < out_ch; ++c) {
        const double* wc = w.data() + c * span;
        double acc = b[c];
        for (std::size_t j = 0; j < span; ++j) acc += wc[j] * xw[j];
        o[c] = acc;
      }
    }
  }
  return tape.record(
      std::move(out), {input, weight, bias},
      [batch, length, in_ch, out_ch, positions, span](const BackwardContext& ctx) {
        const Tensor& g = ctx.grad();
        const Tensor& x = ctx.input(0);
        const Tensor& w = ctx.input(1);
        Tensor* gx = ctx.input_grad(0);
        Tensor* gw = ctx.input_grad(1);
        Tensor* gb = ctx.input_grad(2);
        for (std::size_t s = 0; s < batch; ++s) {
          for (std::size_t p = 0; p < positions; ++p) {
            const std::size_t xoff = (s * length + p) * in_ch;
            const double* go = g.data() + (s * positions + p) * out_ch;
            for (std::size_t c = 0; c < out_ch; ++c) {
              const double gc = go[c];
              if (gc == 0.0) continue;
              if (gb) (*gb)[c] += gc;
              if (gw) {
                double* gwc = gw->data() + c * span;
                for (std::size_t j = 0; j < span; ++j) gwc[j] += gc * x[xoff + j];
              }
              if (gx) {
                const double* wc = w.data() + c * span;
                double* gxw = gx->data() + xoff;
                for (std::size_t j = 0; j < span; ++j) gxw[j] += gc * wc[j];
              }
            }
          }
        }
      },
      "conv1d");
}

Var l2_normalize(Var a, double eps) {
  Tape& tape = tape_of(a, "l2_normalize");
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("l2_normalize: rank >= 1 required");
  const std::size_t n = s.back();
  const std::size_t rows = n == 0 ? 0 : element_count(s) / n;
  const Tensor& x = a.value();
  Tensor out(s);
  std::vector<double> denom(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += xr[j] * xr[j];
    denom[r] = std::max(std::sqrt(sq), eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xr[j] / denom[r];
  }
  return tape.record(
      std::move(out), {a},
      [n, rows, eps, denom = std::move(denom)](const BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad();
        const Tensor& y = ctx.output();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * n;
          const double* yr = y.data() + r * n;
          double* dst = gx->data() + r * n;
          if (denom[r] > eps) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
            for (std::size_t j = 0; j < n; ++j) dst[j] += (gr[j] - yr[j] * dot) / denom[r];
          } else {
            for (std::size_t j = 0; j < n; ++j) dst[j] += gr[j] / eps;
          }
        }
      },
      "l2_normalize");
}

Var cosine_matrix(Var a, Var b) {
  return matmul(l2_normalize(a), transpose(l2_normalize(b)));
}

Var stop_gradient(Var a) { return tape_of(a, "stop_gradient").constant(a.value()); }

}  // namespace contir::ad
