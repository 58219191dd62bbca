#include "onlstm/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "onlstm/errors.hpp"

namespace onlstm {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}
ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

Tape& tape_of(Var v) {
  if (!v.valid()) throw ContractError("operation on an unbound variable");
  return *v.tape();
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      out[k] = std::exp(in[k] - mx);
      total += out[k];
    }
    for (double& v : out) v /= total;
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] - log_z;
  }
  return y;
}

Tensor cumsum_rows(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    double running = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      running += in[k];
      out[k] = running;
    }
  }
  return y;
}

Tensor cumax_rows(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double running = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      running += std::exp(in[k] - mx);
      out[k] = running;
    }
    // Dividing the partial sums by the full sum keeps every entry <= 1 and the
    // last exactly 1; summing normalized probabilities can overshoot by ulps.
    for (double& v : out) v /= running;
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions of " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " disagree");
  }
  Tensor c({a.rows(), b.cols()});
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
  return c;
}

}  // namespace onlstm

namespace onlstm::ops {
namespace {

// Elementwise op whose derivative is expressed through input x and output y.
template <typename Fn, typename Deriv>
Var elementwise(Var a, const char* name, Primitive primitive, Fn fn, Deriv deriv) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i]);
  return tape.record(std::move(y), {a}, name,
                     [a, deriv, primitive](Tape& t, const Tensor& out, const Tensor& g) {
                       const Tensor& xv = t.value(a);
                       Tensor& ga = t.grad_of(a);
                       const double s = derivative_scale(primitive);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         ga[i] += s * g[i] * deriv(xv[i], out[i]);
                       }
                     });
}

void add_into(Tape& t, Var target, const Tensor& g, double scale) {
  if (!t.needs_grad(target)) return;
  Tensor& dst = t.grad_of(target);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a);
  Tensor c = onlstm::matmul(a.value(), b.value());
  return tape.record(std::move(c), {a, b}, "matmul", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const double s = derivative_scale(Primitive::kMatmul);
    if (t.needs_grad(a)) as_matrix(t.grad_of(a)).noalias() += s * as_matrix(g) * as_matrix(t.value(b)).transpose();
    if (t.needs_grad(b)) as_matrix(t.grad_of(b)).noalias() += s * as_matrix(t.value(a)).transpose() * as_matrix(g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_nt");
  require_matrix(bv, "matmul_nt");
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: inner dimensions of " + shape_string(av.shape()) +
                         " and transposed " + shape_string(bv.shape()) + " disagree");
  }
  Tensor c({av.rows(), bv.rows()});
  as_matrix(c).noalias() = as_matrix(av) * as_matrix(bv).transpose();
  return tape.record(std::move(c), {a, b}, "matmul_nt", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const double s = derivative_scale(Primitive::kMatmul);
    if (t.needs_grad(a)) as_matrix(t.grad_of(a)).noalias() += s * as_matrix(g) * as_matrix(t.value(b));
    if (t.needs_grad(b)) as_matrix(t.grad_of(b)).noalias() += s * as_matrix(g).transpose() * as_matrix(t.value(a));
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return tape.record(std::move(y), {a, b}, "add", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const double s = derivative_scale(Primitive::kAdd);
    add_into(t, a, g, s);
    add_into(t, b, g, s);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return tape.record(std::move(y), {a, b}, "sub", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const double s = derivative_scale(Primitive::kAdd);
    add_into(t, a, g, s);
    add_into(t, b, g, -s);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return tape.record(std::move(y), {a, b}, "mul", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const double s = derivative_scale(Primitive::kMul);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_of(a);
      const Tensor& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_of(b);
      const Tensor& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += s * g[i] * av[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  Tape& tape = tape_of(a);
  const Tensor& bv = bias.value();
  Tensor y = a.value();
  if (bv.size() != y.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bv.shape()) + " does not match rows of " +
                         shape_string(y.shape()));
  }
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += bv[k];
  }
  return tape.record(std::move(y), {a, bias}, "add_row",
                     [a, bias](Tape& t, const Tensor&, const Tensor& g) {
                       const double s = derivative_scale(Primitive::kAdd);
                       add_into(t, a, g, s);
                       if (t.needs_grad(bias)) {
                         Tensor& gb = t.grad_of(bias);
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           auto row = g.row(r);
                           for (std::size_t k = 0; k < row.size(); ++k) gb[k] += s * row[k];
                         }
                       }
                     });
}

Var affine(Var a, double scale, double shift) {
  Tape& tape = tape_of(a);
  Tensor y = a.value();
  for (double& v : y.values()) v = scale * v + shift;
  return tape.record(std::move(y), {a}, "affine", [a, scale](Tape& t, const Tensor&, const Tensor& g) {
    add_into(t, a, g, scale * derivative_scale(Primitive::kAdd));
  });
}

Var sigmoid(Var a) {
  return elementwise(
      a, "sigmoid", Primitive::kSigmoid,
      [](double x) {
        // Split by sign so exp never overflows.
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return elementwise(
      a, "tanh", Primitive::kTanh, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return elementwise(
      a, "relu", Primitive::kAdd, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var abs(Var a) {
  return elementwise(
      a, "abs", Primitive::kAdd, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var softmax(Var a) {
  Tape& tape = tape_of(a);
  return tape.record(softmax_rows(a.value()), {a}, "softmax",
                     [a](Tape& t, const Tensor& y, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       const double s = derivative_scale(Primitive::kSoftmax);
                       for (std::size_t r = 0; r < y.rows(); ++r) {
                         auto yr = y.row(r);
                         auto gr = g.row(r);
                         auto dr = ga.row(r);
                         double dot = 0.0;
                         for (std::size_t k = 0; k < yr.size(); ++k) dot += gr[k] * yr[k];
                         for (std::size_t k = 0; k < yr.size(); ++k) dr[k] += s * yr[k] * (gr[k] - dot);
                       }
                     });
}

Var cumsum(Var a) {
  Tape& tape = tape_of(a);
  return tape.record(cumsum_rows(a.value()), {a}, "cumsum",
                     [a](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       const double s = derivative_scale(Primitive::kCumsum);
                       for (std::size_t r = 0; r < g.rows(); ++r) {
                         auto gr = g.row(r);
                         auto dr = ga.row(r);
                         double running = 0.0;
                         for (std::size_t k = gr.size(); k-- > 0;) {
                           running += gr[k];
                           dr[k] += s * running;
                         }
                       }
                     });
}

Var cumax(Var a) {
  Tape& tape = tape_of(a);
  return tape.record(cumax_rows(a.value()), {a}, "cumax",
                     [a](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       const Tensor p = softmax_rows(a.value());
                       const double s_cumsum = derivative_scale(Primitive::kCumsum);
                       const double s_softmax = derivative_scale(Primitive::kSoftmax);
                       std::vector<double> suffix;
                       for (std::size_t r = 0; r < g.rows(); ++r) {
                         auto gr = g.row(r);
                         auto pr = p.row(r);
                         auto dr = ga.row(r);
                         // Through the prefix sum: suffix sums of g.
                         suffix.assign(gr.size(), 0.0);
                         double running = 0.0;
                         for (std::size_t k = gr.size(); k-- > 0;) suffix[k] = s_cumsum * (running += gr[k]);
                         // Through the softmax.
                         double dot = 0.0;
                         for (std::size_t k = 0; k < pr.size(); ++k) dot += suffix[k] * pr[k];
                         for (std::size_t k = 0; k < pr.size(); ++k) dr[k] += s_softmax * pr[k] * (suffix[k] - dot);
                       }
                     });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape& tape = tape_of(parts.front());
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row counts differ (" + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()) + ")");
    }
    cols += p.value().cols();
  }
  Shape shape = parts.front().shape();
  shape.back() = cols;
  Tensor y(shape);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(pv.row(r).data(), pv.cols(), y.row(r).data() + offset);
    offset += pv.cols();
  }
  return tape.record(std::move(y), parts, "concat_cols", [parts](Tape& t, const Tensor&, const Tensor& g) {
    const double s = derivative_scale(Primitive::kConcat);
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t c = t.value(p).cols();
      if (t.needs_grad(p)) {
        Tensor& gp = t.grad_of(p);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row(r);
          auto dst = gp.row(r);
          for (std::size_t k = 0; k < c; ++k) dst[k] += s * src[off + k];
        }
      }
      off += c;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  Tape& tape = tape_of(parts.front());
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_rows");
    if (p.value().cols() != cols) {
      throw DimensionError("concat_rows: column counts differ (" +
                           shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()) + ")");
    }
    rows += p.value().rows();
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  for (const Var& p : parts) {
    auto v = p.value().values();
    values.insert(values.end(), v.begin(), v.end());
  }
  return tape.record(Tensor({rows, cols}, std::move(values)), parts, "concat_rows",
                     [parts](Tape& t, const Tensor&, const Tensor& g) {
                       const double s = derivative_scale(Primitive::kConcat);
                       std::size_t off = 0;
                       for (const Var& p : parts) {
                         const std::size_t n = t.value(p).size();
                         if (t.needs_grad(p)) {
                           Tensor& gp = t.grad_of(p);
                           for (std::size_t i = 0; i < n; ++i) gp[i] += s * g[off + i];
                         }
                         off += n;
                       }
                     });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (count == 0 || begin + count > x.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape.back() = count;
  Tensor y(shape);
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy_n(x.row(r).data() + begin, count, y.row(r).data());
  return tape.record(std::move(y), {a}, "slice_cols",
                     [a, begin, count](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       const double s = derivative_scale(Primitive::kSlice);
                       for (std::size_t r = 0; r < g.rows(); ++r) {
                         auto src = g.row(r);
                         auto dst = ga.row(r);
                         for (std::size_t k = 0; k < count; ++k) dst[begin + k] += s * src[k];
                       }
                     });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  require_matrix(x, "slice_rows");
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t width = x.cols();
  std::vector<double> values(x.data() + begin * width, x.data() + (begin + count) * width);
  return tape.record(Tensor({count, width}, std::move(values)), {a}, "slice_rows",
                     [a, begin](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       const double s = derivative_scale(Primitive::kSlice);
                       const std::size_t offset = begin * g.cols();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += s * g[i];
                     });
}

Var repeat_cols(Var a, std::size_t times) {
  Tape& tape = tape_of(a);
  if (times == 0) throw ContractError("repeat_cols: repeat count must be positive");
  const Tensor& x = a.value();
  Shape shape = x.shape();
  shape.back() *= times;
  Tensor y(shape);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    auto dst = y.row(r);
    for (std::size_t k = 0; k < src.size(); ++k) std::fill_n(dst.data() + k * times, times, src[k]);
  }
  return tape.record(std::move(y), {a}, "repeat_cols", [a, times](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    const double s = derivative_scale(Primitive::kRepeat);
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      auto src = g.row(r);
      auto dst = ga.row(r);
      for (std::size_t k = 0; k < dst.size(); ++k) {
        double total = 0.0;
        for (std::size_t j = 0; j < times; ++j) total += src[k * times + j];
        dst[k] += s * total;
      }
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& tape = tape_of(table);
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  const std::size_t width = tv.cols();
  Tensor y({ids.size(), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(ids[r]) + " outside table " +
                           shape_string(tv.shape()));
    }
    std::copy_n(tv.row(static_cast<std::size_t>(ids[r])).data(), width, y.row(r).data());
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return tape.record(std::move(y), {table}, "gather_rows",
                     [table, kept = std::move(kept)](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& gt = t.grad_of(table);
                       const double s = derivative_scale(Primitive::kGather);
                       for (std::size_t r = 0; r < kept.size(); ++r) {
                         auto src = g.row(r);
                         auto dst = gt.row(static_cast<std::size_t>(kept[r]));
                         for (std::size_t k = 0; k < src.size(); ++k) dst[k] += s * src[k];
                       }
                     });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return tape.record(Tensor::scalar(total), {a}, "sum", [a](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    const double s = derivative_scale(Primitive::kAdd) * g[0];
    for (double& v : ga.values()) v += s;
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Tape& tape = tape_of(logits);
  const Tensor& z = logits.value();
  if (targets.size() != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(z.shape()));
  }
  Tensor probs = softmax_rows(z);
  const Tensor logp = log_softmax_rows(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= z.cols()) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) + " outside " +
                           std::to_string(z.cols()) + " classes");
    }
    loss -= logp.at(r, static_cast<std::size_t>(targets[r]));
  }
  std::vector<int> kept(targets.begin(), targets.end());
  return tape.record(Tensor::scalar(loss), {logits}, "cross_entropy",
                     [logits, kept = std::move(kept), probs = std::move(probs)](
                         Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& gz = t.grad_of(logits);
                       const double s = derivative_scale(Primitive::kCrossEntropy) * g[0];
                       for (std::size_t r = 0; r < kept.size(); ++r) {
                         auto pr = probs.row(r);
                         auto dr = gz.row(r);
                         for (std::size_t k = 0; k < pr.size(); ++k) dr[k] += s * pr[k];
                         dr[static_cast<std::size_t>(kept[r])] -= s;
                       }
                     });
}

}  // namespace onlstm::ops
