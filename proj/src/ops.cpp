#include "hoi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "hoi/errors.hpp"
#include "hoi/kernels.hpp"

namespace hoi::ops {

namespace {

using NodeId = Tape::NodeId;
using Data = std::shared_ptr<const std::vector<double>>;

Data share(std::vector<double> v) { return std::make_shared<const std::vector<double>>(std::move(v)); }

NodeId id_of(const Tensor& t) { return t.node_id().value_or(-1); }

std::vector<NodeId> tracked(std::initializer_list<const Tensor*> ts) {
  std::vector<NodeId> out;
  for (const Tensor* t : ts)
    if (t->tape()) out.push_back(*t->node_id());
  return out;
}

// Gradient buffer of an input, or an empty span when it is a constant.
std::span<double> grad_of(Tape& tape, NodeId id) {
  if (id < 0) return {};
  return tape.grad(id);
}

bool masked_value(double x) { return kernels::is_masked(x) || x == -std::numeric_limits<double>::infinity(); }

template <class F, class D>
Tensor unary(const Tensor& x, F f, D dydx) {
  const auto xs = x.data();
  std::vector<double> y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) y[i] = f(xs[i]);
  Tape* tape = x.tape();
  if (!tape) return Tensor(x.shape(), std::move(y));
  auto yd = share(std::move(y));
  const Tensor xin = x.detach();
  const NodeId xid = id_of(x);
  return tape->record(x.shape(), yd, {xid}, [xin, yd, xid, dydx](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    const auto xv = xin.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xv[i], (*yd)[i]);
  });
}

// Equal shapes, or one side holding a single element.
Shape broadcast_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  throw DimensionError("elementwise op on shapes " + to_string(a.shape()) + " and " +
                       to_string(b.shape()));
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  Shape shape = broadcast_shape(a, b);
  const std::size_t n = numel(shape);
  const auto av = a.data(), bv = b.data();
  const bool sa = a.numel() == 1 && n != 1, sb = b.numel() == 1 && n != 1;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor(std::move(shape), std::move(y));
  const Tensor ain = a.detach(), bin = b.detach();
  const NodeId aid = id_of(a), bid = id_of(b);
  return tape->record(std::move(shape), std::move(y), tracked({&a, &b}),
                      [=](std::span<const double> g, Tape& t) {
                        auto ga = grad_of(t, aid);
                        auto gb = grad_of(t, bid);
                        const auto x = ain.data(), z = bin.data();
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          const double ai = x[sa ? 0 : i], bi = z[sb ? 0 : i];
                          if (!ga.empty()) ga[sa ? 0 : i] += g[i] * dfa(ai, bi);
                          if (!gb.empty()) gb[sb ? 0 : i] += g[i] * dfb(ai, bi);
                        }
                      });
}

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2)
    throw DimensionError(std::string(op) + " needs a matrix, got " + to_string(x.shape()));
}

}  // namespace

// ------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x / y; },
                [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x <= y ? x : y; },
                [](double x, double y) { return x <= y ? 1.0 : 0.0; },
                [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x >= y ? x : y; },
                [](double x, double y) { return x >= y ? 1.0 : 0.0; },
                [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        // d/dv log sigmoid(v) = sigmoid(-v)
        if (v <= 0) return 1.0 / (1.0 + std::exp(v));
        const double e = std::exp(-v);
        return e / (1.0 + e);
      });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor pow_scalar(const Tensor& x, double e) {
  return unary(x, [e](double v) { return std::pow(v, e); },
               [e](double v, double) { return v == 0.0 && e < 1.0 ? 0.0 : e * std::pow(v, e - 1.0); });
}

// -------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tape* tape = x.tape();
  if (!tape) return Tensor::scalar(s);
  const NodeId xid = id_of(x);
  return tape->record({}, std::vector<double>{s}, {xid}, [xid](std::span<const double> g, Tape& t) {
    for (auto& v : t.grad(xid)) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor l1_norm(const Tensor& x) { return sum(abs(x)); }

Tensor sum_rows(const Tensor& x) {
  require_matrix(x, "sum_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.data();
  std::vector<double> y(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i] += xv[i * c + j];
  Tape* tape = x.tape();
  if (!tape) return Tensor({r}, std::move(y));
  const NodeId xid = id_of(x);
  return tape->record({r}, std::move(y), {xid}, [xid, c](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || a.shape() != b.shape())
    throw DimensionError("dot needs equal-length vectors, got " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  return sum(mul(a, b));
}

// --------------------------------------------------- linear algebra/layout

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul inner dimensions disagree: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  std::vector<double> y(m * n);
  kernels::gemm({m, n, k, false, false}, a.data(), b.data(), y, false);
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor({m, n}, std::move(y));
  const Tensor ain = a.detach(), bin = b.detach();
  const NodeId aid = id_of(a), bid = id_of(b);
  return tape->record({m, n}, std::move(y), tracked({&a, &b}),
                      [=](std::span<const double> g, Tape& t) {
                        if (aid >= 0)  // dA = G B^T
                          kernels::gemm({m, k, n, false, true}, g, bin.data(), t.grad(aid), true);
                        if (bid >= 0)  // dB = A^T G
                          kernels::gemm({k, n, m, true, false}, ain.data(), g, t.grad(bid), true);
                      });
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.data();
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = xv[i * c + j];
  Tape* tape = x.tape();
  if (!tape) return Tensor({c, r}, std::move(y));
  const NodeId xid = id_of(x);
  return tape->record({c, r}, std::move(y), {xid}, [=](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  std::vector<double> y(x.data().begin(), x.data().end());
  Tape* tape = x.tape();
  if (!tape) return Tensor(std::move(shape), std::move(y));
  const NodeId xid = id_of(x);
  return tape->record(std::move(shape), std::move(y), {xid}, [xid](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  const std::size_t rank = parts[0].rank();
  if (rank == 0) throw DimensionError("concat_last needs rank >= 1");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (p.rank() != rank || !std::equal(lead.begin(), lead.end(), p.shape().begin()))
      throw DimensionError("concat_last: incompatible shape " + to_string(p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
    if (p.tape()) {
      if (tape && tape != p.tape()) throw ContractError("operands live on different tapes");
      tape = p.tape();
    }
  }
  const std::size_t outer = numel(lead);
  std::vector<double> y(outer * total);
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto v = parts[pi].data();
    const std::size_t w = widths[pi];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + o * w, w, y.begin() + o * total + off);
    off += w;
  }
  Shape shape = lead;
  shape.push_back(total);
  if (!tape) return Tensor(std::move(shape), std::move(y));
  std::vector<NodeId> ids, parents;
  for (const auto& p : parts) {
    ids.push_back(id_of(p));
    if (p.tape()) parents.push_back(*p.node_id());
  }
  return tape->record(std::move(shape), std::move(y), parents,
                      [=](std::span<const double> g, Tape& t) {
                        std::size_t o2 = 0;
                        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                          const std::size_t w = widths[pi];
                          if (ids[pi] >= 0) {
                            auto gp = t.grad(ids[pi]);
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t j = 0; j < w; ++j)
                                gp[o * w + j] += g[o * total + o2 + j];
                          }
                          o2 += w;
                        }
                      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  const std::size_t cols = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.dim(1) != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.dim(0);
    if (p.tape()) {
      if (tape && tape != p.tape()) throw ContractError("operands live on different tapes");
      tape = p.tape();
    }
  }
  std::vector<double> y;
  y.reserve(rows * cols);
  std::vector<NodeId> ids, parents;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    y.insert(y.end(), p.data().begin(), p.data().end());
    ids.push_back(id_of(p));
    sizes.push_back(p.numel());
    if (p.tape()) parents.push_back(*p.node_id());
  }
  if (!tape) return Tensor({rows, cols}, std::move(y));
  return tape->record({rows, cols}, std::move(y), parents,
                      [ids, sizes](std::span<const double> g, Tape& t) {
                        std::size_t off = 0;
                        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                          if (ids[pi] >= 0) {
                            auto gp = t.grad(ids[pi]);
                            for (std::size_t i = 0; i < sizes[pi]; ++i) gp[i] += g[off + i];
                          }
                          off += sizes[pi];
                        }
                      });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  require_matrix(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (start + len > c) throw DimensionError("slice_cols out of range");
  const auto xv = x.data();
  std::vector<double> y(r * len);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xv.begin() + i * c + start, len, y.begin() + i * len);
  Tape* tape = x.tape();
  if (!tape) return Tensor({r, len}, std::move(y));
  const NodeId xid = id_of(x);
  return tape->record({r, len}, std::move(y), {xid}, [=](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) gx[i * c + start + j] += g[i * len + j];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.data();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> y(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= r) throw DimensionError("gather_rows index out of range");
    std::copy_n(xv.begin() + idx[i] * c, c, y.begin() + i * c);
  }
  Tape* tape = x.tape();
  const std::size_t n = idx.size();
  if (!tape) return Tensor({n, c}, std::move(y));
  const NodeId xid = id_of(x);
  return tape->record({n, c}, std::move(y), {xid}, [=](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += g[i * c + j];
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> cols) {
  require_matrix(x, "pick");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (cols.size() != r) throw DimensionError("pick needs one column per row");
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  std::vector<double> y(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (idx[i] >= c) throw DimensionError("pick column out of range");
    y[i] = x.data()[i * c + idx[i]];
  }
  Tape* tape = x.tape();
  if (!tape) return Tensor({r}, std::move(y));
  const NodeId xid = id_of(x);
  return tape->record({r}, std::move(y), {xid}, [=](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < r; ++i) gx[i * c + idx[i]] += g[i];
  });
}

// ------------------------------------------------------------ normalisation

namespace {

struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
  std::size_t at(std::size_t o, std::size_t j, std::size_t in) const {
    return (o * len + j) * inner + in;
  }
};

AxisLayout layout(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for " +
                         to_string(x.shape()));
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= x.shape()[i];
  l.len = x.shape()[axis];
  for (std::size_t i = axis + 1; i < x.rank(); ++i) l.inner *= x.shape()[i];
  return l;
}

// Fills y with softmax (or log-softmax) along the axis; masked slots get 0
// (softmax) or kMasked (log-softmax).
void softmax_forward(const AxisLayout& l, std::span<const double> x, std::span<double> y,
                     bool log_space) {
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t in = 0; in < l.inner; ++in) {
      double mx = kernels::kMasked;
      bool any = false;
      for (std::size_t j = 0; j < l.len; ++j) {
        const double v = x[l.at(o, j, in)];
        if (masked_value(v)) continue;
        any = true;
        mx = std::max(mx, v);
      }
      if (!any) throw DegenerateRowError("softmax over a slice where every entry is masked");
      double denom = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) {
        const double v = x[l.at(o, j, in)];
        if (!masked_value(v)) denom += std::exp(v - mx);
      }
      const double log_denom = std::log(denom);
      for (std::size_t j = 0; j < l.len; ++j) {
        const std::size_t k = l.at(o, j, in);
        const double v = x[k];
        if (masked_value(v)) {
          y[k] = log_space ? kernels::kMasked : 0.0;
        } else {
          y[k] = log_space ? (v - mx) - log_denom : std::exp(v - mx) / denom;
        }
      }
    }
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisLayout l = layout(x, axis);
  std::vector<double> y(x.numel());
  softmax_forward(l, x.data(), y, false);
  Tape* tape = x.tape();
  if (!tape) return Tensor(x.shape(), std::move(y));
  auto yd = share(std::move(y));
  const NodeId xid = id_of(x);
  return tape->record(x.shape(), yd, {xid}, [=](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    const auto& yv = *yd;
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t in = 0; in < l.inner; ++in) {
        double s = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) s += yv[l.at(o, j, in)] * g[l.at(o, j, in)];
        for (std::size_t j = 0; j < l.len; ++j) {
          const std::size_t k = l.at(o, j, in);
          gx[k] += yv[k] * (g[k] - s);
        }
      }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisLayout l = layout(x, axis);
  std::vector<double> y(x.numel());
  softmax_forward(l, x.data(), y, true);
  Tape* tape = x.tape();
  if (!tape) return Tensor(x.shape(), std::move(y));
  auto yd = share(std::move(y));
  const NodeId xid = id_of(x);
  return tape->record(x.shape(), yd, {xid}, [=](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    const auto& yv = *yd;
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t in = 0; in < l.inner; ++in) {
        double gs = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) {
          const std::size_t k = l.at(o, j, in);
          if (!kernels::is_masked(yv[k])) gs += g[k];
        }
        for (std::size_t j = 0; j < l.len; ++j) {
          const std::size_t k = l.at(o, j, in);
          if (kernels::is_masked(yv[k])) continue;
          gx[k] += g[k] - std::exp(yv[k]) * gs;
        }
      }
  });
}

Tensor l2_normalize(const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) throw DimensionError("l2_normalize needs rank 1 or 2");
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
  constexpr double kEps = 1e-12;
  const auto xv = x.data();
  std::vector<double> y(x.numel());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += xv[i * cols + j] * xv[i * cols + j];
    const double n = std::max(std::sqrt(ss), kEps);
    (*norms)[i] = n;
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = xv[i * cols + j] / n;
  }
  Tape* tape = x.tape();
  if (!tape) return Tensor(x.shape(), std::move(y));
  auto yd = share(std::move(y));
  const NodeId xid = id_of(x);
  return tape->record(x.shape(), yd, {xid}, [=](std::span<const double> g, Tape& t) {
    auto gx = t.grad(xid);
    const auto& yv = *yd;
    for (std::size_t i = 0; i < rows; ++i) {
      double yg = 0.0;
      for (std::size_t j = 0; j < cols; ++j) yg += yv[i * cols + j] * g[i * cols + j];
      const double n = (*norms)[i];
      for (std::size_t j = 0; j < cols; ++j)
        gx[i * cols + j] += (g[i * cols + j] - yv[i * cols + j] * yg) / n;
    }
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  return dot(l2_normalize(a), l2_normalize(b));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t r = x.dim(0), d = x.dim(1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw DimensionError("layer_norm affine parameters must have shape [" + std::to_string(d) + "]");
  const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(r * d);
  auto inv = std::make_shared<std::vector<double>>(r);
  std::vector<double> y(r * d);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv[i * d + j] - mu) * (xv[i * d + j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv[i * d + j] - mu) * is;
      (*xhat)[i * d + j] = h;
      y[i * d + j] = h * gv[j] + bv[j];
    }
  }
  Tape* tape = common_tape({&x, &gamma, &beta});
  if (!tape) return Tensor({r, d}, std::move(y));
  const Tensor gin = gamma.detach();
  const NodeId xid = id_of(x), gid = id_of(gamma), bid = id_of(beta);
  return tape->record({r, d}, std::move(y), tracked({&x, &gamma, &beta}),
                      [=](std::span<const double> g, Tape& t) {
                        const auto gam = gin.data();
                        const auto& h = *xhat;
                        if (gid >= 0) {
                          auto gg = t.grad(gid);
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * h[i * d + j];
                        }
                        if (bid >= 0) {
                          auto gb = t.grad(bid);
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                        }
                        if (xid >= 0) {
                          auto gx = t.grad(xid);
                          const double dd = static_cast<double>(d);
                          for (std::size_t i = 0; i < r; ++i) {
                            double s1 = 0.0, s2 = 0.0;
                            for (std::size_t j = 0; j < d; ++j) {
                              const double dh = g[i * d + j] * gam[j];
                              s1 += dh;
                              s2 += dh * h[i * d + j];
                            }
                            for (std::size_t j = 0; j < d; ++j) {
                              const double dh = g[i * d + j] * gam[j];
                              gx[i * d + j] += (*inv)[i] / dd * (dd * dh - s1 - h[i * d + j] * s2);
                            }
                          }
                        }
                      });
}

// ------------------------------------------------------------------ layers

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_matrix(w, "linear weight");
  const bool vec = x.rank() == 1;
  if (!vec) require_matrix(x, "linear input");
  const std::size_t n = vec ? 1 : x.dim(0);
  const std::size_t in = vec ? x.dim(0) : x.dim(1);
  const std::size_t out = w.dim(1);
  if (w.dim(0) != in || b.shape() != Shape{out})
    throw DimensionError("linear: input " + to_string(x.shape()) + ", weight " +
                         to_string(w.shape()) + ", bias " + to_string(b.shape()));
  std::vector<double> y(n * out);
  kernels::gemm({n, out, in, false, false}, x.data(), w.data(), y, false);
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out; ++j) y[i * out + j] += bv[j];
  Shape shape = vec ? Shape{out} : Shape{n, out};
  Tape* tape = common_tape({&x, &w, &b});
  if (!tape) return Tensor(std::move(shape), std::move(y));
  const Tensor xin = x.detach(), win = w.detach();
  const NodeId xid = id_of(x), wid = id_of(w), bid = id_of(b);
  return tape->record(std::move(shape), std::move(y), tracked({&x, &w, &b}),
                      [=](std::span<const double> g, Tape& t) {
                        if (xid >= 0)
                          kernels::gemm({n, in, out, false, true}, g, win.data(), t.grad(xid), true);
                        if (wid >= 0)
                          kernels::gemm({in, out, n, true, false}, xin.data(), g, t.grad(wid), true);
                        if (bid >= 0) {
                          auto gb = t.grad(bid);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < out; ++j) gb[j] += g[i * out + j];
                        }
                      });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask,
                 double scale) {
  require_matrix(q, "attention q");
  require_matrix(k, "attention k");
  require_matrix(v, "attention v");
  const kernels::AttentionShape s{q.dim(0), k.dim(0), q.dim(1), v.dim(1)};
  if (k.dim(1) != s.key_dim || v.dim(0) != s.keys)
    throw DimensionError("attention: q " + to_string(q.shape()) + ", k " + to_string(k.shape()) +
                         ", v " + to_string(v.shape()));
  if (!mask.empty()) {
    if (mask.shape() != Shape{s.queries, s.keys})
      throw DimensionError("attention mask must be [queries x keys], got " + to_string(mask.shape()));
    if (mask.tape()) throw ContractError("attention masks are constants");
    const auto mv = mask.data();
    for (std::size_t i = 0; i < s.queries; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < s.keys && !any; ++j) any = !masked_value(mv[i * s.keys + j]);
      if (!any)
        throw DegenerateRowError("attention row " + std::to_string(i) + " has every key masked");
    }
  } else if (s.keys == 0) {
    throw DegenerateRowError("attention over zero keys");
  }
  // -inf from callers is folded into the finite sentinel the kernels expect.
  std::vector<double> mvals(mask.data().begin(), mask.data().end());
  for (auto& m : mvals)
    if (masked_value(m)) m = kernels::kMasked;
  auto probs = std::make_shared<std::vector<double>>(s.queries * s.keys);
  std::vector<double> y(s.queries * s.value_dim);
  kernels::attention_forward(s, q.data(), k.data(), v.data(), mvals, scale, *probs, y);
  Tape* tape = common_tape({&q, &k, &v});
  if (!tape) return Tensor({s.queries, s.value_dim}, std::move(y));
  const Tensor qin = q.detach(), kin = k.detach(), vin = v.detach();
  const NodeId qid = id_of(q), kid = id_of(k), vid = id_of(v);
  return tape->record({s.queries, s.value_dim}, std::move(y), tracked({&q, &k, &v}),
                      [=](std::span<const double> g, Tape& t) {
                        kernels::attention_backward(s, qin.data(), kin.data(), vin.data(), *probs, g,
                                                    scale, grad_of(t, qid), grad_of(t, kid),
                                                    grad_of(t, vid));
                      });
}

}  // namespace hoi::ops
