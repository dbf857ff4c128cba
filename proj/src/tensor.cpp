#include "fusioncell/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fusioncell/kernels.hpp"

namespace fc {

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

bool recorded(const Tensor& t) { return t.node >= 0; }

}  // namespace

Tensor Tape::constant(Shape shape, std::vector<double> vals) {
  if (shape.numel() != static_cast<int64_t>(vals.size()))
    throw std::invalid_argument("constant: shape/data size mismatch");
  check_finite(vals, "constant");
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(std::move(vals));
  t.tape = this;
  return t;
}

Tensor Tape::constant(Shape shape, double fill) {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(shape.numel(), fill);
  t.tape = this;
  return t;
}

Tensor Tape::leaf(Param& p) {
  check_finite(p.value, p.name.c_str());
  Tensor t;
  t.shape = p.shape;
  t.data = std::make_shared<std::vector<double>>(p.value);
  t.tape = this;
  t.node = static_cast<int>(nodes_.size());
  Node n;
  n.param = &p;
  n.numel = p.shape.numel();
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return t;
}

Tensor Tape::make(Shape shape, std::vector<double> vals,
                  const std::vector<const Tensor*>& inputs, BackFn back) {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(std::move(vals));
  t.tape = this;
  bool any = false;
  for (const Tensor* in : inputs)
    if (in && recorded(*in)) any = true;
  if (!any) return t;  // constants flow through without tape entries
  t.node = static_cast<int>(nodes_.size());
  Node n;
  n.back = std::move(back);
  n.numel = shape.numel();
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return t;
}

std::vector<double>& Tape::grad_buf(const Tensor& t) {
  if (t.node < 0 || t.tape != this) throw std::logic_error("grad_buf: tensor not on this tape");
  auto& g = grads_[t.node];
  if (g.empty()) g.assign(t.numel(), 0.0);
  return g;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!recorded(loss) || loss.tape != this)
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  if (used_) throw std::logic_error("backward: tape already consumed");
  used_ = true;
  grads_[loss.node].assign(1, 1.0);
  for (int i = loss.node; i >= 0; --i) {
    auto& g = grads_[i];
    if (g.empty()) continue;  // not on the path to the loss
    Node& n = nodes_[i];
    if (n.param) {
      auto& pg = n.param->grad;
      for (size_t j = 0; j < g.size(); ++j) pg[j] += g[j];
    } else if (n.back) {
      n.back(*this, g);
    }
  }
}

const std::vector<double>& Tape::grad(const Tensor& t) {
  if (t.node < 0 || t.tape != this) throw std::logic_error("grad: tensor not on this tape");
  if (grads_[t.node].empty()) grads_[t.node].assign(t.numel(), 0.0);
  return grads_[t.node];
}

// ---------------------------------------------------------------------------

namespace {

void accumulate(Tape& tape, const Tensor& in, const std::vector<double>& g) {
  if (in.node < 0) return;
  auto& buf = tape.grad_buf(in);
  for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

Tape& tape_of(const Tensor& a, const Tensor& b) {
  Tape* t = a.tape ? a.tape : b.tape;
  if (!t) throw std::invalid_argument("op: tensors have no tape");
  if (a.tape && b.tape && a.tape != b.tape)
    throw std::invalid_argument("op: tensors from different tapes");
  return *t;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims differ");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<int64_t>(m) * n);
  kernels::matmul(a.data->data(), b.data->data(), out.data(), m, k, n);
  Tape& tp = tape_of(a, b);
  Tensor ac = a, bc = b;
  return tp.make({m, n}, std::move(out), {&a, &b},
                 [ac, bc, m, k, n](Tape& t, const std::vector<double>& g) {
                   if (ac.node >= 0) {
                     // dA = G * B^T
                     std::vector<double> bt(static_cast<int64_t>(n) * k);
                     for (int i = 0; i < k; ++i)
                       for (int j = 0; j < n; ++j) bt[static_cast<int64_t>(j) * k + i] = (*bc.data)[static_cast<int64_t>(i) * n + j];
                     std::vector<double> da(static_cast<int64_t>(m) * k);
                     kernels::matmul(g.data(), bt.data(), da.data(), m, n, k);
                     accumulate(t, ac, da);
                   }
                   if (bc.node >= 0) {
                     // dB = A^T * G
                     std::vector<double> at(static_cast<int64_t>(k) * m);
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < k; ++j) at[static_cast<int64_t>(j) * m + i] = (*ac.data)[static_cast<int64_t>(i) * k + j];
                     std::vector<double> db(static_cast<int64_t>(k) * n);
                     kernels::matmul(at.data(), g.data(), db.data(), k, m, n);
                     accumulate(t, bc, db);
                   }
                 });
}

namespace {

// Shared add/mul with optional 1xC row broadcast of b.
Tensor ewise(const Tensor& a, const Tensor& b, bool is_mul) {
  const bool bcast = !(a.shape == b.shape);
  if (bcast && !(b.rows() == 1 && b.cols() == a.cols()))
    throw std::invalid_argument("add/mul: shape mismatch");
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      const double av = (*a.data)[static_cast<int64_t>(i) * c + j];
      const double bv = (*b.data)[bcast ? j : static_cast<int64_t>(i) * c + j];
      out[static_cast<int64_t>(i) * c + j] = is_mul ? av * bv : av + bv;
    }
  Tape& tp = tape_of(a, b);
  Tensor ac = a, bc = b;
  return tp.make(a.shape, std::move(out), {&a, &b},
                 [ac, bc, bcast, is_mul, r, c](Tape& t, const std::vector<double>& g) {
                   if (ac.node >= 0) {
                     if (!is_mul) {
                       accumulate(t, ac, g);
                     } else {
                       std::vector<double> da(ac.numel());
                       for (int i = 0; i < r; ++i)
                         for (int j = 0; j < c; ++j)
                           da[static_cast<int64_t>(i) * c + j] =
                               g[static_cast<int64_t>(i) * c + j] * (*bc.data)[bcast ? j : static_cast<int64_t>(i) * c + j];
                       accumulate(t, ac, da);
                     }
                   }
                   if (bc.node >= 0) {
                     std::vector<double> db(bc.numel(), 0.0);
                     for (int i = 0; i < r; ++i)
                       for (int j = 0; j < c; ++j) {
                         const double gi = g[static_cast<int64_t>(i) * c + j];
                         const double w = is_mul ? (*ac.data)[static_cast<int64_t>(i) * c + j] : 1.0;
                         db[bcast ? j : static_cast<int64_t>(i) * c + j] += gi * w;
                       }
                     accumulate(t, bc, db);
                   }
                 });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return ewise(a, b, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return ewise(a, b, true); }
Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = (*a.data)[i] * s;
  Tensor ac = a;
  return a.tape->make(a.shape, std::move(out), {&a},
                      [ac, s](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(g.size());
                        for (size_t i = 0; i < g.size(); ++i) da[i] = g[i] * s;
                        accumulate(t, ac, da);
                      });
}

Tensor transpose(const Tensor& a) {
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<int64_t>(j) * r + i] = a.at(i, j);
  Tensor ac = a;
  return a.tape->make({c, r}, std::move(out), {&a},
                      [ac, r, c](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(ac.numel());
                        for (int i = 0; i < c; ++i)
                          for (int j = 0; j < r; ++j) da[static_cast<int64_t>(j) * c + i] = g[static_cast<int64_t>(i) * r + j];
                        accumulate(t, ac, da);
                      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape.numel() != a.numel()) throw std::invalid_argument("reshape: element count differs");
  Tensor ac = a;
  return a.tape->make(shape, *a.data, {&a},
                      [ac](Tape& t, const std::vector<double>& g) { accumulate(t, ac, g); });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  int rows = 0, cols = 0;
  for (const Tensor& p : parts) {
    if (axis == 0) {
      if (cols && p.cols() != cols) throw std::invalid_argument("concat: column mismatch");
      cols = p.cols();
      rows += p.rows();
    } else {
      if (rows && p.rows() != rows) throw std::invalid_argument("concat: row mismatch");
      rows = p.rows();
      cols += p.cols();
    }
  }
  std::vector<double> out(static_cast<int64_t>(rows) * cols);
  int off = 0;
  for (const Tensor& p : parts) {
    if (axis == 0) {
      std::copy(p.data->begin(), p.data->end(), out.begin() + static_cast<int64_t>(off) * cols);
      off += p.rows();
    } else {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < p.cols(); ++j) out[static_cast<int64_t>(i) * cols + off + j] = p.at(i, j);
      off += p.cols();
    }
  }
  std::vector<const Tensor*> ins;
  for (const Tensor& p : parts) ins.push_back(&p);
  Tape* tp = parts[0].tape;
  std::vector<Tensor> copies(parts.begin(), parts.end());
  return tp->make({rows, cols}, std::move(out), ins,
                  [copies, axis, rows, cols](Tape& t, const std::vector<double>& g) {
                    int off = 0;
                    for (const Tensor& p : copies) {
                      if (p.node >= 0) {
                        std::vector<double> dp(p.numel());
                        if (axis == 0) {
                          std::copy(g.begin() + static_cast<int64_t>(off) * cols,
                                    g.begin() + static_cast<int64_t>(off + p.rows()) * cols, dp.begin());
                        } else {
                          for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < p.cols(); ++j)
                              dp[static_cast<int64_t>(i) * p.cols() + j] = g[static_cast<int64_t>(i) * cols + off + j];
                        }
                        accumulate(t, p, dp);
                      }
                      off += axis == 0 ? p.rows() : p.cols();
                    }
                  });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
  const int c = a.cols();
  std::vector<double> out(a.data->begin() + static_cast<int64_t>(r0) * c,
                          a.data->begin() + static_cast<int64_t>(r1) * c);
  Tensor ac = a;
  return a.tape->make({r1 - r0, c}, std::move(out), {&a},
                      [ac, r0, c](Tape& t, const std::vector<double>& g) {
                        if (ac.node < 0) return;
                        auto& buf = t.grad_buf(ac);
                        for (size_t i = 0; i < g.size(); ++i) buf[static_cast<int64_t>(r0) * c + i] += g[i];
                      });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  const int r = a.rows(), c = a.cols(), w = c1 - c0;
  std::vector<double> out(static_cast<int64_t>(r) * w);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) out[static_cast<int64_t>(i) * w + j] = a.at(i, c0 + j);
  Tensor ac = a;
  return a.tape->make({r, w}, std::move(out), {&a},
                      [ac, c0, r, c, w](Tape& t, const std::vector<double>& g) {
                        if (ac.node < 0) return;
                        auto& buf = t.grad_buf(ac);
                        for (int i = 0; i < r; ++i)
                          for (int j = 0; j < w; ++j) buf[static_cast<int64_t>(i) * c + c0 + j] += g[static_cast<int64_t>(i) * w + j];
                      });
}

Tensor sum_axis(const Tensor& a, int axis) {
  const int r = a.rows(), c = a.cols();
  if (axis != 0 && axis != 1) throw std::invalid_argument("sum_axis: axis must be 0 or 1");
  Shape os = axis == 0 ? Shape{1, c} : Shape{r, 1};
  std::vector<double> out(os.numel(), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[axis == 0 ? j : i] += a.at(i, j);
  Tensor ac = a;
  return a.tape->make(os, std::move(out), {&a},
                      [ac, axis, r, c](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(ac.numel());
                        for (int i = 0; i < r; ++i)
                          for (int j = 0; j < c; ++j) da[static_cast<int64_t>(i) * c + j] = g[axis == 0 ? j : i];
                        accumulate(t, ac, da);
                      });
}

Tensor mean_axis(const Tensor& a, int axis) {
  const double inv = 1.0 / (axis == 0 ? a.rows() : a.cols());
  return scale(sum_axis(a, axis), inv);
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : *a.data) s += x;
  Tensor ac = a;
  return a.tape->make({1, 1}, {s}, {&a},
                      [ac](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(ac.numel(), g[0]);
                        accumulate(t, ac, da);
                      });
}

Tensor softmax_rows(const Tensor& a) {
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  for (int i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) mx = std::max(mx, a.at(i, j));
    if (mx < kMaskValue / 2) throw std::invalid_argument("softmax_rows: fully masked row");
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(a.at(i, j) - mx);
      out[static_cast<int64_t>(i) * c + j] = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j) out[static_cast<int64_t>(i) * c + j] /= denom;
  }
  Tensor ac = a;
  auto y = std::make_shared<std::vector<double>>(out);
  return a.tape->make({r, c}, std::move(out), {&a},
                      [ac, y, r, c](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(ac.numel());
                        for (int i = 0; i < r; ++i) {
                          double dot = 0.0;
                          for (int j = 0; j < c; ++j) dot += g[static_cast<int64_t>(i) * c + j] * (*y)[static_cast<int64_t>(i) * c + j];
                          for (int j = 0; j < c; ++j)
                            da[static_cast<int64_t>(i) * c + j] =
                                (*y)[static_cast<int64_t>(i) * c + j] * (g[static_cast<int64_t>(i) * c + j] - dot);
                        }
                        accumulate(t, ac, da);
                      });
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double x = (*a.data)[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  Tensor ac = a;
  return a.tape->make(a.shape, std::move(out), {&a},
                      [ac](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(g.size());
                        for (size_t i = 0; i < g.size(); ++i) {
                          const double x = (*ac.data)[i];
                          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                          da[i] = g[i] * (cdf + x * pdf);
                        }
                        accumulate(t, ac, da);
                      });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  auto inv_std = std::make_shared<std::vector<double>>(r);
  for (int i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += a.at(i, j);
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = a.at(i, j) - mu;
      var += d * d;
    }
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < c; ++j) out[static_cast<int64_t>(i) * c + j] = (a.at(i, j) - mu) * is;
  }
  Tensor ac = a;
  auto y = std::make_shared<std::vector<double>>(out);
  return a.tape->make({r, c}, std::move(out), {&a},
                      [ac, y, inv_std, r, c](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(ac.numel());
                        for (int i = 0; i < r; ++i) {
                          double gm = 0.0, gym = 0.0;
                          for (int j = 0; j < c; ++j) {
                            const int64_t ix = static_cast<int64_t>(i) * c + j;
                            gm += g[ix];
                            gym += g[ix] * (*y)[ix];
                          }
                          gm /= c;
                          gym /= c;
                          for (int j = 0; j < c; ++j) {
                            const int64_t ix = static_cast<int64_t>(i) * c + j;
                            da[ix] = (*inv_std)[i] * (g[ix] - gm - (*y)[ix] * gym);
                          }
                        }
                        accumulate(t, ac, da);
                      });
}

Tensor masked_fill(const Tensor& a, const std::vector<uint8_t>& mask, double value) {
  if (static_cast<int64_t>(mask.size()) != a.numel())
    throw std::invalid_argument("masked_fill: mask size mismatch");
  std::vector<double> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = mask[i] ? value : (*a.data)[i];
  Tensor ac = a;
  auto m = std::make_shared<std::vector<uint8_t>>(mask);
  return a.tape->make(a.shape, std::move(out), {&a},
                      [ac, m](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(g.size());
                        for (size_t i = 0; i < g.size(); ++i) da[i] = (*m)[i] ? 0.0 : g[i];
                        accumulate(t, ac, da);
                      });
}

// splitmix64; counter-based so dropout masks are reproducible.
double counter_uniform(uint64_t seed, uint64_t counter) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z = z ^ (z >> 31);
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

Tensor dropout(const Tensor& a, double p, bool train, uint64_t seed, uint64_t counter) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!train || p == 0.0) return a;
  const double keep = 1.0 - p;
  auto m = std::make_shared<std::vector<uint8_t>>(a.numel());
  std::vector<double> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) {
    const bool kept = counter_uniform(seed, counter * 0x100000000ULL + i) >= p;
    (*m)[i] = kept;
    out[i] = kept ? (*a.data)[i] / keep : 0.0;
  }
  Tensor ac = a;
  return a.tape->make(a.shape, std::move(out), {&a},
                      [ac, m, keep](Tape& t, const std::vector<double>& g) {
                        std::vector<double> da(g.size());
                        for (size_t i = 0; i < g.size(); ++i) da[i] = (*m)[i] ? g[i] / keep : 0.0;
                        accumulate(t, ac, da);
                      });
}

Tensor edge_bias_matrix(const Tensor& type_biases, const std::vector<int>& edge_type, int n) {
  if (static_cast<int64_t>(edge_type.size()) != static_cast<int64_t>(n) * n)
    throw std::invalid_argument("edge_bias_matrix: type matrix size mismatch");
  const int ntypes = static_cast<int>(type_biases.numel());
  std::vector<double> out(edge_type.size());
  for (size_t i = 0; i < edge_type.size(); ++i) {
    const int ty = edge_type[i];
    if (ty < 0 || ty >= ntypes) throw std::invalid_argument("edge_bias_matrix: edge type out of range");
    out[i] = ty == 0 ? kMaskValue : (*type_biases.data)[ty];
  }
  Tensor bc = type_biases;
  auto types = std::make_shared<std::vector<int>>(edge_type);
  return type_biases.tape->make({n, n}, std::move(out), {&type_biases},
                                [bc, types](Tape& t, const std::vector<double>& g) {
                                  if (bc.node < 0) return;
                                  std::vector<double> db(bc.numel(), 0.0);
                                  for (size_t i = 0; i < g.size(); ++i)
                                    if ((*types)[i] != 0) db[(*types)[i]] += g[i];
                                  accumulate(t, bc, db);
                                });
}

}  // namespace fc
