#include "entlm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

using ImplPtr = std::shared_ptr<Tensor::Impl>;

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_output(Shape shape, std::vector<double> values, bool record) {
  return Tensor::from(std::move(shape), std::move(values), record);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Grad buffer of an input that participates in backward, or nullptr.
double* input_grad(const ImplPtr& impl) { return impl->requires_grad ? impl->ensure_grad().data() : nullptr; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const bool record = should_record({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), record);
  if (record) {
    active_tape()->record([ai = a.impl(), bi = b.impl(), oi = result.impl()] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* ga = input_grad(ai)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (double* gb = input_grad(bi)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const bool record = should_record({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), record);
  if (record) {
    active_tape()->record([ai = a.impl(), bi = b.impl(), oi = result.impl()] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* ga = input_grad(ai)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
      }
      if (double* gb = input_grad(bi)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  const bool record = should_record({&a});
  Tensor result = make_output(a.shape(), std::move(out), record);
  if (record) {
    active_tape()->record([ai = a.impl(), oi = result.impl(), factor] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* ga = input_grad(ai)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  const bool record = should_record({&a});
  Tensor result = make_output({1}, {total}, record);
  if (record) {
    active_tape()->record([ai = a.impl(), oi = result.impl()] {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0];
      if (double* ga = input_grad(ai)) {
        for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g;
      }
    });
  }
  return result;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  if (bias.numel() != cols) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  auto xv = x.data();
  auto bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  }
  const bool record = should_record({&x, &bias});
  Tensor result = make_output(x.shape(), std::move(out), record);
  if (record) {
    active_tape()->record([xi = x.impl(), bi = bias.impl(), oi = result.impl(), rows, cols] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* gx = input_grad(xi)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (double* gb = input_grad(bi)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      }
    });
  }
  return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const double* av = a.data().data();
  const double* bv = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  const bool record = should_record({&a, &b});
  Tensor result = make_output({m, n}, std::move(out), record);
  if (record) {
    active_tape()->record([ai = a.impl(), bi = b.impl(), oi = result.impl(), m, k, n] {
      if (oi->grad.empty()) return;
      const double* g = oi->grad.data();
      if (double* ga = input_grad(ai)) {
        // dA = dC * B^T
        const double* bv = bi->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* brow = bv + p * n;
            const double* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (double* gb = input_grad(bi)) {
        // dB = A^T * dC
        const double* av = ai->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            double* gbrow = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_bt");
  require_rank(b, 2, "matmul_bt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_bt: inner dimensions differ for " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  const double* av = a.data().data();
  const double* bv = b.data().data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = av + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = bv + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] = acc;
    }
  }
  const bool record = should_record({&a, &b});
  Tensor result = make_output({m, n}, std::move(out), record);
  if (record) {
    active_tape()->record([ai = a.impl(), bi = b.impl(), oi = result.impl(), m, k, n] {
      if (oi->grad.empty()) return;
      const double* g = oi->grad.data();
      if (double* ga = input_grad(ai)) {
        const double* bv = bi->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          double* garow = ga + i * k;
          for (std::size_t j = 0; j < n; ++j) {
            const double s = g[i * n + j];
            const double* brow = bv + j * k;
            for (std::size_t p = 0; p < k; ++p) garow[p] += s * brow[p];
          }
        }
      }
      if (double* gb = input_grad(bi)) {
        const double* av = ai->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = av + i * k;
          for (std::size_t j = 0; j < n; ++j) {
            const double s = g[i * n + j];
            double* gbrow = gb + j * k;
            for (std::size_t p = 0; p < k; ++p) gbrow[p] += s * arow[p];
          }
        }
      }
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& table, std::span<const TokenId> ids) {
  require_rank(table, 2, "gather_rows");
  if (ids.empty()) throw LengthError("gather_rows: empty id sequence");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  std::vector<std::size_t> index(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= rows) {
      throw IndexError("id " + std::to_string(ids[t]) + " at position " + std::to_string(t) +
                       " outside table of " + std::to_string(rows) + " rows");
    }
    index[t] = static_cast<std::size_t>(ids[t]);
  }
  auto tv = table.data();
  std::vector<double> out(ids.size() * cols);
  for (std::size_t t = 0; t < index.size(); ++t) {
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(index[t] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(t * cols));
  }
  const bool record = should_record({&table});
  Tensor result = make_output({ids.size(), cols}, std::move(out), record);
  if (record) {
    active_tape()->record([ti = table.impl(), oi = result.impl(), index = std::move(index), cols] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* gt = input_grad(ti)) {
        for (std::size_t t = 0; t < index.size(); ++t) {
          for (std::size_t c = 0; c < cols; ++c) gt[index[t] * cols + c] += g[t * cols + c];
        }
      }
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (count == 0 || begin + count > rows) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_string(x.shape()));
  }
  auto xv = x.data();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  const bool record = should_record({&x});
  Tensor result = make_output({count, cols}, std::move(out), record);
  if (record) {
    active_tape()->record([xi = x.impl(), oi = result.impl(), offset = begin * cols] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* gx = input_grad(xi)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gamma/beta " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match " + shape_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mean) * is;
      xhat[r * d + c] = h;
      out[r * d + c] = gv[c] * h + bv[c];
    }
  }
  const bool record = should_record({&x, &gamma, &beta});
  Tensor result = make_output(x.shape(), std::move(out), record);
  if (record) {
    active_tape()->record([xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = result.impl(),
                           xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      const auto& gv = gi->data;
      if (double* gg = input_grad(gi)) {
        for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
      }
      if (double* gb = input_grad(bi)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
      }
      if (double* gx = input_grad(xi)) {
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double dh = g[r * d + c] * gv[c];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * d + c];
          }
          mean_dh *= inv_d;
          mean_dh_h *= inv_d;
          for (std::size_t c = 0; c < d; ++c) {
            const double dh = g[r * d + c] * gv[c];
            gx[r * d + c] += inv_std[r] * (dh - mean_dh - xhat[r * d + c] * mean_dh_h);
          }
        }
      }
    });
  }
  return result;
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  std::vector<double> th(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    th[i] = std::tanh(kC * (v + kA * v * v * v));
    out[i] = 0.5 * v * (1.0 + th[i]);
  }
  const bool record = should_record({&x});
  Tensor result = make_output(x.shape(), std::move(out), record);
  if (record) {
    active_tape()->record([xi = x.impl(), oi = result.impl(), th = std::move(th)] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* gx = input_grad(xi)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = xi->data[i];
          const double t = th[i];
          const double dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
          gx[i] += g[i] * dy;
        }
      }
    });
  }
  return result;
}

Tensor split_heads(const Tensor& x, std::size_t n_heads) {
  require_rank(x, 2, "split_heads");
  const std::size_t s = x.dim(0), d = x.dim(1);
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("split_heads: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(n_heads) + " heads");
  }
  const std::size_t dh = d / n_heads;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t e = 0; e < dh; ++e) out[(h * s + i) * dh + e] = xv[i * d + h * dh + e];
    }
  }
  const bool record = should_record({&x});
  Tensor result = make_output({n_heads, s, dh}, std::move(out), record);
  if (record) {
    active_tape()->record([xi = x.impl(), oi = result.impl(), n_heads, s, d, dh] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* gx = input_grad(xi)) {
        for (std::size_t h = 0; h < n_heads; ++h) {
          for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t e = 0; e < dh; ++e) gx[i * d + h * dh + e] += g[(h * s + i) * dh + e];
          }
        }
      }
    });
  }
  return result;
}

Tensor merge_heads(const Tensor& x) {
  require_rank(x, 3, "merge_heads");
  const std::size_t n_heads = x.dim(0), s = x.dim(1), dh = x.dim(2);
  const std::size_t d = n_heads * dh;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t e = 0; e < dh; ++e) out[i * d + h * dh + e] = xv[(h * s + i) * dh + e];
    }
  }
  const bool record = should_record({&x});
  Tensor result = make_output({s, d}, std::move(out), record);
  if (record) {
    active_tape()->record([xi = x.impl(), oi = result.impl(), n_heads, s, d, dh] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (double* gx = input_grad(xi)) {
        for (std::size_t h = 0; h < n_heads; ++h) {
          for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t e = 0; e < dh; ++e) gx[(h * s + i) * dh + e] += g[i * d + h * dh + e];
          }
        }
      }
    });
  }
  return result;
}

Tensor causal_scores(const Tensor& q, const Tensor& k, double factor) {
  require_rank(q, 3, "causal_scores");
  require_same_shape(q, k, "causal_scores");
  const std::size_t n_heads = q.dim(0), s = q.dim(1), dh = q.dim(2);
  const double* qv = q.data().data();
  const double* kv = k.data().data();
  std::vector<double> out(n_heads * s * s, 0.0);
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < s; ++i) {
      const double* qrow = qv + (h * s + i) * dh;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* krow = kv + (h * s + j) * dh;
        double acc = 0.0;
        for (std::size_t e = 0; e < dh; ++e) acc += qrow[e] * krow[e];
        out[(h * s + i) * s + j] = factor * acc;
      }
    }
  }
  const bool record = should_record({&q, &k});
  Tensor result = make_output({n_heads, s, s}, std::move(out), record);
  if (record) {
    active_tape()->record([qi = q.impl(), ki = k.impl(), oi = result.impl(), n_heads, s, dh, factor] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      double* gq = input_grad(qi);
      double* gk = input_grad(ki);
      const double* qv = qi->data.data();
      const double* kv = ki->data.data();
      for (std::size_t h = 0; h < n_heads; ++h) {
        for (std::size_t i = 0; i < s; ++i) {
          for (std::size_t j = 0; j <= i; ++j) {
            const double w = factor * g[(h * s + i) * s + j];
            if (gq) {
              for (std::size_t e = 0; e < dh; ++e) gq[(h * s + i) * dh + e] += w * kv[(h * s + j) * dh + e];
            }
            if (gk) {
              for (std::size_t e = 0; e < dh; ++e) gk[(h * s + j) * dh + e] += w * qv[(h * s + i) * dh + e];
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor causal_softmax(const Tensor& scores) {
  if (scores.rank() != 2 && scores.rank() != 3) {
    throw DimensionError("causal_softmax: expected [s x s] or [h x s x s], got " + shape_string(scores.shape()));
  }
  const std::size_t r = scores.rank();
  const std::size_t s = scores.dim(r - 1);
  if (scores.dim(r - 2) != s) {
    throw DimensionError("causal_softmax: last two dimensions must be square, got " +
                         shape_string(scores.shape()));
  }
  const std::size_t planes = r == 3 ? scores.dim(0) : 1;
  auto xv = scores.data();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < s; ++i) {
      const double* row = xv.data() + (p * s + i) * s;
      double* orow = out.data() + (p * s + i) * s;
      double mx = row[0];
      for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
      double total = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        orow[j] = std::exp(row[j] - mx);
        total += orow[j];
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j <= i; ++j) orow[j] *= inv;
    }
  }
  const bool record = should_record({&scores});
  Tensor result = make_output(scores.shape(), std::move(out), record);
  if (record) {
    active_tape()->record([xi = scores.impl(), oi = result.impl(), planes, s] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      const auto& y = oi->data;
      if (double* gx = input_grad(xi)) {
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < s; ++i) {
            const std::size_t base = (p * s + i) * s;
            double dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) dot += y[base + j] * g[base + j];
            for (std::size_t j = 0; j <= i; ++j) gx[base + j] += y[base + j] * (g[base + j] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor causal_mix(const Tensor& weights, const Tensor& v) {
  require_rank(weights, 3, "causal_mix");
  require_rank(v, 3, "causal_mix");
  const std::size_t n_heads = v.dim(0), s = v.dim(1), dh = v.dim(2);
  if (weights.dim(0) != n_heads || weights.dim(1) != s || weights.dim(2) != s) {
    throw DimensionError("causal_mix: weights " + shape_string(weights.shape()) + " do not match values " +
                         shape_string(v.shape()));
  }
  const double* wv = weights.data().data();
  const double* vv = v.data().data();
  std::vector<double> out(n_heads * s * dh, 0.0);
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < s; ++i) {
      double* orow = out.data() + (h * s + i) * dh;
      for (std::size_t j = 0; j <= i; ++j) {
        const double w = wv[(h * s + i) * s + j];
        const double* vrow = vv + (h * s + j) * dh;
        for (std::size_t e = 0; e < dh; ++e) orow[e] += w * vrow[e];
      }
    }
  }
  const bool record = should_record({&weights, &v});
  Tensor result = make_output({n_heads, s, dh}, std::move(out), record);
  if (record) {
    active_tape()->record([wi = weights.impl(), vi = v.impl(), oi = result.impl(), n_heads, s, dh] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      double* gw = input_grad(wi);
      double* gv = input_grad(vi);
      const double* wv = wi->data.data();
      const double* vv = vi->data.data();
      for (std::size_t h = 0; h < n_heads; ++h) {
        for (std::size_t i = 0; i < s; ++i) {
          const double* grow = g.data() + (h * s + i) * dh;
          for (std::size_t j = 0; j <= i; ++j) {
            if (gw) {
              double acc = 0.0;
              for (std::size_t e = 0; e < dh; ++e) acc += grow[e] * vv[(h * s + j) * dh + e];
              gw[(h * s + i) * s + j] += acc;
            }
            if (gv) {
              const double w = wv[(h * s + i) * s + j];
              for (std::size_t e = 0; e < dh; ++e) gv[(h * s + j) * dh + e] += w * grow[e];
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(logits.shape()));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) + " at row " + std::to_string(i) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
  }
  auto lv = logits.data();
  std::vector<double> probs(lv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = lv.data() + i * vocab;
    double mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) {
      probs[i * vocab + j] = std::exp(row[j] - mx);
      z += probs[i * vocab + j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < vocab; ++j) probs[i * vocab + j] *= inv;
    total += (mx + std::log(z)) - row[targets[i]];
  }
  const double mean = total / static_cast<double>(rows);
  const bool record = should_record({&logits});
  Tensor result = make_output({1}, {mean}, record);
  if (record) {
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    active_tape()->record(
        [li = logits.impl(), oi = result.impl(), probs = std::move(probs), tgt = std::move(tgt), rows, vocab] {
          if (oi->grad.empty()) return;
          const double g = oi->grad[0] / static_cast<double>(rows);
          if (double* gl = input_grad(li)) {
            for (std::size_t i = 0; i < rows; ++i) {
              for (std::size_t j = 0; j < vocab; ++j) gl[i * vocab + j] += g * probs[i * vocab + j];
              gl[i * vocab + tgt[i]] -= g;
            }
          }
        });
  }
  return result;
}

}  // namespace entlm
