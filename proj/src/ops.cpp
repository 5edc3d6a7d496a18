#include "evseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evseg/error.hpp"

namespace evseg::ops {
namespace {

void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                     b.shape_string());
  }
}

void check_indices(std::span<const std::size_t> indices, std::size_t rows, const char* op) {
  for (std::size_t i : indices) {
    if (i >= rows) {
      throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range for " +
                       std::to_string(rows) + " rows");
    }
  }
}

// c += a * b with a (n x m), b (m x p)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = C + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = A[i * m + k];
      if (aik == 0.0) continue;
      const double* brow = B + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c += a * b^T with a (n x p), b (m x p)
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), p = a.cols(), m = b.rows();
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = A + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const double* brow = B + k * p;
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) s += arow[j] * brow[j];
      C[i * m + k] += s;
    }
  }
}

// c += a^T * b with a (n x m), b (n x p)
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* brow = B + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = A[i * m + k];
      if (aik == 0.0) continue;
      double* crow = C + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.rows(), "matmul", A, B);
  Tensor out = Tensor::matrix(A.rows(), B.cols());
  gemm_nn(A, B, out);
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) gemm_nt(g, t.value(b), t.grad_buffer(a.id));
    if (t.requires_grad(b)) gemm_tn(t.value(a), g, t.grad_buffer(b.id));
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  out.set_requires_grad(false);
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Tensor& gv = t.grad_buffer(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var subtract(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "subtract", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  out.set_requires_grad(false);
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var hadamard(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "hadamard", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  out.set_requires_grad(false);
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      const Tensor& B = t.value(b);
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.requires_grad(b)) {
      const Tensor& A = t.value(a);
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  out.set_requires_grad(false);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& X = t.value(x);
    Tensor& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (X[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  out.set_requires_grad(false);
  for (double& v : out.values()) v *= factor;
  return x.tape->record(std::move(out), {x}, [x, factor](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  const Tensor& b = bias.value();
  require(X.cols() == W.rows(), "linear", X, W);
  require(b.size() == W.cols(), "linear bias", W, b);
  const std::size_t n = X.rows(), out_dim = W.cols();
  Tensor out = Tensor::matrix(n, out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < out_dim; ++j) out(i, j) = b[j];
  }
  gemm_nn(X, W, out);
  return x.tape->record(std::move(out), {x, weight, bias},
                        [x, weight, bias](Tape& t, const Tensor& g) {
                          if (t.requires_grad(x)) gemm_nt(g, t.value(weight), t.grad_buffer(x.id));
                          if (t.requires_grad(weight)) {
                            gemm_tn(t.value(x), g, t.grad_buffer(weight.id));
                          }
                          if (t.requires_grad(bias)) {
                            Tensor& gb = t.grad_buffer(bias.id);
                            const std::size_t cols = g.cols();
                            for (std::size_t i = 0; i < g.rows(); ++i) {
                              for (std::size_t j = 0; j < cols; ++j) gb[j] += g(i, j);
                            }
                          }
                        });
}

Var softmax_rows(Var x) {
  const Tensor& X = x.value();
  Tensor out = Tensor::matrix(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double mx = X(i, 0);
    for (std::size_t j = 1; j < X.cols(); ++j) mx = std::max(mx, X(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < X.cols(); ++j) {
      out(i, j) = std::exp(X(i, j) - mx);
      sum += out(i, j);
    }
    for (std::size_t j = 0; j < X.cols(); ++j) out(i, j) /= sum;
  }
  Tape& tape = *x.tape;
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [x, self](Tape& t, const Tensor& g) {
    const Tensor& Y = t.value(self);
    Tensor& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < Y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < Y.cols(); ++j) dot += g(i, j) * Y(i, j);
      for (std::size_t j = 0; j < Y.cols(); ++j) gx(i, j) += Y(i, j) * (g(i, j) - dot);
    }
  });
}

Var neighborhood_softmax(Var x, std::size_t group) {
  const Tensor& X = x.value();
  if (group == 0 || X.rows() % group != 0) {
    throw ShapeError("neighborhood_softmax: rows " + std::to_string(X.rows()) +
                     " not a multiple of group " + std::to_string(group));
  }
  const std::size_t cols = X.cols(), blocks = X.rows() / group;
  Tensor out = Tensor::matrix(X.rows(), cols);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t r0 = b * group;
    for (std::size_t c = 0; c < cols; ++c) {
      double mx = X(r0, c);
      for (std::size_t r = 1; r < group; ++r) mx = std::max(mx, X(r0 + r, c));
      double sum = 0.0;
      for (std::size_t r = 0; r < group; ++r) {
        const double e = std::exp(X(r0 + r, c) - mx);
        out(r0 + r, c) = e;
        sum += e;
      }
      for (std::size_t r = 0; r < group; ++r) out(r0 + r, c) /= sum;
    }
  }
  Tape& tape = *x.tape;
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [x, self, group](Tape& t, const Tensor& g) {
    const Tensor& Y = t.value(self);
    Tensor& gx = t.grad_buffer(x.id);
    const std::size_t cols = Y.cols(), blocks = Y.rows() / group;
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t r0 = b * group;
      for (std::size_t c = 0; c < cols; ++c) {
        double dot = 0.0;
        for (std::size_t r = 0; r < group; ++r) dot += g(r0 + r, c) * Y(r0 + r, c);
        for (std::size_t r = 0; r < group; ++r) {
          gx(r0 + r, c) += Y(r0 + r, c) * (g(r0 + r, c) - dot);
        }
      }
    }
  });
}

Var graph_feature_norm(Var x, Var gamma, Var beta, double eps, const NormStats* running,
                       NormStats* observed) {
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), f = X.cols();
  if (gamma.value().size() != f || beta.value().size() != f) {
    throw ShapeError("graph_feature_norm: scale/shift width does not match " + X.shape_string());
  }
  if (n == 0) throw ShapeError("graph_feature_norm: empty input");
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  if (running) {
    if (running->mean.size() != f || running->var.size() != f) {
      throw ShapeError("graph_feature_norm: running statistics width mismatch");
    }
    mean = running->mean;
    var = running->var;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) mean[j] += X(i, j);
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double d = X(i, j) - mean[j];
        var[j] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(n);
    if (observed) *observed = {mean, var};
  }
  std::vector<double> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

  Tensor xhat = Tensor::matrix(n, f);
  Tensor out = Tensor::matrix(n, f);
  const Tensor& G = gamma.value();
  const Tensor& B = beta.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      xhat(i, j) = (X(i, j) - mean[j]) * inv_std[j];
      out(i, j) = G[j] * xhat(i, j) + B[j];
    }
  }
  const bool batch_stats = running == nullptr;
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), batch_stats](
          Tape& t, const Tensor& g) {
        const std::size_t n = g.rows(), f = g.cols();
        std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            sum_g[j] += g(i, j);
            sum_gx[j] += g(i, j) * xhat(i, j);
          }
        }
        if (t.requires_grad(gamma)) {
          Tensor& gg = t.grad_buffer(gamma.id);
          for (std::size_t j = 0; j < f; ++j) gg[j] += sum_gx[j];
        }
        if (t.requires_grad(beta)) {
          Tensor& gb = t.grad_buffer(beta.id);
          for (std::size_t j = 0; j < f; ++j) gb[j] += sum_g[j];
        }
        if (!t.requires_grad(x)) return;
        const Tensor& G = t.value(gamma);
        Tensor& gx = t.grad_buffer(x.id);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            const double gh = G[j] * inv_std[j];
            if (batch_stats) {
              gx(i, j) += gh * (g(i, j) - inv_n * sum_g[j] - xhat(i, j) * inv_n * sum_gx[j]);
            } else {
              gx(i, j) += gh * g(i, j);
            }
          }
        }
      });
}

Var neighborhood_max_pool(Var x, std::span<const std::size_t> indices, std::size_t group) {
  const Tensor& X = x.value();
  if (group == 0 || indices.size() % group != 0) {
    throw ShapeError("neighborhood_max_pool: index count not a multiple of group");
  }
  check_indices(indices, X.rows(), "neighborhood_max_pool");
  const std::size_t m = indices.size() / group, f = X.cols();
  Tensor out = Tensor::matrix(m, f);
  std::vector<std::size_t> argmax(m * f);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      std::size_t best = indices[r * group];
      for (std::size_t q = 1; q < group; ++q) {
        const std::size_t j = indices[r * group + q];
        if (X(j, c) > X(best, c)) best = j;
      }
      argmax[r * f + c] = best;
      out(r, c) = X(best, c);
    }
  }
  return x.tape->record(std::move(out), {x},
                        [x, argmax = std::move(argmax), f](Tape& t, const Tensor& g) {
                          Tensor& gx = t.grad_buffer(x.id);
                          for (std::size_t r = 0; r < g.rows(); ++r) {
                            for (std::size_t c = 0; c < f; ++c) gx(argmax[r * f + c], c) += g(r, c);
                          }
                        });
}

Var neighborhood_mean(Var x, std::span<const std::size_t> indices, std::size_t group) {
  const Tensor& X = x.value();
  if (group == 0 || indices.size() % group != 0) {
    throw ShapeError("neighborhood_mean: index count not a multiple of group");
  }
  check_indices(indices, X.rows(), "neighborhood_mean");
  const std::size_t m = indices.size() / group, f = X.cols();
  const double w = 1.0 / static_cast<double>(group);
  Tensor out = Tensor::matrix(m, f);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t q = 0; q < group; ++q) {
      const std::size_t j = indices[r * group + q];
      for (std::size_t c = 0; c < f; ++c) out(r, c) += w * X(j, c);
    }
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return x.tape->record(std::move(out), {x},
                        [x, idx = std::move(idx), group, w](Tape& t, const Tensor& g) {
                          Tensor& gx = t.grad_buffer(x.id);
                          const std::size_t f = g.cols();
                          for (std::size_t r = 0; r < g.rows(); ++r) {
                            for (std::size_t q = 0; q < group; ++q) {
                              const std::size_t j = idx[r * group + q];
                              for (std::size_t c = 0; c < f; ++c) gx(j, c) += w * g(r, c);
                            }
                          }
                        });
}

Var global_avg_pool(Var x) {
  const Tensor& X = x.value();
  if (X.rows() == 0) throw ShapeError("global_avg_pool: empty input");
  const std::size_t n = X.rows(), f = X.cols();
  const double w = 1.0 / static_cast<double>(n);
  Tensor out = Tensor::matrix(1, f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < f; ++c) out[c] += w * X(i, c);
  }
  return x.tape->record(std::move(out), {x}, [x, w](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < gx.rows(); ++i) {
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(i, c) += w * g[c];
    }
  });
}

Var concat_features(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rows() == B.rows(), "concat_features", A, B);
  const std::size_t n = A.rows(), fa = A.cols(), fb = B.cols();
  Tensor out = Tensor::matrix(n, fa + fb);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < fa; ++c) out(i, c) = A(i, c);
    for (std::size_t c = 0; c < fb; ++c) out(i, fa + c) = B(i, c);
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, fa, fb](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t c = 0; c < fa; ++c) ga(i, c) += g(i, c);
      }
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t c = 0; c < fb; ++c) gb(i, c) += g(i, fa + c);
      }
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
  const Tensor& X = x.value();
  check_indices(indices, X.rows(), "gather_rows");
  const std::size_t f = X.cols();
  Tensor out = Tensor::matrix(indices.size(), f);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(X.data() + indices[r] * f, f, out.data() + r * f);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return x.tape->record(std::move(out), {x}, [x, idx = std::move(idx), f](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x.id);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = gx.data() + idx[r] * f;
      const double* src = g.data() + r * f;
      for (std::size_t c = 0; c < f; ++c) dst[c] += src[c];
    }
  });
}

Var scatter_sum(Var x, std::span<const std::size_t> indices, std::size_t out_rows) {
  const Tensor& X = x.value();
  if (indices.size() != X.rows()) throw ShapeError("scatter_sum: one index per input row required");
  check_indices(indices, out_rows, "scatter_sum");
  const std::size_t f = X.cols();
  Tensor out = Tensor::matrix(out_rows, f);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    double* dst = out.data() + indices[r] * f;
    const double* src = X.data() + r * f;
    for (std::size_t c = 0; c < f; ++c) dst[c] += src[c];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return x.tape->record(std::move(out), {x}, [x, idx = std::move(idx), f](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x.id);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = gx.data() + r * f;
      const double* src = g.data() + idx[r] * f;
      for (std::size_t c = 0; c < f; ++c) dst[c] += src[c];
    }
  });
}

Var sum_all(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape->record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x.id);
    for (double& v : gx.values()) v += g[0];
  });
}

}  // namespace evseg::ops
