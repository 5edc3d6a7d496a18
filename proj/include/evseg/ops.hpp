#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evseg/tensor.hpp"

// Differentiable primitives. Every operand is a matrix (rows x cols); the
// only broadcast is the row-wise bias add inside `linear`.
namespace evseg::ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var hadamard(Var a, Var b);
Var relu(Var x);
Var scale(Var x, double factor);
/// x (n x in) * weight (in x out) + bias (1 x out)
Var linear(Var x, Var weight, Var bias);

Var softmax_rows(Var x);
/// Softmax over each group of `group` consecutive rows, independently per
/// column: the neighborhood axis of an (N*k) x C edge tensor.
Var neighborhood_softmax(Var x, std::size_t group);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Per-feature normalization over the node axis with learned scale/shift.
/// With `running == nullptr` the batch statistics of `x` are used (training)
/// and written to `observed` when non-null; otherwise the supplied running
/// statistics are used as constants (inference).
Var graph_feature_norm(Var x, Var gamma, Var beta, double eps, const NormStats* running,
                       NormStats* observed = nullptr);

/// out[r] = max over x[indices[r*group .. r*group+group)]; gradient goes to
/// the first maximal row.
Var neighborhood_max_pool(Var x, std::span<const std::size_t> indices, std::size_t group);
Var neighborhood_mean(Var x, std::span<const std::size_t> indices, std::size_t group);
Var global_avg_pool(Var x);
Var concat_features(Var a, Var b);
Var gather_rows(Var x, std::span<const std::size_t> indices);
/// out[indices[r]] += x[r], with `out_rows` output rows.
Var scatter_sum(Var x, std::span<const std::size_t> indices, std::size_t out_rows);
Var sum_all(Var x);

}  // namespace evseg::ops
