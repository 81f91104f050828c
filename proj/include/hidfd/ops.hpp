#pragma once

// Differentiable primitives. Every operation records itself on the tape owned
// by its operands; mixing tapes is a ContractError and non-conforming shapes
// raise DimensionError naming the operation.
//
// Batches are (rows = examples, cols = features). Reductions sum rows from
// first to last so results are deterministic for a fixed kernel ISA.

#include <span>

#include "hidfd/tape.hpp"

namespace hidfd::ops {

Var matmul(Var a, Var b);                // (m x k) * (k x n)
Var add(Var a, Var b);                   // same shape
Var sub(Var a, Var b);                   // same shape
Var mul(Var a, Var b);                   // elementwise, same shape
Var add_bias(Var a, Var bias);           // (m x n) + (1 x n) on every row
Var scale(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);                  // log(sigmoid(a)), stable for large |a|
Var softplus(Var a);                     // log(1 + exp(a)), stable for large |a|
Var exp(Var a);
Var log(Var a);
Var sum(Var a);                          // -> scalar
Var mean(Var a);                         // -> scalar, over all entries
Var mean_rows(Var a);                    // (m x n) -> (1 x n)
Var concat_cols(Var a, Var b);           // (m x p), (m x q) -> (m x (p+q))
Var log_softmax(Var a);                  // row-wise, max-subtracted
Var softmax(Var a);                      // exp(log_softmax(a))
Var pick(Var a, std::span<const int> columns);  // (m x n) -> (m x 1): a[i, columns[i]]
Var sq_l2_distance(Var a, Var b);        // row-wise ||a_i - b_i||^2 -> (m x 1)
Var l2_distance(Var a, Var b);           // row-wise ||a_i - b_i||, subgradient 0 at 0
Var detach(Var a);                       // constant copy, blocks gradients

}  // namespace hidfd::ops
