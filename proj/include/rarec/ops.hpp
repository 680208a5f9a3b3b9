#pragma once

#include <string>
#include <vector>

#include "rarec/rng.hpp"
#include "rarec/tensor.hpp"

namespace rarec {

// Dense primitives with reverse-mode gradients. Every op records its
// backward step on the active tape when some input requires gradients;
// without an active tape these are plain forward evaluations.

Tensor matmul(const Tensor& a, const Tensor& b);   // [m,k]x[k,n] or [m,k]x[k]
Tensor add(const Tensor& a, const Tensor& b);      // same shape, or [r,c]+[c]
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);      // elementwise
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor concat(const Tensor& a, const Tensor& b, int axis);  // rank-2 axis 0/1, rank-1 axis 0
Tensor softmax_rows(const Tensor& a);              // stable, max-subtracted
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor transpose(const Tensor& a);
Tensor mean_rows(const Tensor& a);                 // [r,c] -> [c]
Tensor cosine_similarity(const Tensor& u, const Tensor& v);  // [d],[d] -> [1]
Tensor log_sigmoid(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor sum(const Tensor& a);                       // -> [1]
Tensor dot(const Tensor& u, const Tensor& v);      // [d],[d] -> [1]
Tensor logsumexp(const Tensor& a);                 // [n] -> [1], stable
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor reshape(const Tensor& a, Shape shape);
Tensor select(const Tensor& a, int index);         // [n] -> [1]

// Name-based dispatch over the primitive set. `scalar_attr` feeds scale();
// `int_attrs` feeds axis/slice/index arguments and embedding ids.
// Throws on an unknown primitive name.
Tensor forward_primitive(const std::string& name, const std::vector<Tensor>& inputs,
                         double scalar_attr = 0.0, const std::vector<int>& int_attrs = {});

const std::vector<std::string>& primitive_names();

// Parameter initialization: Normal(0, std^2) truncated to [lo, hi] by
// rejection sampling. Deterministic for a fixed seed.
Tensor init_trunc_normal(Shape shape, double lo, double hi, double std,
                         std::uint64_t rng_seed);

void check_finite(const Tensor& t, const char* context);

}  // namespace rarec
