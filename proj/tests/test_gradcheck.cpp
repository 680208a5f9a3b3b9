#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "rarec/ops.hpp"
#include "rarec/rng.hpp"

using namespace rarec;

namespace {

// Central finite differences with step 1e-5 against the recorded backward
// pass. The loss is a fixed random weighting of the output so every output
// element contributes.
constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;
constexpr double kAbsFloor = 1e-7;

using OpFn = std::function<Tensor(const std::vector<Tensor>&)>;

double weighted_loss_value(const OpFn& fn, const std::vector<Tensor>& inputs,
                           const std::vector<double>& weights) {
    Tensor out = fn(inputs);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) loss += out.data()[i] * weights[i];
    return loss;
}

void check_gradients(const std::string& name, const OpFn& fn, std::vector<Tensor> inputs,
                     Rng& rng) {
    Tensor probe = fn(inputs);
    std::vector<double> weights(probe.size());
    for (auto& w : weights) w = rng.normal();

    for (auto& t : inputs) t.set_requires_grad(true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor out = fn(inputs);
        Tensor w = Tensor::from(out.shape(), weights);
        Tensor loss = sum(mul(out, w));
        tape.backward(loss);
    }

    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor& t = inputs[ti];
        const std::vector<double> ad = t.grad_or_zero();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double keep = t.data()[i];
            t.data()[i] = keep + kStep;
            const double up = weighted_loss_value(fn, inputs, weights);
            t.data()[i] = keep - kStep;
            const double dn = weighted_loss_value(fn, inputs, weights);
            t.data()[i] = keep;
            const double fd = (up - dn) / (2.0 * kStep);
            const double diff = std::abs(ad[i] - fd);
            const double rel = diff / std::max({std::abs(ad[i]), std::abs(fd), 1e-12});
            const bool ok = diff < kAbsFloor || rel < kRelTol;
            if (!ok) {
                CAPTURE(name);
                CAPTURE(ti);
                CAPTURE(i);
                CAPTURE(ad[i]);
                CAPTURE(fd);
            }
            REQUIRE(ok);
        }
    }
}

Tensor random_tensor(Rng& rng, Shape shape, double mean = 0.0, double std = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& e : v) e = rng.normal(mean, std);
    return Tensor::from(std::move(shape), std::move(v));
}

int rnd_dim(Rng& rng, int lo = 1, int hi = 5) {
    return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

TEST_CASE("gradcheck: every primitive against central finite differences") {
    const int reps = 100;
    Rng rng(20260810);

    for (int rep = 0; rep < reps; ++rep) {
        {
            const int m = rnd_dim(rng), k = rnd_dim(rng), n = rnd_dim(rng);
            check_gradients("matmul",
                            [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
                            {random_tensor(rng, {m, k}), random_tensor(rng, {k, n})}, rng);
            check_gradients("matvec",
                            [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
                            {random_tensor(rng, {m, k}), random_tensor(rng, {k})}, rng);
        }
        {
            const int r = rnd_dim(rng), c = rnd_dim(rng);
            check_gradients("add",
                            [](const std::vector<Tensor>& in) { return add(in[0], in[1]); },
                            {random_tensor(rng, {r, c}), random_tensor(rng, {r, c})}, rng);
            check_gradients("add_broadcast",
                            [](const std::vector<Tensor>& in) { return add(in[0], in[1]); },
                            {random_tensor(rng, {r, c}), random_tensor(rng, {c})}, rng);
            check_gradients("sub",
                            [](const std::vector<Tensor>& in) { return sub(in[0], in[1]); },
                            {random_tensor(rng, {r, c}), random_tensor(rng, {r, c})}, rng);
            check_gradients("mul",
                            [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); },
                            {random_tensor(rng, {r, c}), random_tensor(rng, {r, c})}, rng);
            const double s = rng.normal(0, 2);
            check_gradients("scale",
                            [s](const std::vector<Tensor>& in) { return scale(in[0], s); },
                            {random_tensor(rng, {r, c})}, rng);
        }
        {
            const int r1 = rnd_dim(rng), r2 = rnd_dim(rng), c = rnd_dim(rng);
            check_gradients("concat_rows",
                            [](const std::vector<Tensor>& in) { return concat(in[0], in[1], 0); },
                            {random_tensor(rng, {r1, c}), random_tensor(rng, {r2, c})}, rng);
            check_gradients("concat_cols",
                            [](const std::vector<Tensor>& in) { return concat(in[0], in[1], 1); },
                            {random_tensor(rng, {r1, c}), random_tensor(rng, {r1, r2})}, rng);
        }
        {
            const int r = rnd_dim(rng), c = rnd_dim(rng, 2, 6);
            check_gradients("softmax_rows",
                            [](const std::vector<Tensor>& in) { return softmax_rows(in[0]); },
                            {random_tensor(rng, {r, c})}, rng);
            check_gradients(
                "layer_norm_rows",
                [](const std::vector<Tensor>& in) {
                    return layer_norm_rows(in[0], in[1], in[2]);
                },
                {random_tensor(rng, {r, c}), random_tensor(rng, {c}, 1.0, 0.3),
                 random_tensor(rng, {c})},
                rng);
            check_gradients("mean_rows",
                            [](const std::vector<Tensor>& in) { return mean_rows(in[0]); },
                            {random_tensor(rng, {r, c})}, rng);
            check_gradients("transpose",
                            [](const std::vector<Tensor>& in) { return transpose(in[0]); },
                            {random_tensor(rng, {r, c})}, rng);
        }
        {
            const int n = rnd_dim(rng, 1, 6);
            check_gradients("gelu", [](const std::vector<Tensor>& in) { return gelu(in[0]); },
                            {random_tensor(rng, {n})}, rng);
            check_gradients("tanh", [](const std::vector<Tensor>& in) { return tanh_op(in[0]); },
                            {random_tensor(rng, {n})}, rng);
            check_gradients("log_sigmoid",
                            [](const std::vector<Tensor>& in) { return log_sigmoid(in[0]); },
                            {random_tensor(rng, {n}, 0, 3)}, rng);
            check_gradients("exp", [](const std::vector<Tensor>& in) { return exp_op(in[0]); },
                            {random_tensor(rng, {n})}, rng);
            Tensor pos = random_tensor(rng, {n});
            for (std::size_t i = 0; i < pos.size(); ++i)
                pos.data()[i] = std::abs(pos.data()[i]) + 0.5;
            check_gradients("log", [](const std::vector<Tensor>& in) { return log_op(in[0]); },
                            {pos}, rng);
            check_gradients("sum", [](const std::vector<Tensor>& in) { return sum(in[0]); },
                            {random_tensor(rng, {n})}, rng);
            check_gradients("logsumexp",
                            [](const std::vector<Tensor>& in) { return logsumexp(in[0]); },
                            {random_tensor(rng, {n}, 0, 2)}, rng);
            const int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            check_gradients("select",
                            [idx](const std::vector<Tensor>& in) { return select(in[0], idx); },
                            {random_tensor(rng, {n})}, rng);
        }
        {
            const int d = rnd_dim(rng, 2, 6);
            Tensor u = random_tensor(rng, {d});
            Tensor v = random_tensor(rng, {d});
            // keep norms away from zero so cosine stays smooth
            u.data()[0] += u.data()[0] >= 0 ? 1.0 : -1.0;
            v.data()[0] += v.data()[0] >= 0 ? 1.0 : -1.0;
            check_gradients(
                "cosine_similarity",
                [](const std::vector<Tensor>& in) { return cosine_similarity(in[0], in[1]); },
                {u, v}, rng);
            check_gradients("dot",
                            [](const std::vector<Tensor>& in) { return dot(in[0], in[1]); },
                            {random_tensor(rng, {d}), random_tensor(rng, {d})}, rng);
        }
        {
            const int v = rnd_dim(rng, 4, 8), d = rnd_dim(rng, 2, 4);
            const int n = rnd_dim(rng, 2, 6);
            std::vector<int> ids(static_cast<std::size_t>(n));
            for (auto& id : ids) id = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
            check_gradients(
                "embedding_lookup",
                [ids](const std::vector<Tensor>& in) { return embedding_lookup(in[0], ids); },
                {random_tensor(rng, {v, d})}, rng);
        }
        {
            const int r = rnd_dim(rng, 2, 6), c = rnd_dim(rng, 2, 6);
            const int r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(r)));
            const int r1 = r0 + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(r - r0)));
            check_gradients(
                "slice_rows",
                [r0, r1](const std::vector<Tensor>& in) { return slice_rows(in[0], r0, r1); },
                {random_tensor(rng, {r, c})}, rng);
            const int c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
            const int c1 = c0 + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c - c0)));
            check_gradients(
                "slice_cols",
                [c0, c1](const std::vector<Tensor>& in) { return slice_cols(in[0], c0, c1); },
                {random_tensor(rng, {r, c})}, rng);
            check_gradients(
                "reshape",
                [r, c](const std::vector<Tensor>& in) { return reshape(in[0], {c, r}); },
                {random_tensor(rng, {r, c})}, rng);
        }
    }
}

TEST_CASE("gradcheck: randomized small composite graphs") {
    Rng rng(42424242);
    for (int rep = 0; rep < 25; ++rep) {
        const int m = rnd_dim(rng, 2, 4), k = rnd_dim(rng, 2, 4), n = rnd_dim(rng, 2, 4);
        // matmul -> tanh -> add -> softmax -> (weighted) sum: a five-op graph
        check_gradients(
            "composite5",
            [](const std::vector<Tensor>& in) {
                return softmax_rows(add(tanh_op(matmul(in[0], in[1])), in[2]));
            },
            {random_tensor(rng, {m, k}), random_tensor(rng, {k, n}), random_tensor(rng, {m, n})},
            rng);
        check_gradients(
            "composite_norm",
            [](const std::vector<Tensor>& in) {
                return layer_norm_rows(gelu(matmul(in[0], in[1])), in[2], in[3]);
            },
            {random_tensor(rng, {m, k}), random_tensor(rng, {k, n}),
             random_tensor(rng, {n}, 1.0, 0.2), random_tensor(rng, {n})},
            rng);
    }
}
