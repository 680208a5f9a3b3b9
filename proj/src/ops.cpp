#include "rarec/ops.hpp"

#include <algorithm>
#include <cmath>

namespace rarec {

namespace {

Tape* recording(std::initializer_list<const Tensor*> ins) {
    Tape* t = Tape::active();
    if (!t) return nullptr;
    for (const Tensor* p : ins)
        if (p->requires_grad()) return t;
    return nullptr;
}

void require_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_acc(int m, int k, int n, const double* A, const double* B, double* C) {
    for (int i = 0; i < m; ++i) {
        const double* a_row = A + static_cast<std::size_t>(i) * k;
        double* c_row = C + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double a = a_row[p];
            if (a == 0.0) continue;
            const double* b_row = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T  (rows of B dotted with rows of A)
void gemm_abt_acc(int m, int n, int k, const double* A, const double* B, double* C) {
    for (int i = 0; i < m; ++i) {
        const double* a_row = A + static_cast<std::size_t>(i) * n;
        double* c_row = C + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* b_row = B + static_cast<std::size_t>(p) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += a_row[j] * b_row[j];
            c_row[p] += s;
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1);
    const bool vec = b.rank() == 1;
    const int kb = vec ? b.dim(0) : b.dim(0);
    const int n = vec ? 1 : b.dim(1);
    if (k != kb)
        throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = Tensor::zeros(vec ? Shape{m} : Shape{m, n});
    gemm_acc(m, k, n, a.data(), b.data(), out.data());
    if (Tape* tape = recording({&a, &b})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record("matmul", [an, bn, on, m, k, n] {
            const double* g = on->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                // dA += dC * B^T
                gemm_abt_acc(m, n, k, g, bn->value.data(), an->grad.data());
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dB += A^T * dC
                const double* A = an->value.data();
                double* dB = bn->grad.data();
                for (int i = 0; i < m; ++i) {
                    const double* g_row = g + static_cast<std::size_t>(i) * n;
                    const double* a_row = A + static_cast<std::size_t>(i) * k;
                    for (int p = 0; p < k; ++p) {
                        const double a = a_row[p];
                        if (a == 0.0) continue;
                        double* db_row = dB + static_cast<std::size_t>(p) * n;
                        for (int j = 0; j < n; ++j) db_row[j] += a * g_row[j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool bcast = a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
    if (!bcast) require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    if (bcast) {
        const int r = a.dim(0), c = a.dim(1);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                out.data()[i * c + j] = a.data()[i * c + j] + b.data()[j];
    } else {
        for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    }
    if (Tape* tape = recording({&a, &b})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record("add", [an, bn, on, bcast] {
            const double* g = on->grad.data();
            const std::size_t sz = on->value.size();
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < sz; ++i) an->grad[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (bcast) {
                    const std::size_t c = bn->value.size();
                    for (std::size_t i = 0; i < sz; ++i) bn->grad[i % c] += g[i];
                } else {
                    for (std::size_t i = 0; i < sz; ++i) bn->grad[i] += g[i];
                }
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (Tape* tape = recording({&a, &b})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record("sub", [an, bn, on] {
            const double* g = on->grad.data();
            const std::size_t sz = on->value.size();
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < sz; ++i) an->grad[i] += g[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < sz; ++i) bn->grad[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (Tape* tape = recording({&a, &b})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), bn = b.node(), on = out.node();
        tape->record("mul", [an, bn, on] {
            const double* g = on->grad.data();
            const std::size_t sz = on->value.size();
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < sz; ++i) an->grad[i] += g[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < sz; ++i) bn->grad[i] += g[i] * an->value[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("scale", [an, on, c] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < on->value.size(); ++i)
                an->grad[i] += on->grad[i] * c;
        });
    }
    return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    if (a.rank() != b.rank()) throw ShapeError("concat: rank mismatch");
    Tensor out;
    if (a.rank() == 1) {
        if (axis != 0) throw ShapeError("concat: rank-1 tensors concat on axis 0");
        out = Tensor::zeros({a.dim(0) + b.dim(0)});
        std::copy(a.data(), a.data() + a.size(), out.data());
        std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    } else if (a.rank() == 2 && axis == 0) {
        if (a.dim(1) != b.dim(1)) throw ShapeError("concat axis 0: column mismatch");
        out = Tensor::zeros({a.dim(0) + b.dim(0), a.dim(1)});
        std::copy(a.data(), a.data() + a.size(), out.data());
        std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    } else if (a.rank() == 2 && axis == 1) {
        if (a.dim(0) != b.dim(0)) throw ShapeError("concat axis 1: row mismatch");
        const int r = a.dim(0), ca = a.dim(1), cb = b.dim(1);
        out = Tensor::zeros({r, ca + cb});
        for (int i = 0; i < r; ++i) {
            std::copy(a.data() + i * ca, a.data() + (i + 1) * ca, out.data() + i * (ca + cb));
            std::copy(b.data() + i * cb, b.data() + (i + 1) * cb,
                      out.data() + i * (ca + cb) + ca);
        }
    } else {
        throw ShapeError("concat: unsupported rank/axis");
    }
    if (Tape* tape = recording({&a, &b})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), bn = b.node(), on = out.node();
        const int r2axis = a.rank() == 2 ? axis : 0;
        tape->record("concat", [an, bn, on, r2axis] {
            const double* g = on->grad.data();
            if (r2axis == 0) {
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += g[i];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    const std::size_t off = an->value.size();
                    for (std::size_t i = 0; i < bn->value.size(); ++i)
                        bn->grad[i] += g[off + i];
                }
            } else {
                const int r = an->shape[0], ca = an->shape[1], cb = bn->shape[1];
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < ca; ++j)
                            an->grad[i * ca + j] += g[i * (ca + cb) + j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < cb; ++j)
                            bn->grad[i * cb + j] += g[i * (ca + cb) + ca + j];
                }
            }
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    const bool vec = a.rank() == 1;
    const int r = vec ? 1 : a.dim(0);
    const int c = vec ? a.dim(0) : a.dim(1);
    if (c == 0) throw ShapeError("softmax_rows: empty row");
    Tensor out = Tensor::zeros(a.shape());
    for (int i = 0; i < r; ++i) {
        const double* x = a.data() + static_cast<std::size_t>(i) * c;
        double* y = out.data() + static_cast<std::size_t>(i) * c;
        double mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (int j = 0; j < c; ++j) y[j] /= z;
    }
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("softmax_rows", [an, on, r, c] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < r; ++i) {
                const double* y = on->value.data() + static_cast<std::size_t>(i) * c;
                const double* gy = on->grad.data() + static_cast<std::size_t>(i) * c;
                double* gx = an->grad.data() + static_cast<std::size_t>(i) * c;
                double s = 0.0;
                for (int j = 0; j < c; ++j) s += gy[j] * y[j];
                for (int j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - s);
            }
        });
    }
    return out;
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank(a, 2, "layer_norm_rows");
    require_rank(gain, 1, "layer_norm_rows");
    require_rank(bias, 1, "layer_norm_rows");
    const int r = a.dim(0), c = a.dim(1);
    if (gain.dim(0) != c || bias.dim(0) != c)
        throw ShapeError("layer_norm_rows: gain/bias dim mismatch");
    Tensor out = Tensor::zeros(a.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(r));
    std::vector<double> xhat(a.size());
    for (int i = 0; i < r; ++i) {
        const double* x = a.data() + static_cast<std::size_t>(i) * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x[j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        double* y = out.data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
            const double xh = (x[j] - mu) * is;
            xhat[static_cast<std::size_t>(i) * c + j] = xh;
            y[j] = gain.data()[j] * xh + bias.data()[j];
        }
    }
    if (Tape* tape = recording({&a, &gain, &bias})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), gn = gain.node(), bn = bias.node(), on = out.node();
        auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        tape->record("layer_norm_rows", [an, gn, bn, on, is, xh, r, c] {
            const double* g = on->grad.data();
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) bn->grad[j] += g[i * c + j];
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        gn->grad[j] += g[i * c + j] * (*xh)[static_cast<std::size_t>(i) * c + j];
            }
            if (an->requires_grad) {
                an->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    // dx = (1/s) * (dxh - mean(dxh) - xh * mean(dxh*xh))
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < c; ++j) {
                        const double dxh = g[i * c + j] * gn->value[static_cast<std::size_t>(j)];
                        m1 += dxh;
                        m2 += dxh * (*xh)[static_cast<std::size_t>(i) * c + j];
                    }
                    m1 /= c;
                    m2 /= c;
                    const double s = (*is)[static_cast<std::size_t>(i)];
                    for (int j = 0; j < c; ++j) {
                        const double dxh = g[i * c + j] * gn->value[static_cast<std::size_t>(j)];
                        an->grad[static_cast<std::size_t>(i) * c + j] +=
                            s * (dxh - m1 - (*xh)[static_cast<std::size_t>(i) * c + j] * m2);
                    }
                }
            }
        });
    }
    return out;
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename F, typename DF>
Tensor elementwise(const Tensor& a, const char* name, F f, DF df) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = f(a.data()[i]);
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record(name, [an, on, df] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < on->value.size(); ++i)
                an->grad[i] += on->grad[i] * df(an->value[i], on->value[i]);
        });
    }
    return out;
}

}  // namespace

Tensor gelu(const Tensor& a) {
    return elementwise(
        a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                   x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        });
}

Tensor tanh_op(const Tensor& a) {
    return elementwise(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor log_sigmoid(const Tensor& a) {
    // -log(1 + exp(-x)) with the standard large-|x| safe branches
    return elementwise(
        a, "log_sigmoid",
        [](double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
        [](double x, double) {
            // sigma(-x)
            if (x >= 0.0) {
                const double e = std::exp(-x);
                return e / (1.0 + e);
            }
            return 1.0 / (1.0 + std::exp(x));
        });
}

Tensor exp_op(const Tensor& a) {
    return elementwise(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a.data()[i] > 0.0))
            throw NumericError("log of non-positive value");
    return elementwise(
        a, "log", [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    require_rank(table, 2, "embedding_lookup");
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ShapeError("embedding_lookup: id " + std::to_string(id) + " out of range " +
                             std::to_string(v));
    Tensor out = Tensor::zeros({static_cast<int>(ids.size()), d});
    for (std::size_t t = 0; t < ids.size(); ++t)
        std::copy(table.data() + static_cast<std::size_t>(ids[t]) * d,
                  table.data() + static_cast<std::size_t>(ids[t] + 1) * d,
                  out.data() + t * static_cast<std::size_t>(d));
    if (Tape* tape = recording({&table})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto tn = table.node(), on = out.node();
        auto idv = std::make_shared<std::vector<int>>(ids);
        tape->record("embedding_lookup", [tn, on, idv, d] {
            if (!tn->requires_grad) return;
            tn->ensure_grad();
            for (std::size_t t = 0; t < idv->size(); ++t) {
                double* dst = tn->grad.data() + static_cast<std::size_t>((*idv)[t]) * d;
                const double* src = on->grad.data() + t * static_cast<std::size_t>(d);
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const int r = a.dim(0), c = a.dim(1);
    Tensor out = Tensor::zeros({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("transpose", [an, on, r, c] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) an->grad[i * c + j] += on->grad[j * r + i];
        });
    }
    return out;
}

Tensor mean_rows(const Tensor& a) {
    require_rank(a, 2, "mean_rows");
    const int r = a.dim(0), c = a.dim(1);
    if (r == 0) throw ShapeError("mean_rows: zero rows");
    Tensor out = Tensor::zeros({c});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.data()[j] += a.data()[i * c + j];
    for (int j = 0; j < c; ++j) out.data()[j] /= r;
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("mean_rows", [an, on, r, c] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) an->grad[i * c + j] += on->grad[j] / r;
        });
    }
    return out;
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    require_rank(u, 1, "cosine_similarity");
    require_same_shape(u, v, "cosine_similarity");
    const int d = u.dim(0);
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (int i = 0; i < d; ++i) {
        uu += u.data()[i] * u.data()[i];
        vv += v.data()[i] * v.data()[i];
        uv += u.data()[i] * v.data()[i];
    }
    if (uu == 0.0 || vv == 0.0) throw NumericError("cosine_similarity: zero-norm vector");
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    const double cosv = uv / (nu * nv);
    Tensor out = Tensor::scalar(cosv);
    if (Tape* tape = recording({&u, &v})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto un = u.node(), vn = v.node(), on = out.node();
        tape->record("cosine_similarity", [un, vn, on, nu, nv, cosv, d] {
            const double g = on->grad[0];
            if (un->requires_grad) {
                un->ensure_grad();
                for (int i = 0; i < d; ++i)
                    un->grad[static_cast<std::size_t>(i)] +=
                        g * (vn->value[static_cast<std::size_t>(i)] / (nu * nv) -
                             cosv * un->value[static_cast<std::size_t>(i)] / (nu * nu));
            }
            if (vn->requires_grad) {
                vn->ensure_grad();
                for (int i = 0; i < d; ++i)
                    vn->grad[static_cast<std::size_t>(i)] +=
                        g * (un->value[static_cast<std::size_t>(i)] / (nu * nv) -
                             cosv * vn->value[static_cast<std::size_t>(i)] / (nv * nv));
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i];
    Tensor out = Tensor::scalar(s);
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("sum", [an, on] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            const double g = on->grad[0];
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
        });
    }
    return out;
}

Tensor dot(const Tensor& u, const Tensor& v) {
    require_rank(u, 1, "dot");
    require_same_shape(u, v, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u.data()[i] * v.data()[i];
    Tensor out = Tensor::scalar(s);
    if (Tape* tape = recording({&u, &v})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto un = u.node(), vn = v.node(), on = out.node();
        tape->record("dot", [un, vn, on] {
            const double g = on->grad[0];
            if (un->requires_grad) {
                un->ensure_grad();
                for (std::size_t i = 0; i < un->grad.size(); ++i)
                    un->grad[i] += g * vn->value[i];
            }
            if (vn->requires_grad) {
                vn->ensure_grad();
                for (std::size_t i = 0; i < vn->grad.size(); ++i)
                    vn->grad[i] += g * un->value[i];
            }
        });
    }
    return out;
}

Tensor logsumexp(const Tensor& a) {
    require_rank(a, 1, "logsumexp");
    const int n = a.dim(0);
    if (n == 0) throw ShapeError("logsumexp: empty input");
    double mx = a.data()[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, a.data()[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(a.data()[i] - mx);
    const double lse = mx + std::log(z);
    Tensor out = Tensor::scalar(lse);
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("logsumexp", [an, on, lse, n] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            const double g = on->grad[0];
            for (int i = 0; i < n; ++i)
                an->grad[static_cast<std::size_t>(i)] +=
                    g * std::exp(an->value[static_cast<std::size_t>(i)] - lse);
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    require_rank(a, 2, "slice_rows");
    const int r = a.dim(0), c = a.dim(1);
    if (r0 < 0 || r1 > r || r0 > r1) throw ShapeError("slice_rows: bad range");
    Tensor out = Tensor::zeros({r1 - r0, c});
    std::copy(a.data() + static_cast<std::size_t>(r0) * c,
              a.data() + static_cast<std::size_t>(r1) * c, out.data());
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("slice_rows", [an, on, r0, c] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            const std::size_t off = static_cast<std::size_t>(r0) * c;
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[off + i] += on->grad[i];
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    require_rank(a, 2, "slice_cols");
    const int r = a.dim(0), c = a.dim(1);
    if (c0 < 0 || c1 > c || c0 > c1) throw ShapeError("slice_cols: bad range");
    const int w = c1 - c0;
    Tensor out = Tensor::zeros({r, w});
    for (int i = 0; i < r; ++i)
        std::copy(a.data() + static_cast<std::size_t>(i) * c + c0,
                  a.data() + static_cast<std::size_t>(i) * c + c1,
                  out.data() + static_cast<std::size_t>(i) * w);
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("slice_cols", [an, on, c0, c, w, r] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < w; ++j)
                    an->grad[static_cast<std::size_t>(i) * c + c0 + j] +=
                        on->grad[static_cast<std::size_t>(i) * w + j];
        });
    }
    return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw ShapeError("reshape: size mismatch " + shape_str(a.shape()) + " -> " +
                         shape_str(shape));
    Tensor out = Tensor::from(std::move(shape), a.values());
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("reshape", [an, on] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor select(const Tensor& a, int index) {
    require_rank(a, 1, "select");
    if (index < 0 || index >= a.dim(0)) throw ShapeError("select: index out of range");
    Tensor out = Tensor::scalar(a.data()[index]);
    if (Tape* tape = recording({&a})) {
        out.set_requires_grad(true);
        out.node()->ensure_grad();
        auto an = a.node(), on = out.node();
        tape->record("select", [an, on, index] {
            if (!an->requires_grad) return;
            an->ensure_grad();
            an->grad[static_cast<std::size_t>(index)] += on->grad[0];
        });
    }
    return out;
}

const std::vector<std::string>& primitive_names() {
    static const std::vector<std::string> names = {
        "matmul", "add", "sub", "mul", "scale", "concat", "softmax_rows",
        "layer_norm_rows", "gelu", "tanh", "embedding_lookup", "transpose",
        "mean_rows", "cosine_similarity", "log_sigmoid", "exp", "log", "sum",
        "dot", "logsumexp", "slice_rows", "slice_cols", "select"};
    return names;
}

Tensor forward_primitive(const std::string& name, const std::vector<Tensor>& inputs,
                         double scalar_attr, const std::vector<int>& int_attrs) {
    auto in = [&](std::size_t i) -> const Tensor& {
        if (i >= inputs.size())
            throw ShapeError("forward_primitive " + name + ": missing input " +
                             std::to_string(i));
        return inputs[i];
    };
    if (name == "matmul") return matmul(in(0), in(1));
    if (name == "add") return add(in(0), in(1));
    if (name == "sub") return sub(in(0), in(1));
    if (name == "mul") return mul(in(0), in(1));
    if (name == "scale") return scale(in(0), scalar_attr);
    if (name == "concat") return concat(in(0), in(1), int_attrs.empty() ? 0 : int_attrs[0]);
    if (name == "softmax_rows") return softmax_rows(in(0));
    if (name == "layer_norm_rows") return layer_norm_rows(in(0), in(1), in(2));
    if (name == "gelu") return gelu(in(0));
    if (name == "tanh") return tanh_op(in(0));
    if (name == "embedding_lookup") return embedding_lookup(in(0), int_attrs);
    if (name == "transpose") return transpose(in(0));
    if (name == "mean_rows") return mean_rows(in(0));
    if (name == "cosine_similarity") return cosine_similarity(in(0), in(1));
    if (name == "log_sigmoid") return log_sigmoid(in(0));
    if (name == "exp") return exp_op(in(0));
    if (name == "log") return log_op(in(0));
    if (name == "sum") return sum(in(0));
    if (name == "dot") return dot(in(0), in(1));
    if (name == "logsumexp") return logsumexp(in(0));
    if (name == "slice_rows") return slice_rows(in(0), int_attrs.at(0), int_attrs.at(1));
    if (name == "slice_cols") return slice_cols(in(0), int_attrs.at(0), int_attrs.at(1));
    if (name == "select") return select(in(0), int_attrs.at(0));
    throw ShapeError("unknown primitive: " + name);
}

Tensor init_trunc_normal(Shape shape, double lo, double hi, double std,
                         std::uint64_t rng_seed) {
    if (!(lo < hi)) throw ConfigError("init_trunc_normal: lo must be < hi");
    if (!(std > 0.0)) throw ConfigError("init_trunc_normal: std must be > 0");
    Rng rng(rng_seed);
    Tensor out = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = rng.trunc_normal(lo, hi, std);
    return out;
}

void check_finite(const Tensor& t, const char* context) {
    if (!t.all_finite())
        throw NumericError(std::string("non-finite value in ") + context);
}

double Rng::trunc_normal(double lo, double hi, double std) {
    for (;;) {
        const double v = normal(0.0, std);
        if (v >= lo && v <= hi) return v;
    }
}

}  // namespace rarec
