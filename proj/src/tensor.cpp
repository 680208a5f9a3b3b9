#include "rarec/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rarec {

thread_local Tape* Tape::active_ = nullptr;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::uint64_t from_hex(const std::string& s) {
    std::uint64_t v = 0;
    for (char c : s) {
        v <<= 4;
        if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
        else throw CheckpointError("bad hex digit in checksum: " + s);
    }
    return v;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), 0.0);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
    return node_->value[0];
}

std::vector<double> Tensor::grad_or_zero() const {
    if (node_->grad.size() == node_->value.size()) return node_->grad;
    return std::vector<double>(node_->value.size(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : node_->value)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    auto n = loss.node();
    n->ensure_grad();
    n->grad[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        it->backward();
    }
}

GradMap collect_grads(const ParameterSet& params) {
    GradMap out;
    for (const auto& [name, t] : params) {
        out.emplace(name, Tensor::from(t.shape(), t.grad_or_zero()));
    }
    return out;
}

void zero_grads(ParameterSet& params) {
    for (auto& [name, t] : params) {
        (void)name;
        t.clear_grad();
    }
}

std::uint64_t content_checksum(const ParameterSet& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : params) {
        h = fnv1a64(name, h);
        for (double v : t.values()) {
            const float f = static_cast<float>(v);
            h = fnv1a64(&f, sizeof(f), h);
        }
    }
    return h;
}

}  // namespace rarec
