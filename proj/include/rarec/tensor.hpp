#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rarec/common.hpp"

namespace rarec {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s);

// One node of the computation graph: a dense row-major buffer plus an
// optional gradient buffer of the same size. Values are kept in double;
// checkpoints round to float32 (see checkpoint.hpp).
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until the node participates in a backward pass
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantic handle to a graph node. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->value.size(); }

    double* data() { return node_->value.data(); }
    const double* data() const { return node_->value.data(); }
    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }

    double item() const;  // value of a single-element tensor

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }

    // Gradient access; zeros if this tensor never received one.
    std::vector<double> grad_or_zero() const;
    const std::vector<double>& raw_grad() const { return node_->grad; }
    void zero_grad() {
        node_->grad.assign(node_->value.size(), 0.0);
    }
    void clear_grad() { node_->grad.clear(); }

    bool all_finite() const;

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode> node_;
    friend class Tape;
};

// Record of primitive operations applied during a forward pass, in execution
// order (inputs always precede consumers). backward() replays it once, in
// reverse. A tape and its intermediate tensors stay on one thread.
class Tape {
public:
    struct Step {
        const char* op;
        std::function<void()> backward;
    };

    void record(const char* op, std::function<void()> backward_fn) {
        steps_.push_back(Step{op, std::move(backward_fn)});
    }

    std::size_t size() const { return steps_.size(); }

    // Seeds d(loss)/d(loss)=1 and accumulates gradients into every node that
    // contributed. Each recorded step is visited exactly once.
    void backward(const Tensor& loss);

    static Tape* active() { return active_; }

private:
    std::vector<Step> steps_;
    static thread_local Tape* active_;
    friend class TapeScope;
};

// RAII scope that makes a tape the active recorder on this thread.
class TapeScope {
public:
    explicit TapeScope(Tape& t) : prev_(Tape::active_) { Tape::active_ = &t; }
    ~TapeScope() { Tape::active_ = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Named, deterministically ordered parameter collection.
using ParameterSet = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

// Gradients of `params` after a backward pass. Parameters disconnected from
// the loss get an explicit zero tensor.
GradMap collect_grads(const ParameterSet& params);

void zero_grads(ParameterSet& params);

// Checksum over the canonical checkpoint encoding (float32 little-endian) of
// the tensors in name order. This is the "frozen contract" checksum: it is
// invariant under save/load round trips.
std::uint64_t content_checksum(const ParameterSet& params);

}  // namespace rarec
