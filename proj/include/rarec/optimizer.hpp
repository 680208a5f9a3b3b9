#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rarec/tensor.hpp"

namespace rarec {

// AdamW with decoupled weight decay and a linear learning-rate decay:
// lr(t) = base_lr * max(0, 1 - t/total_steps), evaluated before the step
// counter increments (the first step runs at full base_lr).
struct OptimizerState {
    double base_lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::int64_t total_steps = 1;
    std::int64_t step = 0;

    std::map<std::string, std::vector<double>> m;  // first moments
    std::map<std::string, std::vector<double>> v;  // second moments

    double effective_lr() const {
        const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
        return base_lr * (frac > 0.0 ? frac : 0.0);
    }
};

// One AdamW update over a named parameter set. Throws on a gradient map
// that is missing a parameter key.
void optimizer_step(ParameterSet& params, const GradMap& grads, OptimizerState& state);

}  // namespace rarec
