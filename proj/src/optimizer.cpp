#include "rarec/optimizer.hpp"

#include <cmath>

namespace rarec {

void optimizer_step(ParameterSet& params, const GradMap& grads, OptimizerState& state) {
    const double lr = state.effective_lr();
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end())
            throw ShapeError("optimizer_step: missing gradient for parameter " + name);
        const Tensor& g = git->second;
        if (g.size() != p.size())
            throw ShapeError("optimizer_step: gradient size mismatch for " + name);

        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != p.size()) m.assign(p.size(), 0.0);
        if (v.size() != p.size()) v.assign(p.size(), 0.0);

        double* pv = p.data();
        const double* gv = g.data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gv[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gv[i] * gv[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            pv[i] -= lr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * pv[i]);
        }
    }
}

}  // namespace rarec
