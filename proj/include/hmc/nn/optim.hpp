#ifndef HMC_NN_OPTIM_HPP
#define HMC_NN_OPTIM_HPP

#include <cmath>
#include <string>
#include <vector>

#include "hmc/error.hpp"
#include "hmc/mesh.hpp"

namespace hmc::nn {

/// Named view of one trainable matrix inside a model.
struct ParamRef {
    std::string name;
    Matrix* value;
};

struct AdamState {
    std::vector<Matrix> first;
    std::vector<Matrix> second;
    long step = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update over all parameters.
inline void adam_step(const std::vector<ParamRef>& params, const std::vector<Matrix>& grads, AdamState& state,
                      const AdamConfig& cfg) {
    if (grads.size() != params.size()) throw ShapeError("adam: gradient count mismatch");
    if (state.first.empty()) {
        for (const auto& p : params) {
            state.first.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
            state.second.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        }
    }
    if (state.first.size() != params.size()) throw ShapeError("adam: state does not match parameters");
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& w = *params[i].value;
        const Matrix& g = grads[i];
        if (g.rows() != w.rows() || g.cols() != w.cols()) throw ShapeError("adam: gradient shape for " + params[i].name);
        state.first[i] = cfg.beta1 * state.first[i] + (1.0 - cfg.beta1) * g;
        state.second[i] = cfg.beta2 * state.second[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        w.array() -= cfg.lr * (state.first[i].array() / c1) / ((state.second[i].array() / c2).sqrt() + cfg.eps);
    }
}

inline void adam_step(const std::vector<ParamRef>& params, const std::vector<Matrix>& grads, AdamState& state,
                      double lr) {
    AdamConfig cfg;
    cfg.lr = lr;
    adam_step(params, grads, state, cfg);
}

}  // namespace hmc::nn

#endif  // HMC_NN_OPTIM_HPP
