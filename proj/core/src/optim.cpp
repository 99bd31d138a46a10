#include "tadfkd/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace tadfkd {

namespace {

void require_aligned(std::span<Tensor* const> params, std::span<const Tensor> grads,
                     const char* who) {
    if (params.size() != grads.size()) {
        throw ShapeMismatch(std::string(who) + ": " + std::to_string(params.size()) +
                            " params vs " + std::to_string(grads.size()) + " grads");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape != grads[i].shape) {
            throw ShapeMismatch(std::string(who) + ": grad shape mismatch at parameter " +
                                std::to_string(i));
        }
    }
}

void ensure_buffers(std::vector<Tensor>& bufs, std::span<Tensor* const> params) {
    if (bufs.empty()) {
        bufs.reserve(params.size());
        for (Tensor* p : params) bufs.push_back(Tensor::zeros(p->shape));
    }
}

} // namespace

double cosine_lr(double base_lr, long t, long total) {
    if (total <= 0) return base_lr;
    return base_lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                           static_cast<double>(total)));
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
              SgdState& state, const SgdConfig& cfg, long t, long total) {
    require_aligned(params, grads, "sgd_step");
    ensure_buffers(state.momentum, params);
    const double lr_t = cosine_lr(cfg.lr, t, total);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->values;
        auto& buf = state.momentum[i].values;
        const auto& g = grads[i].values;
        for (std::size_t k = 0; k < p.size(); ++k) {
            buf[k] = cfg.momentum * buf[k] + (g[k] + cfg.weight_decay * p[k]);
            p[k] -= lr_t * buf[k];
        }
    }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& cfg) {
    require_aligned(params, grads, "adam_step");
    ensure_buffers(state.m, params);
    ensure_buffers(state.v, params);
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->values;
        auto& m = state.m[i].values;
        auto& v = state.v[i].values;
        const auto& g = grads[i].values;
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

} // namespace tadfkd
