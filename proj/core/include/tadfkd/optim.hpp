#pragma once

// SGD with momentum + weight decay under a cosine learning-rate
// schedule (student, teacher) and Adam (generator). States hold one
// buffer per parameter, lazily shaped on first use.

#include <span>

#include "tadfkd/autodiff.hpp"

namespace tadfkd {

// base_lr * 0.5 * (1 + cos(pi * t / total)); lr(0) = base, lr(total) = 0.
double cosine_lr(double base_lr, long t, long total);

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

struct SgdState {
    std::vector<Tensor> momentum;
};

// buf <- momentum*buf + (grad + wd*param); param <- param - lr_t*buf,
// with lr_t from the cosine schedule at step t of total.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
              SgdState& state, const SgdConfig& cfg, long t, long total);

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step_count = 0;
};

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& cfg);

} // namespace tadfkd
