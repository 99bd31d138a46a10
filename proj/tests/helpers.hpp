#pragma once

// Shared test utilities: seeded random tensors and span shorthands.

#include <span>
#include <vector>

#include "tadfkd/autodiff.hpp"
#include "tadfkd/rng.hpp"

namespace test_util {

inline tadfkd::Tensor rand_tensor(std::vector<int> shape, double lo, double hi,
                                  tadfkd::Rng& rng) {
    tadfkd::Tensor t = tadfkd::Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

// Random values bounded away from zero, for ops with kinks or clamps
// (relu, abs) where central differences straddle the non-smooth point.
inline tadfkd::Tensor rand_tensor_away_from(std::vector<int> shape, double lo, double hi,
                                            double margin, tadfkd::Rng& rng) {
    tadfkd::Tensor t = tadfkd::Tensor::zeros(std::move(shape));
    for (double& v : t.values) {
        do {
            v = rng.uniform(lo, hi);
        } while (std::abs(v) < margin);
    }
    return t;
}

inline std::span<const tadfkd::Tensor> one(const tadfkd::Tensor& t) {
    return std::span<const tadfkd::Tensor>(&t, 1);
}

} // namespace test_util
