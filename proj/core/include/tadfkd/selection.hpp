#pragma once

// Teacher-driven sample selection. Per-sample confidence losses from the
// frozen teacher are clustered by a two-component 1D Gaussian mixture
// fitted with EM; samples whose posterior probability of the low-mean
// component strictly exceeds tau are kept.

#include <cstddef>
#include <span>
#include <vector>

#include "tadfkd/autodiff.hpp"

namespace tadfkd {

struct GmmConfig {
    int max_iterations = 100;
    double tolerance = 1e-6;      // log-likelihood change
    double variance_floor = 1e-9;
    double tau = 0.5;             // posterior threshold
};

// Component 1 is the smaller-mean component (high-quality side).
struct GmmFit {
    double mean1 = 0.0;
    double mean2 = 0.0;
    double var1 = 0.0;
    double var2 = 0.0;
    double weight1 = 0.5;
    double weight2 = 0.5;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool degenerate = false;
    std::vector<double> log_likelihood_trace; // one entry per E-step
};

struct SelectionMask {
    std::vector<bool> selected;
    std::vector<double> posterior;
    double selection_rate = 0.0;

    std::size_t size() const { return selected.size(); }
    std::size_t count() const;
};

// -log of the teacher's maximum softmax probability per row; equals the
// cross-entropy between the teacher's output and its own argmax one-hot.
// A pure selection statistic: no gradient path.
std::vector<double> per_sample_confidence(const Tensor& teacher_logits);

// EM on 1D data, initialized at (min, max) with sample variance and
// equal weights. Components come back sorted by mean. The fit is marked
// degenerate when the data has (near-)zero variance, a component's
// responsibility mass collapses, or both means coincide within 1e-9.
GmmFit fit_gmm_1d(std::span<const double> losses, const GmmConfig& cfg = {});

// Pr(component 1 | loss_value) by Bayes' rule over the fitted densities.
double posterior_small(const GmmFit& fit, double loss_value);

// Fit per batch and threshold posteriors at tau (strict inequality).
// Degenerate fits and batches below 2 select everything with posterior 1.
SelectionMask select(std::span<const double> losses, const GmmConfig& cfg = {});

// All-true mask, used when selection is disabled.
SelectionMask select_all(std::size_t batch);

} // namespace tadfkd
