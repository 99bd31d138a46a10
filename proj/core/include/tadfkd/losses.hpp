#pragma once

// Loss terms for generator and student training. The adversarial and
// KD losses average over the selected subset only; the representation
// loss always sees the full batch. JSD works on softmax probabilities,
// the L1 KD distance on raw logits.

#include <optional>
#include <utility>
#include <vector>

#include "tadfkd/autodiff.hpp"
#include "tadfkd/network.hpp"
#include "tadfkd/selection.hpp"

namespace tadfkd {

// Mixing coefficients: total generator loss alpha*cls + beta*adv +
// gamma*rep, with rep = bns + lambda*tv + (1-lambda)*l2.
struct LossWeights {
    double alpha = 0.0;
    double beta = 1.0;
    double gamma = 10.0;
    double lambda = 0.5;
};

using GridShape = std::pair<int, int>; // (H, W)

// One-hot rows for a label vector.
Tensor onehot_rows(std::span<const int> labels, int classes);
// Row argmax, ties broken by lowest class index.
std::vector<int> argmax_rows(const Tensor& t);
// Mean of a per-sample vector over the selected subset.
Tensor masked_mean(const Tensor& per_sample, const SelectionMask& mask);

// Per-sample -log p[label], natural log, eps-clamped.
Tensor cross_entropy(const Tensor& probs, const Tensor& onehot);

// Mean cross-entropy of the teacher's softmax output against its own
// argmax one-hot; the label is a constant, gradient flows through logits.
Tensor class_prior_loss(const Tensor& teacher_logits);

// Per-sample Jensen-Shannon divergence between probability rows; in [0, ln 2].
Tensor jsd(const Tensor& p, const Tensor& q);

// Mean over selected samples of 1 - JSD(softmax(t), softmax(s)).
Tensor adversarial_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                        const SelectionMask& mask);

// Sum over BN layers of ||mu_obs - mu_run||_2 + ||var_obs - var_run||_2.
Tensor bns_loss(const BnObservation& obs, const Network& teacher);

// Mean over the batch of the summed squared adjacent differences on the
// (H, W) grid, divided by the pixel count; gridless data uses (1, d).
Tensor total_variation(const Tensor& samples, const std::optional<GridShape>& grid);

// Mean over the batch of ||x||_2.
Tensor l2_reg(const Tensor& samples);

// bns + lambda*tv + (1-lambda)*l2 over the full batch; never masked.
Tensor representation_loss(const BnObservation& obs, const Network& teacher,
                           const Tensor& samples, const std::optional<GridShape>& grid,
                           double lambda);

struct GeneratorLossParts {
    std::optional<Tensor> cls;
    std::optional<Tensor> adv;
    std::optional<Tensor> rep;
};

// alpha*cls + beta*adv + gamma*rep. Terms with a zero coefficient are
// not touched at all, so alpha = 0 reproduces the class-prior-free loss
// with no hidden path.
Tensor generator_loss(const LossWeights& weights, const GeneratorLossParts& parts);

// Mean over selected samples of the per-sample L1 distance between
// teacher and student logits.
Tensor kd_loss_l1(const Tensor& teacher_logits, const Tensor& student_logits,
                  const SelectionMask& mask);

} // namespace tadfkd
