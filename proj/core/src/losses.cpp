#include "tadfkd/losses.hpp"

#include <string>

namespace tadfkd {

namespace {

const int kAxis1[] = {1};

std::vector<BatchNormLayer const*> bn_layers(const Network& net) {
    std::vector<BatchNormLayer const*> out;
    for (const Layer& l : net.layers) {
        if (const auto* bn = std::get_if<BatchNormLayer>(&l)) out.push_back(bn);
    }
    return out;
}

Tensor euclidean_norm(const Tensor& v) {
    return sqrt(reduce_sum(mul(v, v)));
}

} // namespace

Tensor onehot_rows(std::span<const int> labels, int classes) {
    Tensor out = Tensor::zeros({static_cast<int>(labels.size()), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.at(static_cast<int>(i), labels[i]) = 1.0;
    }
    return out;
}

std::vector<int> argmax_rows(const Tensor& t) {
    const int m = t.rows(), c = t.cols();
    std::vector<int> out(static_cast<std::size_t>(m), 0);
    for (int i = 0; i < m; ++i) {
        double best = t.at(i, 0);
        for (int j = 1; j < c; ++j) {
            if (t.at(i, j) > best) {
                best = t.at(i, j);
                out[static_cast<std::size_t>(i)] = j;
            }
        }
    }
    return out;
}

Tensor masked_mean(const Tensor& per_sample, const SelectionMask& mask) {
    if (per_sample.rank() != 1 ||
        static_cast<std::size_t>(per_sample.shape[0]) != mask.size()) {
        throw ShapeMismatch("masked_mean: mask length " + std::to_string(mask.size()) +
                            " does not match batch");
    }
    const std::size_t kept = mask.count();
    if (kept == 0) throw EmptySelection("masked_mean: no samples selected");
    Tensor weights = Tensor::zeros({per_sample.shape[0]});
    for (std::size_t i = 0; i < mask.size(); ++i) {
        weights.values[i] = mask.selected[i] ? 1.0 : 0.0;
    }
    return scale(reduce_sum(mul(per_sample, weights)), 1.0 / static_cast<double>(kept));
}

Tensor cross_entropy(const Tensor& probs, const Tensor& onehot) {
    if (probs.shape != onehot.shape) {
        throw ShapeMismatch("cross_entropy: probs and onehot shapes differ");
    }
    return scale(reduce_sum(mul(onehot, log(probs)), kAxis1), -1.0);
}

Tensor class_prior_loss(const Tensor& teacher_logits) {
    Tensor probs = softmax(teacher_logits);
    // Label selection is detached: a constant one-hot per row.
    Tensor labels = onehot_rows(argmax_rows(teacher_logits.detached()), teacher_logits.cols());
    return reduce_mean(cross_entropy(probs, labels));
}

Tensor jsd(const Tensor& p, const Tensor& q) {
    if (p.shape != q.shape) throw ShapeMismatch("jsd: input shapes differ");
    Tensor m = scale(add(p, q), 0.5);
    Tensor log_m = log(m);
    Tensor kl_pm = reduce_sum(mul(p, sub(log(p), log_m)), kAxis1);
    Tensor kl_qm = reduce_sum(mul(q, sub(log(q), log_m)), kAxis1);
    return scale(add(kl_pm, kl_qm), 0.5);
}

Tensor adversarial_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                        const SelectionMask& mask) {
    Tensor per = jsd(softmax(teacher_logits), softmax(student_logits));
    return affine(masked_mean(per, mask), -1.0, 1.0);
}

Tensor bns_loss(const BnObservation& obs, const Network& teacher) {
    const auto layers = bn_layers(teacher);
    if (layers.size() != obs.means.size() || layers.size() != obs.vars.size()) {
        throw LayerCountMismatch("bns_loss: observation covers " +
                                 std::to_string(obs.means.size()) + " layers, teacher has " +
                                 std::to_string(layers.size()));
    }
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Tensor dm = sub(obs.means[l], layers[l]->running_mean);
        Tensor dv = sub(obs.vars[l], layers[l]->running_var);
        total = add(total, add(euclidean_norm(dm), euclidean_norm(dv)));
    }
    return total;
}

Tensor total_variation(const Tensor& samples, const std::optional<GridShape>& grid) {
    const int d = samples.cols();
    const auto [h, w] = grid.value_or(GridShape{1, d});
    if (h * w != d) {
        throw GridMismatch("total_variation: grid " + std::to_string(h) + "x" +
                           std::to_string(w) + " does not cover " + std::to_string(d) +
                           " features");
    }
    std::vector<int> from, to;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c + 1 < w; ++c) {
            from.push_back(r * w + c);
            to.push_back(r * w + c + 1);
        }
    for (int r = 0; r + 1 < h; ++r)
        for (int c = 0; c < w; ++c) {
            from.push_back(r * w + c);
            to.push_back((r + 1) * w + c);
        }
    if (from.empty()) return Tensor::scalar(0.0); // 1x1 grid has no neighbors

    Tensor diff = sub(gather_cols(samples, to), gather_cols(samples, from));
    Tensor per = scale(reduce_sum(mul(diff, diff), kAxis1), 1.0 / static_cast<double>(d));
    return reduce_mean(per);
}

Tensor l2_reg(const Tensor& samples) {
    Tensor per = sqrt(reduce_sum(mul(samples, samples), kAxis1));
    return reduce_mean(per);
}

Tensor representation_loss(const BnObservation& obs, const Network& teacher,
                           const Tensor& samples, const std::optional<GridShape>& grid,
                           double lambda) {
    Tensor total = bns_loss(obs, teacher);
    if (lambda != 0.0) total = add(total, scale(total_variation(samples, grid), lambda));
    if (lambda != 1.0) total = add(total, scale(l2_reg(samples), 1.0 - lambda));
    return total;
}

Tensor generator_loss(const LossWeights& weights, const GeneratorLossParts& parts) {
    std::optional<Tensor> total;
    auto accumulate = [&](const std::optional<Tensor>& term, double coef, const char* name) {
        if (coef == 0.0) return;
        if (!term.has_value()) {
            throw InvalidSpec(std::string("generator_loss: nonzero coefficient but no ") +
                              name + " component");
        }
        Tensor scaled = scale(*term, coef);
        total = total.has_value() ? add(*total, scaled) : scaled;
    };
    accumulate(parts.cls, weights.alpha, "cls");
    accumulate(parts.adv, weights.beta, "adv");
    accumulate(parts.rep, weights.gamma, "rep");
    return total.value_or(Tensor::scalar(0.0));
}

Tensor kd_loss_l1(const Tensor& teacher_logits, const Tensor& student_logits,
                  const SelectionMask& mask) {
    if (teacher_logits.shape != student_logits.shape) {
        throw ShapeMismatch("kd_loss_l1: logits shapes differ");
    }
    Tensor per = reduce_sum(abs(sub(teacher_logits, student_logits)), kAxis1);
    return masked_mean(per, mask);
}

} // namespace tadfkd
