#include "tadfkd/network.hpp"

#include <cmath>

namespace tadfkd {

namespace {

const int kAxis0[] = {0};

Tensor glorot_dense_weight(int out, int in, Rng& rng) {
    Tensor w = Tensor::zeros({out, in});
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : w.values) v = rng.uniform(-bound, bound);
    return w;
}

BatchNormLayer make_bn(int d) {
    BatchNormLayer bn;
    bn.gamma = Tensor::full({d}, 1.0);
    bn.beta = Tensor::zeros({d});
    bn.running_mean = Tensor::zeros({d});
    bn.running_var = Tensor::full({d}, 1.0);
    return bn;
}

// Eval/observe-mode normalization against running statistics. The
// running tensors enter as constants, so a frozen teacher contributes no
// trainable path even when x carries a tape.
Tensor bn_eval(const BatchNormLayer& bn, const Tensor& h, const Tensor& gamma,
               const Tensor& beta) {
    const int d = bn.running_mean.shape[0];
    Tensor denom = Tensor::zeros({d});
    for (int j = 0; j < d; ++j) {
        denom.values[static_cast<std::size_t>(j)] =
            std::sqrt(bn.running_var.values[static_cast<std::size_t>(j)] + bn.eps);
    }
    Tensor y = div_row(sub_row(h, bn.running_mean), denom);
    return add_row(mul_row(y, gamma), beta);
}

struct BnBatchStats {
    Tensor mean; // [d], on tape when h is
    Tensor var;  // [d], biased
};

BnBatchStats bn_batch_stats(const Tensor& h) {
    BnBatchStats s;
    s.mean = reduce_mean(h, kAxis0);
    Tensor centered = sub_row(h, s.mean);
    s.var = reduce_mean(mul(centered, centered), kAxis0);
    return s;
}

Tensor forward_impl(const Network& net, Network* mutable_net,
                    std::span<const Tensor> leaves, const Tensor& x,
                    ForwardMode mode, BnObservation* obs) {
    if (x.rank() != 2 || x.shape[1] != net.input_width()) {
        throw ShapeMismatch("forward: input width " +
                            std::to_string(x.rank() == 2 ? x.shape[1] : -1) +
                            " does not match network input " +
                            std::to_string(net.input_width()));
    }
    const int batch = x.shape[0];
    if ((mode == ForwardMode::train || mode == ForwardMode::observe) && batch < 2) {
        throw BatchTooSmall("forward: batch of " + std::to_string(batch) +
                            " is too small for batch statistics");
    }
    if (mode == ForwardMode::train && mutable_net == nullptr) {
        throw InvalidSpec("forward: train mode needs a mutable network");
    }

    Tensor h = x;
    std::size_t param_cursor = 0;
    std::size_t bn_index = 0;
    auto next_param = [&](const Tensor& own) -> const Tensor& {
        if (leaves.empty()) return own;
        return leaves[param_cursor++];
    };

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& layer = net.layers[li];
        if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            const Tensor& w = next_param(dense->weight);
            const Tensor& b = next_param(dense->bias);
            h = add_row(matmul(h, transpose(w)), b);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            const Tensor& gamma = next_param(bn->gamma);
            const Tensor& beta = next_param(bn->beta);
            if (mode == ForwardMode::train) {
                BnBatchStats s = bn_batch_stats(h);
                Tensor denom = sqrt(affine(s.var, 1.0, bn->eps));
                Tensor y = div_row(sub_row(h, s.mean), denom);
                h = add_row(mul_row(y, gamma), beta);
                auto& mut = std::get<BatchNormLayer>(mutable_net->layers[li]);
                const double m = bn->momentum;
                for (std::size_t j = 0; j < mut.running_mean.values.size(); ++j) {
                    mut.running_mean.values[j] =
                        (1.0 - m) * mut.running_mean.values[j] + m * s.mean.values[j];
                    mut.running_var.values[j] =
                        (1.0 - m) * mut.running_var.values[j] + m * s.var.values[j];
                }
            } else {
                if (mode == ForwardMode::observe && obs != nullptr) {
                    BnBatchStats s = bn_batch_stats(h);
                    obs->means.push_back(s.mean);
                    obs->vars.push_back(s.var);
                }
                h = bn_eval(*bn, h, gamma, beta);
            }
            ++bn_index;
        } else {
            switch (std::get<Activation>(layer)) {
                case Activation::relu: h = relu(h); break;
                case Activation::tanh: h = tanh(h); break;
            }
        }
    }
    (void)bn_index;
    return h;
}

} // namespace

int Network::input_width() const {
    for (const Layer& l : layers) {
        if (const auto* d = std::get_if<DenseLayer>(&l)) return d->weight.shape[1];
    }
    throw InvalidSpec("network has no dense layer");
}

int Network::output_width() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        if (const auto* d = std::get_if<DenseLayer>(&*it)) return d->weight.shape[0];
    }
    throw InvalidSpec("network has no dense layer");
}

std::size_t Network::batch_norm_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += std::holds_alternative<BatchNormLayer>(l) ? 1 : 0;
    return n;
}

Network Network::classifier(std::span<const int> widths, Rng& rng) {
    if (widths.size() < 2) throw InvalidSpec("classifier: need at least {in, out} widths");
    Network net;
    net.kind = NetworkKind::classifier;
    net.mode = ForwardMode::eval;
    const std::size_t n_dense = widths.size() - 1;
    for (std::size_t i = 0; i < n_dense; ++i) {
        DenseLayer d;
        d.weight = glorot_dense_weight(widths[i + 1], widths[i], rng);
        d.bias = Tensor::zeros({widths[i + 1]});
        net.layers.emplace_back(std::move(d));
        if (i + 1 < n_dense) {
            net.layers.emplace_back(make_bn(widths[i + 1]));
            net.layers.emplace_back(Activation::relu);
        }
    }
    return net;
}

Network Network::generator(int d_z, std::span<const int> hidden, int d_x, Rng& rng) {
    if (d_z < 1 || d_x < 1) throw InvalidSpec("generator: widths must be positive");
    Network net;
    net.kind = NetworkKind::generator;
    net.mode = ForwardMode::train;
    int prev = d_z;
    for (int h : hidden) {
        DenseLayer d;
        d.weight = glorot_dense_weight(h, prev, rng);
        d.bias = Tensor::zeros({h});
        net.layers.emplace_back(std::move(d));
        net.layers.emplace_back(make_bn(h));
        net.layers.emplace_back(Activation::relu);
        prev = h;
    }
    DenseLayer out;
    out.weight = glorot_dense_weight(d_x, prev, rng);
    out.bias = Tensor::zeros({d_x});
    net.layers.emplace_back(std::move(out));
    net.layers.emplace_back(Activation::tanh);
    return net;
}

void for_each_param(Network& net, const std::function<void(Tensor&)>& fn) {
    for (Layer& l : net.layers) {
        if (auto* d = std::get_if<DenseLayer>(&l)) {
            fn(d->weight);
            fn(d->bias);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
            fn(bn->gamma);
            fn(bn->beta);
        }
    }
}

void for_each_param(const Network& net, const std::function<void(const Tensor&)>& fn) {
    for (const Layer& l : net.layers) {
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            fn(d->weight);
            fn(d->bias);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
            fn(bn->gamma);
            fn(bn->beta);
        }
    }
}

std::vector<Tensor*> collect_params(Network& net) {
    std::vector<Tensor*> out;
    for_each_param(net, [&](Tensor& t) { out.push_back(&t); });
    return out;
}

StagedNetwork stage(Network& net, Graph& g) {
    StagedNetwork sn;
    sn.net = &net;
    for_each_param(net, [&](Tensor& t) { sn.leaves.push_back(g.leaf(t)); });
    return sn;
}

StagedNetwork stage_with(Network& net, std::span<const Tensor> leaves) {
    StagedNetwork sn;
    sn.net = &net;
    sn.leaves.assign(leaves.begin(), leaves.end());
    std::size_t n = 0;
    for_each_param(net, [&](Tensor&) { ++n; });
    if (sn.leaves.size() != n) {
        throw ShapeMismatch("stage_with: expected " + std::to_string(n) + " leaves, got " +
                            std::to_string(sn.leaves.size()));
    }
    return sn;
}

Tensor classifier_forward(const Network& net, const Tensor& x, ForwardMode mode,
                          BnObservation* obs) {
    if (mode == ForwardMode::train) {
        throw InvalidSpec("classifier_forward: train mode mutates running stats; "
                          "pass a mutable network");
    }
    return forward_impl(net, nullptr, {}, x, mode, obs);
}

Tensor classifier_forward(Network& net, const Tensor& x, ForwardMode mode,
                          BnObservation* obs) {
    return forward_impl(net, &net, {}, x, mode, obs);
}

Tensor forward_staged(const StagedNetwork& sn, const Tensor& x, ForwardMode mode,
                      BnObservation* obs) {
    return forward_impl(*sn.net, sn.net, sn.leaves, x, mode, obs);
}

Tensor generator_forward(Network& gen, const Tensor& z) {
    return forward_impl(gen, &gen, {}, z, gen.mode, nullptr);
}

Tensor generator_forward_staged(const StagedNetwork& sn, const Tensor& z) {
    return forward_impl(*sn.net, sn.net, sn.leaves, z, sn.net->mode, nullptr);
}

Tensor penultimate_features(const Network& net, const Tensor& x) {
    std::size_t last_dense = net.layers.size();
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        if (std::holds_alternative<DenseLayer>(net.layers[i])) {
            last_dense = i;
            break;
        }
    }
    Network head;
    head.kind = net.kind;
    head.mode = ForwardMode::eval;
    head.layers.assign(net.layers.begin(),
                       net.layers.begin() + static_cast<std::ptrdiff_t>(last_dense));
    if (head.layers.empty()) return x;
    return forward_impl(head, nullptr, {}, x, ForwardMode::eval, nullptr);
}

RunningStatsGuard::RunningStatsGuard(Network& net) : net_(&net) {
    for (Layer& l : net.layers) {
        if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
            saved_.emplace_back(bn->running_mean, bn->running_var);
        }
    }
}

RunningStatsGuard::~RunningStatsGuard() {
    std::size_t i = 0;
    for (Layer& l : net_->layers) {
        if (auto* bn = std::get_if<BatchNormLayer>(&l)) {
            bn->running_mean = saved_[i].first;
            bn->running_var = saved_[i].second;
            ++i;
        }
    }
}

} // namespace tadfkd
