#pragma once

// Feedforward classifier/generator networks: dense + batch-norm +
// nonlinearity stacks. Batch norm keeps running statistics that only
// mutate in train mode; observe mode reports batch statistics (on the
// tape, so losses over them are differentiable) while normalizing with
// running statistics exactly like eval mode.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tadfkd/autodiff.hpp"
#include "tadfkd/rng.hpp"

namespace tadfkd {

enum class Activation : std::uint8_t { relu, tanh };

struct DenseLayer {
    Tensor weight; // [out x in]
    Tensor bias;   // [out]
};

struct BatchNormLayer {
    Tensor gamma;        // [d]
    Tensor beta;         // [d]
    Tensor running_mean; // [d]
    Tensor running_var;  // [d], elementwise >= 0
    double momentum = 0.1;
    double eps = 1e-5;
};

using Layer = std::variant<DenseLayer, BatchNormLayer, Activation>;

enum class NetworkKind : std::uint8_t { classifier, generator };
enum class ForwardMode : std::uint8_t { train, eval, observe };

// Batch statistics seen at each batch-norm layer input, in network order.
struct BnObservation {
    std::vector<Tensor> means; // [d] each
    std::vector<Tensor> vars;  // [d] each, biased (divide by batch)
};

struct Network {
    NetworkKind kind = NetworkKind::classifier;
    ForwardMode mode = ForwardMode::train; // generator forwards use this
    std::vector<Layer> layers;

    int input_width() const;
    int output_width() const;
    std::size_t batch_norm_count() const;

    // Dense + BN + relu stack with batch norm after every hidden dense
    // layer; widths = {in, hidden..., out}. Glorot-uniform weights.
    static Network classifier(std::span<const int> widths, Rng& rng);
    // Dense + BN + relu hidden stack, final dense bounded by tanh.
    static Network generator(int d_z, std::span<const int> hidden, int d_x, Rng& rng);
};

// Trainable parameters (dense weight/bias, BN gamma/beta) in declaration
// order. Running statistics are not trainable and are not visited.
void for_each_param(Network& net, const std::function<void(Tensor&)>& fn);
void for_each_param(const Network& net, const std::function<void(const Tensor&)>& fn);
std::vector<Tensor*> collect_params(Network& net);

// A network whose parameters have been lifted onto a graph as leaves, so
// backward() can produce gradients for them. `leaves` aligns with
// collect_params order.
struct StagedNetwork {
    Network* net = nullptr;
    std::vector<Tensor> leaves;
};

StagedNetwork stage(Network& net, Graph& g);
// Stage with externally supplied leaf tensors (finite-difference harness).
StagedNetwork stage_with(Network& net, std::span<const Tensor> leaves);

// Forward pass with the network's stored parameters as constants.
// Gradients, if x is on a graph, flow only through x — this is how the
// frozen teacher is used. train mode mutates running statistics, so it
// needs the non-const overload below.
Tensor classifier_forward(const Network& net, const Tensor& x, ForwardMode mode,
                          BnObservation* obs = nullptr);
Tensor classifier_forward(Network& net, const Tensor& x, ForwardMode mode,
                          BnObservation* obs = nullptr);

// Forward through staged parameters; gradients flow to the leaves (and
// through x when it is on the same graph). train mode updates running
// statistics of the underlying network.
Tensor forward_staged(const StagedNetwork& sn, const Tensor& x, ForwardMode mode,
                      BnObservation* obs = nullptr);

// Generator forward using gen.mode for its batch-norm behavior.
Tensor generator_forward(Network& gen, const Tensor& z);
Tensor generator_forward_staged(const StagedNetwork& sn, const Tensor& z);

// Forward up to (not including) the final dense layer; eval-mode BN.
Tensor penultimate_features(const Network& net, const Tensor& x);

// CRC32 over the canonical serialization; identical before/after a
// distillation run is the teacher-freezing contract.
std::uint32_t network_checksum(const Network& net);

// Save/restore running statistics around side-effecting evaluations.
class RunningStatsGuard {
public:
    explicit RunningStatsGuard(Network& net);
    ~RunningStatsGuard();
    RunningStatsGuard(const RunningStatsGuard&) = delete;
    RunningStatsGuard& operator=(const RunningStatsGuard&) = delete;

private:
    Network* net_;
    std::vector<std::pair<Tensor, Tensor>> saved_;
};

} // namespace tadfkd
