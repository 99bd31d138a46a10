#pragma once

// One-phase data-free distillation: a frozen teacher, a student trained
// to match it on generated samples, and a generator trained against
// both. Per iteration the generator takes g_steps Adam updates, then the
// student takes s_steps SGD updates, each on fresh noise and a fresh
// selection mask. Real data is touched only through EvalView.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tadfkd/data.hpp"
#include "tadfkd/losses.hpp"
#include "tadfkd/network.hpp"
#include "tadfkd/optim.hpp"
#include "tadfkd/selection.hpp"

namespace tadfkd {

enum class EmptySelectionPolicy : std::uint8_t { skip_step };

struct TrainConfig {
    LossWeights weights;               // alpha 0, beta 1, gamma 10, lambda 0.5
    GmmConfig gmm;                     // tau 0.5
    bool selection_enabled = true;
    EmptySelectionPolicy empty_selection_policy = EmptySelectionPolicy::skip_step;

    int d_z = 64;
    int batch = 128;
    int epochs = 50;
    int iterations_per_epoch = 10;
    int g_steps = 1;
    int s_steps = 5;

    AdamConfig generator_adam;         // lr 0.001
    SgdConfig student_sgd;             // lr 0.01, momentum 0.9, wd 5e-4, cosine decay

    std::vector<int> student_hidden = {64, 32};
    std::vector<int> generator_hidden = {128, 128};

    std::uint64_t seed = 1;
};

// Throws InvalidSpec on nonpositive sizes/rates. epochs = 0 is allowed
// and yields an evaluation-only record.
void validate_config(const TrainConfig& cfg);

// Canonical JSON of every field above; equal configs fingerprint equally.
std::string config_fingerprint(const TrainConfig& cfg);

struct IterationRecord {
    double loss_adv;                   // NaN when the term was not computed
    double loss_rep;
    double loss_cls;
    double loss_kd;
    std::vector<double> selection_rates; // one per generated batch
    int empty_events = 0;

    double mean_selection_rate() const;
};

struct EpochRecord {
    int epoch = 0;
    double student_accuracy = 0.0;
    double mean_selection_rate = 0.0;
    double lr = 0.0;                   // student lr used during this epoch
};

struct RunRecord {
    double initial_accuracy = 0.0;     // untrained student, before epoch 0
    std::vector<std::vector<IterationRecord>> iterations; // [epoch][iter]
    std::vector<EpochRecord> epochs;
    std::string fingerprint;
    std::uint64_t seed = 0;
    double final_feature_spread = 0.0; // diversity diagnostic of the
    double final_class_entropy = 0.0;  // final generator's samples

    std::vector<double> epoch_accuracies() const;
};

// Inspection hook for every completed generator step.
struct GeneratorStepProbe {
    const Tensor& samples;
    const Tensor& teacher_logits;
    const Tensor& student_logits;
    const BnObservation& observation;
    const SelectionMask& mask;
    double loss_total;
    double loss_cls;                   // NaN when not computed
    double loss_adv;
    double loss_rep;
};
using GeneratorStepProbeFn = std::function<void(const GeneratorStepProbe&)>;

IterationRecord dfkd_iteration(const Network& teacher, Network& student,
                               Network& generator, AdamState& generator_state,
                               SgdState& student_state, const TrainConfig& cfg,
                               const std::optional<GridShape>& grid, Rng& noise_rng,
                               long epoch, const GeneratorStepProbeFn& probe = {});

struct DistillResult {
    RunRecord record;
    Network student;
    Network generator;
};

DistillResult run_distillation(const Network& teacher, const TrainConfig& cfg,
                               const EvalView& eval_data,
                               const GeneratorStepProbeFn& probe = {});

// ---- teacher pretraining -------------------------------------------------

struct TeacherTrainConfig {
    int epochs = 40;
    int batch = 32;
    SgdConfig sgd{0.05, 0.9, 5e-4};
    std::vector<int> hidden = {128, 128, 64};
    std::vector<int> snapshot_epochs;  // empty -> snapshot at the final epoch
    double accuracy_floor = 0.5;
    std::uint64_t seed = 0;
};

struct TeacherSnapshot {
    Network net;
    double test_accuracy = 0.0;
    int epoch = 0;
    bool below_floor = false;
};

// Supervised softmax cross-entropy training with snapshots; snapshots
// under the accuracy floor are flagged, never discarded.
std::vector<TeacherSnapshot> train_teacher(const Dataset& dataset,
                                           const TeacherTrainConfig& cfg);

// ---- telemetry -----------------------------------------------------------

// CSV: epoch,iter,loss_adv,loss_rep,loss_cls,loss_kd,selection_rate,empty_events
void write_telemetry_csv(const RunRecord& run, const std::filesystem::path& path);
// JSON array of {epoch, student_accuracy, mean_selection_rate, lr}.
void write_epoch_summaries(const RunRecord& run, const std::filesystem::path& path);

} // namespace tadfkd
