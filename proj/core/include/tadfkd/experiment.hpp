#pragma once

// Experiment driver behind the CLI: named method arms, a strict JSON
// config schema, the (teacher x arm x seed) ablation matrix with
// optional fan-out across threads, and run-directory scanning so
// reports can be rebuilt without retraining.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tadfkd/data.hpp"
#include "tadfkd/distill.hpp"
#include "tadfkd/metrics.hpp"

namespace tadfkd {

// Method arms: fixed loss-coefficient / selection presets.
struct ArmPreset {
    std::string name;
    LossWeights weights;
    bool selection_enabled = false;
};

const std::vector<ArmPreset>& builtin_arms();
const ArmPreset* find_arm(std::string_view name);
std::string arm_names_joined(); // "ta-dfkd, no-cls, ..."

struct DatasetSpec {
    std::string type = "grid";      // "grid" | "blobs"
    int classes = 4;
    int per_class = 200;
    int d = 8;                      // blobs only
    double spread = 0.15;           // blobs only
    GridShape grid{8, 8};           // grid only
    double noise = 0.1;             // grid only
    std::uint64_t seed = 11;
};

Dataset build_dataset(const DatasetSpec& spec);

struct ExperimentSpec {
    DatasetSpec dataset;
    TeacherTrainConfig teacher;
    int teacher_count = 3;          // snapshots to take when none are listed
    std::vector<std::string> arms = {"ta-dfkd", "no-cls", "baseline"};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    TrainConfig train;
    int k_last = 10;
    std::filesystem::path output_dir = "runs";
};

// Strict parse: schema_version must match, unknown keys are rejected.
inline constexpr int kExperimentSchemaVersion = 1;
ExperimentSpec experiment_spec_from_json(const std::string& text);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

// --override key=value escape hatch on top of an arm preset.
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

struct NamedTeacher {
    std::string name;        // teacher_1, teacher_2, ...
    Network net;
    double accuracy = 0.0;
    int epoch = 0;
    bool below_floor = false;
};

// Trains the teacher once and snapshots it `count` times (or at the
// spec's explicit snapshot epochs). Writes checkpoints plus a manifest
// when out_dir is set.
std::vector<NamedTeacher> prepare_teachers(const ExperimentSpec& spec,
                                           const Dataset& dataset,
                                           const std::optional<std::filesystem::path>& out_dir);

struct RunKey {
    std::string teacher;
    std::string arm;
    std::uint64_t seed = 0;
};

struct RunOutcome {
    RunKey key;
    bool ok = false;
    std::string error;
    RunSummary summary;
    std::filesystem::path dir;
};

// Base config with the arm's loss coefficients, selection switch and
// the run seed applied.
TrainConfig arm_config(const TrainConfig& base, const ArmPreset& arm, std::uint64_t seed);

// One distillation run with a fully resolved config, emitted as a run
// directory holding config.json, telemetry.csv, epochs.json and run.json.
RunOutcome execute_run(const NamedTeacher& teacher, const std::string& arm_name,
                       const TrainConfig& cfg, const Dataset& dataset, int k_last,
                       const std::filesystem::path& out_root);

struct AblationResult {
    std::vector<NamedTeacher> teachers;
    std::vector<RunOutcome> outcomes;
    RobustnessReport report;
    bool every_arm_succeeded = false; // >= 1 successful run per arm
};

// Full (teacher x arm x seed) matrix; `jobs` > 1 fans independent runs
// out across threads. Writes report.txt, report.json and per-arm
// accuracy SVGs under out_root.
AblationResult run_ablation(const ExperimentSpec& spec, int jobs,
                            const std::filesystem::path& out_root);

// Rebuild report inputs from stored run directories (no retraining).
std::vector<RunSummary> scan_run_dirs(const std::filesystem::path& root);
struct StoredRun {
    RunSummary summary;
    std::vector<double> epoch_accuracies;
    int k = 0; // the acc_last window the run was summarized with
};
std::vector<StoredRun> scan_run_dirs_full(const std::filesystem::path& root);

// report.txt, report.json and one <arm>_accuracy.svg per arm.
void write_report_files(const RobustnessReport& report, const std::vector<StoredRun>& stored,
                        std::span<const std::string> arms,
                        const std::filesystem::path& out_root);

// Output root resolution: explicit flag > TADFKD_OUT > spec default.
std::filesystem::path resolve_output_root(const std::optional<std::filesystem::path>& flag,
                                          const std::filesystem::path& spec_default);

} // namespace tadfkd
