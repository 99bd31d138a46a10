// tadfkd CLI: teacher pretraining, single distillation runs, the full
// ablation matrix, and report regeneration from stored telemetry.
//
// Exit codes: 0 success, 2 usage, 3 IO failure, 4 experiment failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tadfkd/checkpoint.hpp"
#include "tadfkd/experiment.hpp"
#include "tadfkd/format.hpp"
#include "tadfkd/metrics.hpp"
#include "tadfkd/report_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitExperiment = 4;

using tadfkd::ArmPreset;
using tadfkd::ExperimentSpec;

struct CommonOpts {
    std::string config_path;
    std::optional<std::filesystem::path> out;
};

std::filesystem::path out_root(const CommonOpts& opts, const ExperimentSpec& spec) {
    return tadfkd::resolve_output_root(opts.out, spec.output_dir);
}

int classify(const std::exception& e) {
    if (dynamic_cast<const tadfkd::IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const tadfkd::InvalidSpec*>(&e)) return kExitUsage;
    return kExitExperiment;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        const auto* as_error = dynamic_cast<const tadfkd::Error*>(&e);
        return as_error != nullptr ? classify(e) : kExitExperiment;
    }
}

int cmd_train_teacher(const CommonOpts& opts, std::optional<int> snapshots,
                      std::optional<std::uint64_t> seed) {
    return guarded([&] {
        ExperimentSpec spec = tadfkd::load_experiment_spec(opts.config_path);
        if (snapshots.has_value()) {
            spec.teacher_count = *snapshots;
            spec.teacher.snapshot_epochs.clear();
        }
        if (seed.has_value()) spec.teacher.seed = *seed;

        const tadfkd::Dataset dataset = tadfkd::build_dataset(spec.dataset);
        const std::filesystem::path root = out_root(opts, spec);
        const auto teachers = tadfkd::prepare_teachers(spec, dataset, root);

        std::cout << "name       epoch  accuracy  flag\n";
        for (const auto& t : teachers) {
            std::cout << t.name << "  " << t.epoch << "  "
                      << tadfkd::fmt_fixed(t.accuracy, 4)
                      << (t.below_floor ? "  below-floor" : "") << '\n';
        }
        std::cout << "checkpoints written to " << (root / "teachers").string() << '\n';
        return kExitOk;
    });
}

int cmd_distill(const CommonOpts& opts, const std::string& teacher_path,
                const std::string& arm_name, std::uint64_t seed,
                const std::vector<std::string>& overrides) {
    return guarded([&] {
        const ExperimentSpec spec = tadfkd::load_experiment_spec(opts.config_path);
        const ArmPreset* arm = tadfkd::find_arm(arm_name);
        if (arm == nullptr) {
            throw tadfkd::InvalidSpec("unknown arm '" + arm_name + "'; valid arms: " +
                                      tadfkd::arm_names_joined());
        }

        tadfkd::NamedTeacher teacher;
        teacher.net = tadfkd::load_network(teacher_path);
        teacher.name = std::filesystem::path(teacher_path).stem().string();

        const tadfkd::Dataset dataset = tadfkd::build_dataset(spec.dataset);
        teacher.accuracy =
            tadfkd::accuracy(teacher.net, tadfkd::EvalView(dataset));

        tadfkd::TrainConfig cfg = tadfkd::arm_config(spec.train, *arm, seed);
        for (const std::string& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw tadfkd::InvalidSpec("override '" + kv + "' is not key=value");
            }
            tadfkd::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }

        const std::filesystem::path root = out_root(opts, spec);
        std::filesystem::create_directories(root);
        const tadfkd::RunOutcome outcome =
            tadfkd::execute_run(teacher, arm_name, cfg, dataset, spec.k_last, root);
        if (!outcome.ok) {
            throw tadfkd::Error("run failed: " + outcome.error);
        }
        std::cout << "run directory: " << outcome.dir.string() << '\n';
        std::cout << "acc_max " << tadfkd::fmt_fixed(outcome.summary.acc_max, 4)
                  << "  acc_last[" << spec.k_last << "] "
                  << tadfkd::fmt_fixed(outcome.summary.acc_last, 4) << '\n';
        return kExitOk;
    });
}

int cmd_ablate(const CommonOpts& opts, int jobs) {
    return guarded([&] {
        const ExperimentSpec spec = tadfkd::load_experiment_spec(opts.config_path);
        const std::filesystem::path root = out_root(opts, spec);
        const tadfkd::AblationResult result = tadfkd::run_ablation(spec, jobs, root);

        int failures = 0;
        for (const tadfkd::RunOutcome& o : result.outcomes) {
            if (!o.ok) {
                ++failures;
                std::cerr << "run " << o.key.arm << "/" << o.key.teacher << "/s"
                          << o.key.seed << " failed: " << o.error << '\n';
            }
        }
        std::cout << result.outcomes.size() - failures << "/" << result.outcomes.size()
                  << " runs succeeded; report under " << root.string() << '\n';
        std::cout << tadfkd::render_report_text(result.report);
        return result.every_arm_succeeded ? kExitOk : kExitExperiment;
    });
}

int cmd_report(const std::optional<std::string>& runs_dir, const CommonOpts& opts,
               const std::string& format) {
    return guarded([&] {
        std::filesystem::path root;
        if (runs_dir.has_value()) {
            root = *runs_dir;
        } else {
            if (opts.config_path.empty()) {
                throw tadfkd::InvalidSpec("report: pass --runs or --config");
            }
            root = out_root(opts, tadfkd::load_experiment_spec(opts.config_path));
        }

        const std::vector<tadfkd::StoredRun> stored = tadfkd::scan_run_dirs_full(root);
        std::vector<std::string> teachers, methods;
        for (const tadfkd::StoredRun& run : stored) {
            if (std::find(teachers.begin(), teachers.end(), run.summary.teacher) ==
                teachers.end()) {
                teachers.push_back(run.summary.teacher);
            }
            if (std::find(methods.begin(), methods.end(), run.summary.method) ==
                methods.end()) {
                methods.push_back(run.summary.method);
            }
        }
        std::vector<tadfkd::RunSummary> summaries;
        for (const tadfkd::StoredRun& run : stored) summaries.push_back(run.summary);

        // All runs of one experiment share the acc_last window.
        const int k = stored.front().k;

        const tadfkd::RobustnessReport report =
            tadfkd::robustness_report(summaries, teachers, methods, k);
        tadfkd::write_report_files(report, stored, methods, root);

        if (format == "json") {
            std::cout << tadfkd::render_report_json(report);
        } else {
            std::cout << tadfkd::render_report_text(report);
        }
        return kExitOk;
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"teacher-agnostic data-free knowledge distillation toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string out_flag;

    // train-teacher
    auto* train = app.add_subcommand("train-teacher", "train and snapshot teacher models");
    std::optional<int> snapshots;
    std::optional<std::uint64_t> teacher_seed;
    int snapshots_raw = -1;
    std::uint64_t teacher_seed_raw = 0;
    train->add_option("--config", opts.config_path, "experiment config JSON")->required();
    auto* snap_opt = train->add_option("--snapshots", snapshots_raw,
                                       "number of evenly spaced snapshots");
    auto* seed_opt = train->add_option("--seed", teacher_seed_raw, "teacher training seed");
    train->add_option("--out", out_flag, "output root (overrides TADFKD_OUT and config)");

    // distill
    auto* distill = app.add_subcommand("distill", "run one distillation");
    std::string teacher_path, arm_name;
    std::uint64_t run_seed = 1;
    std::vector<std::string> overrides;
    distill->add_option("--config", opts.config_path, "experiment config JSON")->required();
    distill->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
    distill->add_option("--arm", arm_name, "method arm: " + tadfkd::arm_names_joined())
        ->required();
    distill->add_option("--seed", run_seed, "run seed");
    distill->add_option("--override", overrides, "config override key=value");
    distill->add_option("--out", out_flag, "output root");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run the (teacher x arm x seed) matrix");
    int jobs = 1;
    ablate->add_option("--config", opts.config_path, "experiment config JSON")->required();
    ablate->add_option("--jobs", jobs, "concurrent runs");
    ablate->add_option("--out", out_flag, "output root");

    // report
    auto* report = app.add_subcommand("report", "rebuild tables and plots from run dirs");
    std::optional<std::string> runs_dir;
    std::string runs_dir_raw, format = "text";
    auto* runs_opt = report->add_option("--runs", runs_dir_raw, "directory of run outputs");
    report->add_option("--config", opts.config_path, "experiment config JSON");
    report->add_option("--format", format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));
    report->add_option("--out", out_flag, "output root");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (!out_flag.empty()) opts.out = std::filesystem::path(out_flag);
    if (snap_opt->count() > 0) snapshots = snapshots_raw;
    if (seed_opt->count() > 0) teacher_seed = teacher_seed_raw;
    if (runs_opt->count() > 0) runs_dir = runs_dir_raw;

    if (train->parsed()) return cmd_train_teacher(opts, snapshots, teacher_seed);
    if (distill->parsed()) return cmd_distill(opts, teacher_path, arm_name, run_seed, overrides);
    if (ablate->parsed()) return cmd_ablate(opts, jobs);
    if (report->parsed()) return cmd_report(runs_dir, opts, format);
    return kExitUsage;
}
