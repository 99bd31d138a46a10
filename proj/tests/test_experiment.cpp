#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "tadfkd/experiment.hpp"
#include "tadfkd/report_io.hpp"

using namespace tadfkd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

// Smallest spec that still runs the full pipeline.
const char* kTinySpec = R"({
  "schema_version": 1,
  "dataset": {"type": "grid", "classes": 3, "per_class": 40, "grid": [2, 3], "noise": 0.1, "seed": 11},
  "teacher": {"epochs": 8, "batch": 16, "hidden": [12], "seed": 5, "count": 1},
  "arms": ["ta-dfkd", "no-cls"],
  "seeds": [1],
  "train": {"d_z": 6, "batch": 16, "epochs": 3, "iterations_per_epoch": 2,
            "s_steps": 2, "student_hidden": [8], "generator_hidden": [10]},
  "k_last": 2,
  "output_dir": "runs"
})";

} // namespace

TEST_SUITE_BEGIN("experiment");

TEST_CASE("builtin arms encode the method comparisons") {
    const ArmPreset* ta = find_arm("ta-dfkd");
    REQUIRE(ta != nullptr);
    CHECK(ta->weights.alpha == 0.0);
    CHECK(ta->weights.beta == 1.0);
    CHECK(ta->weights.gamma == 10.0);
    CHECK(ta->selection_enabled);

    const ArmPreset* no_cls = find_arm("no-cls");
    REQUIRE(no_cls != nullptr);
    CHECK(no_cls->weights.alpha == 0.0);
    CHECK(!no_cls->selection_enabled);

    const ArmPreset* baseline = find_arm("baseline");
    REQUIRE(baseline != nullptr);
    CHECK(baseline->weights.alpha == 1.0);
    CHECK(baseline->weights.beta == 1.0);
    CHECK(baseline->weights.gamma == 10.0);
    CHECK(!baseline->selection_enabled);

    const ArmPreset* cls_only = find_arm("cls-only");
    REQUIRE(cls_only != nullptr);
    CHECK(cls_only->weights.alpha == 1.0);
    CHECK(cls_only->weights.beta == 0.0);
    CHECK(cls_only->weights.gamma == 0.0);

    const ArmPreset* adv_only = find_arm("adv-only");
    REQUIRE(adv_only != nullptr);
    CHECK(adv_only->weights.alpha == 0.0);
    CHECK(adv_only->weights.beta == 1.0);
    CHECK(adv_only->weights.gamma == 0.0);

    CHECK(find_arm("nope") == nullptr);
}

TEST_CASE("spec parsing is strict") {
    CHECK_NOTHROW(experiment_spec_from_json(kTinySpec));

    SUBCASE("unknown top-level key") {
        CHECK_THROWS_AS(experiment_spec_from_json(
                            R"({"schema_version": 1, "datasett": {}})"),
                        InvalidSpec);
    }
    SUBCASE("unknown nested key") {
        CHECK_THROWS_AS(experiment_spec_from_json(
                            R"({"schema_version": 1, "train": {"epoch": 3}})"),
                        InvalidSpec);
    }
    SUBCASE("missing schema version") {
        CHECK_THROWS_AS(experiment_spec_from_json(R"({"dataset": {}})"), InvalidSpec);
    }
    SUBCASE("unknown arm name") {
        CHECK_THROWS_AS(experiment_spec_from_json(
                            R"({"schema_version": 1, "arms": ["mystery"]})"),
                        InvalidSpec);
    }
    SUBCASE("k_last beyond epochs") {
        CHECK_THROWS_AS(experiment_spec_from_json(
                            R"({"schema_version": 1, "train": {"epochs": 3}, "k_last": 5})"),
                        InvalidSpec);
    }
    SUBCASE("defaults fill everything else") {
        const ExperimentSpec spec = experiment_spec_from_json(R"({"schema_version": 1})");
        CHECK(spec.train.weights.beta == 1.0);
        CHECK(spec.train.weights.gamma == 10.0);
        CHECK(spec.train.gmm.tau == 0.5);
        CHECK(spec.train.student_sgd.lr == 0.01);
        CHECK(spec.train.student_sgd.weight_decay == 5e-4);
        CHECK(spec.train.generator_adam.lr == 0.001);
        CHECK(spec.train.g_steps == 1);
        CHECK(spec.train.s_steps == 5);
    }
}

TEST_CASE("overrides") {
    TrainConfig cfg;
    apply_override(cfg, "alpha", "0.25");
    CHECK(cfg.weights.alpha == 0.25);
    apply_override(cfg, "selection", "false");
    CHECK(!cfg.selection_enabled);
    apply_override(cfg, "s_steps", "7");
    CHECK(cfg.s_steps == 7);
    CHECK_THROWS_AS(apply_override(cfg, "bogus", "1"), InvalidSpec);
    CHECK_THROWS_AS(apply_override(cfg, "alpha", "abc"), InvalidSpec);
}

TEST_CASE("output root resolution order") {
    const fs::path flag = "flagged";
    CHECK(resolve_output_root(flag, "default") == flag);
    setenv("TADFKD_OUT", "from_env", 1);
    CHECK(resolve_output_root(std::nullopt, "default") == fs::path("from_env"));
    unsetenv("TADFKD_OUT");
    CHECK(resolve_output_root(std::nullopt, "default") == fs::path("default"));
}

TEST_CASE("tiny ablation matrix produces complete, rebuildable, reproducible outputs") {
    const ExperimentSpec spec = experiment_spec_from_json(kTinySpec);
    const fs::path root_a = fs::temp_directory_path() / "tadfkd_ablate_a";
    const fs::path root_b = fs::temp_directory_path() / "tadfkd_ablate_b";
    fs::remove_all(root_a);
    fs::remove_all(root_b);

    const AblationResult a = run_ablation(spec, 1, root_a);
    CHECK(a.every_arm_succeeded);
    CHECK(a.outcomes.size() == 2); // 1 teacher x 2 arms x 1 seed
    for (const RunOutcome& o : a.outcomes) {
        REQUIRE(o.ok);
        CHECK(fs::exists(o.dir / "config.json"));
        CHECK(fs::exists(o.dir / "telemetry.csv"));
        CHECK(fs::exists(o.dir / "epochs.json"));
        CHECK(fs::exists(o.dir / "run.json"));
    }
    CHECK(fs::exists(root_a / "report.txt"));
    CHECK(fs::exists(root_a / "report.json"));
    CHECK(fs::exists(root_a / "ta-dfkd_accuracy.svg"));
    CHECK(fs::exists(root_a / "no-cls_accuracy.svg"));
    CHECK(fs::exists(root_a / "teachers" / "teacher_1.json"));
    CHECK(fs::exists(root_a / "teachers" / "teachers.json"));

    // rebuild from disk alone matches the in-memory aggregation
    const std::vector<RunSummary> scanned = scan_run_dirs(root_a);
    CHECK(scanned.size() == 2);
    const std::vector<std::string> report_teachers = {a.teachers[0].name};
    const std::vector<std::string> report_methods = {"ta-dfkd", "no-cls"};
    const RobustnessReport rebuilt =
        robustness_report(scanned, report_teachers, report_methods, spec.k_last);
    CHECK(render_report_json(rebuilt) == render_report_json(a.report));

    // identical spec, fresh output root: byte-identical report and telemetry
    const AblationResult b = run_ablation(spec, 2, root_b);
    CHECK(slurp(root_a / "report.json") == slurp(root_b / "report.json"));
    CHECK(slurp(root_a / "report.txt") == slurp(root_b / "report.txt"));
    for (const RunOutcome& o : a.outcomes) {
        const fs::path rel = o.dir.filename();
        CHECK(slurp(o.dir / "telemetry.csv") == slurp(root_b / rel / "telemetry.csv"));
    }

    fs::remove_all(root_a);
    fs::remove_all(root_b);
}

TEST_SUITE_END();
