#include "tadfkd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

#include "tadfkd/checkpoint.hpp"
#include "tadfkd/report_io.hpp"

namespace tadfkd {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end()) {
            throw InvalidSpec("config: unknown key '" + key + "' in " + where);
        }
    }
}

json read_json_file(const std::filesystem::path& path, const char* who) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string(who) + ": cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError(std::string(who) + ": " + path.string() + ": " + e.what());
    }
    return doc;
}

void write_json_file(const json& doc, const std::filesystem::path& path, const char* who) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(std::string(who) + ": cannot open " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError(std::string(who) + ": write failed for " + path.string());
}

} // namespace

const std::vector<ArmPreset>& builtin_arms() {
    static const std::vector<ArmPreset> arms = {
        {"ta-dfkd", LossWeights{0.0, 1.0, 10.0, 0.5}, true},
        {"no-cls", LossWeights{0.0, 1.0, 10.0, 0.5}, false},
        {"baseline", LossWeights{1.0, 1.0, 10.0, 0.5}, false},
        {"cls-only", LossWeights{1.0, 0.0, 0.0, 0.5}, false},
        {"adv-only", LossWeights{0.0, 1.0, 0.0, 0.5}, false},
    };
    return arms;
}

const ArmPreset* find_arm(std::string_view name) {
    for (const ArmPreset& arm : builtin_arms()) {
        if (arm.name == name) return &arm;
    }
    return nullptr;
}

std::string arm_names_joined() {
    std::string out;
    for (const ArmPreset& arm : builtin_arms()) {
        if (!out.empty()) out += ", ";
        out += arm.name;
    }
    return out;
}

Dataset build_dataset(const DatasetSpec& spec) {
    if (spec.type == "grid") {
        return make_grid_patterns(spec.classes, spec.per_class, spec.grid, spec.noise,
                                  spec.seed);
    }
    if (spec.type == "blobs") {
        return make_blobs(spec.classes, spec.per_class, spec.d, spec.spread, spec.seed);
    }
    throw InvalidSpec("dataset: unknown type '" + spec.type + "' (grid, blobs)");
}

ExperimentSpec experiment_spec_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidSpec(std::string("config: parse error: ") + e.what());
    }

    check_keys(doc,
               {"schema_version", "dataset", "teacher", "arms", "seeds", "train", "k_last",
                "output_dir"},
               "top level");
    if (!doc.contains("schema_version") ||
        doc["schema_version"].get<int>() != kExperimentSchemaVersion) {
        throw InvalidSpec("config: schema_version must be " +
                          std::to_string(kExperimentSchemaVersion));
    }

    ExperimentSpec spec;

    if (doc.contains("dataset")) {
        const json& d = doc["dataset"];
        check_keys(d, {"type", "classes", "per_class", "d", "spread", "grid", "noise", "seed"},
                   "dataset");
        spec.dataset.type = d.value("type", spec.dataset.type);
        spec.dataset.classes = d.value("classes", spec.dataset.classes);
        spec.dataset.per_class = d.value("per_class", spec.dataset.per_class);
        spec.dataset.d = d.value("d", spec.dataset.d);
        spec.dataset.spread = d.value("spread", spec.dataset.spread);
        spec.dataset.noise = d.value("noise", spec.dataset.noise);
        spec.dataset.seed = d.value("seed", spec.dataset.seed);
        if (d.contains("grid")) {
            spec.dataset.grid = GridShape{d["grid"][0].get<int>(), d["grid"][1].get<int>()};
        }
    }

    if (doc.contains("teacher")) {
        const json& t = doc["teacher"];
        check_keys(t,
                   {"epochs", "batch", "lr", "momentum", "weight_decay", "hidden",
                    "snapshot_epochs", "accuracy_floor", "seed", "count"},
                   "teacher");
        spec.teacher.epochs = t.value("epochs", spec.teacher.epochs);
        spec.teacher.batch = t.value("batch", spec.teacher.batch);
        spec.teacher.sgd.lr = t.value("lr", spec.teacher.sgd.lr);
        spec.teacher.sgd.momentum = t.value("momentum", spec.teacher.sgd.momentum);
        spec.teacher.sgd.weight_decay = t.value("weight_decay", spec.teacher.sgd.weight_decay);
        if (t.contains("hidden")) spec.teacher.hidden = t["hidden"].get<std::vector<int>>();
        if (t.contains("snapshot_epochs")) {
            spec.teacher.snapshot_epochs = t["snapshot_epochs"].get<std::vector<int>>();
        }
        spec.teacher.accuracy_floor = t.value("accuracy_floor", spec.teacher.accuracy_floor);
        spec.teacher.seed = t.value("seed", spec.teacher.seed);
        spec.teacher_count = t.value("count", spec.teacher_count);
    }

    if (doc.contains("arms")) {
        spec.arms = doc["arms"].get<std::vector<std::string>>();
        if (spec.arms.empty()) throw InvalidSpec("config: arms must not be empty");
        std::set<std::string> unique(spec.arms.begin(), spec.arms.end());
        if (unique.size() != spec.arms.size()) {
            throw InvalidSpec("config: arm names must be unique");
        }
        for (const std::string& arm : spec.arms) {
            if (find_arm(arm) == nullptr) {
                throw InvalidSpec("config: unknown arm '" + arm + "'; valid arms: " +
                                  arm_names_joined());
            }
        }
    }

    if (doc.contains("seeds")) {
        spec.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
        if (spec.seeds.empty()) throw InvalidSpec("config: seeds must not be empty");
    }

    if (doc.contains("train")) {
        const json& t = doc["train"];
        check_keys(t,
                   {"d_z", "batch", "epochs", "iterations_per_epoch", "g_steps", "s_steps",
                    "gen_lr", "student_lr", "student_momentum", "weight_decay", "lambda",
                    "tau", "student_hidden", "generator_hidden"},
                   "train");
        spec.train.d_z = t.value("d_z", spec.train.d_z);
        spec.train.batch = t.value("batch", spec.train.batch);
        spec.train.epochs = t.value("epochs", spec.train.epochs);
        spec.train.iterations_per_epoch =
            t.value("iterations_per_epoch", spec.train.iterations_per_epoch);
        spec.train.g_steps = t.value("g_steps", spec.train.g_steps);
        spec.train.s_steps = t.value("s_steps", spec.train.s_steps);
        spec.train.generator_adam.lr = t.value("gen_lr", spec.train.generator_adam.lr);
        spec.train.student_sgd.lr = t.value("student_lr", spec.train.student_sgd.lr);
        spec.train.student_sgd.momentum =
            t.value("student_momentum", spec.train.student_sgd.momentum);
        spec.train.student_sgd.weight_decay =
            t.value("weight_decay", spec.train.student_sgd.weight_decay);
        spec.train.weights.lambda = t.value("lambda", spec.train.weights.lambda);
        spec.train.gmm.tau = t.value("tau", spec.train.gmm.tau);
        if (t.contains("student_hidden")) {
            spec.train.student_hidden = t["student_hidden"].get<std::vector<int>>();
        }
        if (t.contains("generator_hidden")) {
            spec.train.generator_hidden = t["generator_hidden"].get<std::vector<int>>();
        }
    }

    spec.k_last = doc.value("k_last", spec.k_last);
    if (doc.contains("output_dir")) {
        spec.output_dir = doc["output_dir"].get<std::string>();
    }

    if (spec.k_last < 1 || spec.k_last > spec.train.epochs) {
        throw InvalidSpec("config: k_last must lie in [1, train.epochs]");
    }
    validate_config(spec.train);
    return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_experiment_spec: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return experiment_spec_from_json(text);
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
    auto as_double = [&] { return std::stod(value); };
    auto as_int = [&] { return std::stoi(value); };
    auto as_bool = [&] {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw InvalidSpec("override: boolean expected for " + key);
    };
    try {
        if (key == "alpha") cfg.weights.alpha = as_double();
        else if (key == "beta") cfg.weights.beta = as_double();
        else if (key == "gamma") cfg.weights.gamma = as_double();
        else if (key == "lambda") cfg.weights.lambda = as_double();
        else if (key == "tau") cfg.gmm.tau = as_double();
        else if (key == "selection") cfg.selection_enabled = as_bool();
        else if (key == "d_z") cfg.d_z = as_int();
        else if (key == "batch") cfg.batch = as_int();
        else if (key == "epochs") cfg.epochs = as_int();
        else if (key == "iterations_per_epoch") cfg.iterations_per_epoch = as_int();
        else if (key == "g_steps") cfg.g_steps = as_int();
        else if (key == "s_steps") cfg.s_steps = as_int();
        else if (key == "gen_lr") cfg.generator_adam.lr = as_double();
        else if (key == "student_lr") cfg.student_sgd.lr = as_double();
        else if (key == "student_momentum") cfg.student_sgd.momentum = as_double();
        else if (key == "weight_decay") cfg.student_sgd.weight_decay = as_double();
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
        else throw InvalidSpec("override: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw InvalidSpec("override: cannot parse value '" + value + "' for " + key);
    } catch (const std::out_of_range&) {
        throw InvalidSpec("override: value out of range for " + key);
    }
}

std::vector<NamedTeacher> prepare_teachers(const ExperimentSpec& spec,
                                           const Dataset& dataset,
                                           const std::optional<std::filesystem::path>& out_dir) {
    TeacherTrainConfig cfg = spec.teacher;
    if (cfg.snapshot_epochs.empty()) {
        const int count = std::max(1, spec.teacher_count);
        std::set<int> epochs;
        for (int i = 1; i <= count; ++i) {
            epochs.insert(std::max(1, cfg.epochs * i / count));
        }
        cfg.snapshot_epochs.assign(epochs.begin(), epochs.end());
    }

    const std::vector<TeacherSnapshot> snapshots = train_teacher(dataset, cfg);
    std::vector<NamedTeacher> teachers;
    teachers.reserve(snapshots.size());
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        NamedTeacher t;
        t.name = "teacher_" + std::to_string(i + 1);
        t.net = snapshots[i].net;
        t.accuracy = snapshots[i].test_accuracy;
        t.epoch = snapshots[i].epoch;
        t.below_floor = snapshots[i].below_floor;
        teachers.push_back(std::move(t));
    }

    if (out_dir.has_value()) {
        const std::filesystem::path dir = *out_dir / "teachers";
        std::filesystem::create_directories(dir);
        json manifest = json::array();
        for (const NamedTeacher& t : teachers) {
            const std::filesystem::path file = dir / (t.name + ".json");
            save_network(t.net, file);
            manifest.push_back({{"name", t.name},
                                {"path", file.string()},
                                {"epoch", t.epoch},
                                {"accuracy", t.accuracy},
                                {"below_floor", t.below_floor}});
        }
        write_json_file(manifest, dir / "teachers.json", "prepare_teachers");
    }
    return teachers;
}

TrainConfig arm_config(const TrainConfig& base, const ArmPreset& arm, std::uint64_t seed) {
    TrainConfig cfg = base;
    cfg.weights.alpha = arm.weights.alpha;
    cfg.weights.beta = arm.weights.beta;
    cfg.weights.gamma = arm.weights.gamma;
    // lambda stays a config knob, not an arm distinction
    cfg.selection_enabled = arm.selection_enabled;
    cfg.seed = seed;
    return cfg;
}

RunOutcome execute_run(const NamedTeacher& teacher, const std::string& arm_name,
                       const TrainConfig& cfg, const Dataset& dataset, int k_last,
                       const std::filesystem::path& out_root) {
    RunOutcome outcome;
    outcome.key = RunKey{teacher.name, arm_name, cfg.seed};
    outcome.dir =
        out_root / (arm_name + "__" + teacher.name + "__s" + std::to_string(cfg.seed));
    try {
        std::filesystem::create_directories(outcome.dir);

        const DistillResult result = run_distillation(teacher.net, cfg, EvalView(dataset));
        const RunRecord& run = result.record;

        json config_doc;
        config_doc["schema_version"] = kExperimentSchemaVersion;
        config_doc["arm"] = arm_name;
        config_doc["teacher"] = {{"name", teacher.name}, {"accuracy", teacher.accuracy}};
        config_doc["seed"] = cfg.seed;
        config_doc["k_last"] = k_last;
        config_doc["fingerprint"] = json::parse(run.fingerprint);
        write_json_file(config_doc, outcome.dir / "config.json", "execute_run");

        write_telemetry_csv(run, outcome.dir / "telemetry.csv");
        write_epoch_summaries(run, outcome.dir / "epochs.json");

        RunSummary& s = outcome.summary;
        s.teacher = teacher.name;
        s.method = arm_name;
        s.seed = cfg.seed;
        s.teacher_accuracy = teacher.accuracy;
        s.acc_max = acc_max(run);
        s.acc_last = acc_last_k(run, k_last);
        s.final_class_entropy = run.final_class_entropy;
        s.final_feature_spread = run.final_feature_spread;

        json run_doc;
        run_doc["acc_max"] = s.acc_max;
        run_doc["acc_last"] = s.acc_last;
        run_doc["k"] = k_last;
        run_doc["initial_accuracy"] = run.initial_accuracy;
        run_doc["final_class_entropy"] = s.final_class_entropy;
        run_doc["final_feature_spread"] = s.final_feature_spread;
        write_json_file(run_doc, outcome.dir / "run.json", "execute_run");

        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
    }
    return outcome;
}

AblationResult run_ablation(const ExperimentSpec& spec, int jobs,
                            const std::filesystem::path& out_root) {
    std::filesystem::create_directories(out_root);
    const Dataset dataset = build_dataset(spec.dataset);

    AblationResult result;
    result.teachers = prepare_teachers(spec, dataset, out_root);

    std::vector<const ArmPreset*> arms;
    for (const std::string& name : spec.arms) {
        const ArmPreset* arm = find_arm(name);
        if (arm == nullptr) {
            throw InvalidSpec("ablate: unknown arm '" + name + "'; valid arms: " +
                              arm_names_joined());
        }
        arms.push_back(arm);
    }

    struct Task {
        const NamedTeacher* teacher;
        const ArmPreset* arm;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const NamedTeacher& teacher : result.teachers) {
        for (const ArmPreset* arm : arms) {
            for (std::uint64_t seed : spec.seeds) tasks.push_back({&teacher, arm, seed});
        }
    }

    result.outcomes.resize(tasks.size());
    auto run_task = [&](std::size_t i) {
        const Task& t = tasks[i];
        const TrainConfig cfg = arm_config(spec.train, *t.arm, t.seed);
        result.outcomes[i] = execute_run(*t.teacher, t.arm->name, cfg, dataset,
                                         spec.k_last, out_root);
    };

    const int workers = std::max(1, jobs);
    if (workers == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t n = std::min(static_cast<std::size_t>(workers), tasks.size());
        pool.reserve(n);
        for (std::size_t w = 0; w < n; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < tasks.size();
                     i = next.fetch_add(1)) {
                    run_task(i);
                }
            });
        }
        for (std::thread& th : pool) th.join();
    }

    // Per-arm success gate.
    result.every_arm_succeeded = true;
    for (const ArmPreset* arm : arms) {
        const bool any = std::any_of(result.outcomes.begin(), result.outcomes.end(),
                                     [&](const RunOutcome& o) {
                                         return o.ok && o.key.arm == arm->name;
                                     });
        if (!any) result.every_arm_succeeded = false;
    }

    std::vector<RunSummary> summaries;
    for (const RunOutcome& o : result.outcomes) {
        if (o.ok) summaries.push_back(o.summary);
    }

    // Report over teachers whose every arm produced at least one run, so
    // rows stay comparable when partial failures occur.
    std::vector<std::string> report_teachers;
    for (const NamedTeacher& teacher : result.teachers) {
        const bool complete = std::all_of(arms.begin(), arms.end(), [&](const ArmPreset* arm) {
            return std::any_of(summaries.begin(), summaries.end(), [&](const RunSummary& s) {
                return s.teacher == teacher.name && s.method == arm->name;
            });
        });
        if (complete) report_teachers.push_back(teacher.name);
    }
    if (!report_teachers.empty()) {
        result.report = robustness_report(summaries, report_teachers, spec.arms, spec.k_last);
        const std::vector<StoredRun> stored = scan_run_dirs_full(out_root);
        write_report_files(result.report, stored, spec.arms, out_root);
    }
    return result;
}

void write_report_files(const RobustnessReport& report, const std::vector<StoredRun>& stored,
                        std::span<const std::string> arms,
                        const std::filesystem::path& out_root) {
    write_text_file(out_root / "report.txt", render_report_text(report));
    write_text_file(out_root / "report.json", render_report_json(report));
    for (const std::string& arm_name : arms) {
        std::vector<AccuracySeries> series;
        for (const StoredRun& run : stored) {
            if (run.summary.method != arm_name) continue;
            series.push_back({run.summary.teacher + "/s" + std::to_string(run.summary.seed),
                              run.epoch_accuracies});
        }
        if (!series.empty()) {
            write_text_file(out_root / (arm_name + "_accuracy.svg"),
                            render_accuracy_svg(series));
        }
    }
}

std::vector<StoredRun> scan_run_dirs_full(const std::filesystem::path& root) {
    std::vector<StoredRun> out;
    if (!std::filesystem::is_directory(root)) {
        throw IoError("scan_run_dirs: not a directory: " + root.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::filesystem::path config_path = entry.path() / "config.json";
        const std::filesystem::path run_path = entry.path() / "run.json";
        const std::filesystem::path epochs_path = entry.path() / "epochs.json";
        if (!std::filesystem::exists(config_path) || !std::filesystem::exists(run_path) ||
            !std::filesystem::exists(epochs_path)) {
            continue;
        }
        const json config_doc = read_json_file(config_path, "scan_run_dirs");
        const json run_doc = read_json_file(run_path, "scan_run_dirs");
        const json epoch_doc = read_json_file(epochs_path, "scan_run_dirs");

        StoredRun run;
        run.summary.teacher = config_doc["teacher"]["name"].get<std::string>();
        run.summary.teacher_accuracy = config_doc["teacher"]["accuracy"].get<double>();
        run.summary.method = config_doc["arm"].get<std::string>();
        run.summary.seed = config_doc["seed"].get<std::uint64_t>();
        run.summary.acc_max = run_doc["acc_max"].get<double>();
        run.summary.acc_last = run_doc["acc_last"].get<double>();
        run.k = run_doc["k"].get<int>();
        run.summary.final_class_entropy = run_doc["final_class_entropy"].get<double>();
        run.summary.final_feature_spread = run_doc["final_feature_spread"].get<double>();
        for (const json& e : epoch_doc) {
            run.epoch_accuracies.push_back(e["student_accuracy"].get<double>());
        }
        out.push_back(std::move(run));
    }
    std::sort(out.begin(), out.end(), [](const StoredRun& a, const StoredRun& b) {
        return std::tie(a.summary.teacher, a.summary.method, a.summary.seed) <
               std::tie(b.summary.teacher, b.summary.method, b.summary.seed);
    });
    if (out.empty()) {
        throw IoError("scan_run_dirs: no run directories under " + root.string());
    }
    return out;
}

std::vector<RunSummary> scan_run_dirs(const std::filesystem::path& root) {
    std::vector<RunSummary> out;
    for (StoredRun& run : scan_run_dirs_full(root)) out.push_back(std::move(run.summary));
    return out;
}

std::filesystem::path resolve_output_root(const std::optional<std::filesystem::path>& flag,
                                          const std::filesystem::path& spec_default) {
    if (flag.has_value()) return *flag;
    if (const char* env = std::getenv("TADFKD_OUT"); env != nullptr && *env != '\0') {
        return std::filesystem::path(env);
    }
    return spec_default;
}

} // namespace tadfkd
