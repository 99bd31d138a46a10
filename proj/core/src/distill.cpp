#include "tadfkd/distill.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "tadfkd/format.hpp"
#include "tadfkd/metrics.hpp"

namespace tadfkd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MeanAcc {
    double sum = 0.0;
    int n = 0;
    void add(double v) { sum += v; ++n; }
    double value() const { return n > 0 ? sum / n : kNaN; }
};

} // namespace

std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string fmt_fixed(double v, int precision) {
    char buf[64];
    auto [ptr, ec] =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    (void)ec;
    return std::string(buf, ptr);
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.d_z < 1 || cfg.batch < 2) {
        throw InvalidSpec("config: d_z must be >= 1 and batch >= 2");
    }
    if (cfg.epochs < 0 || cfg.iterations_per_epoch < 1) {
        throw InvalidSpec("config: epochs must be >= 0, iterations_per_epoch >= 1");
    }
    if (cfg.g_steps < 1 || cfg.s_steps < 1) {
        throw InvalidSpec("config: g_steps and s_steps must be >= 1");
    }
    if (cfg.generator_adam.lr <= 0.0 || cfg.student_sgd.lr <= 0.0) {
        throw InvalidSpec("config: learning rates must be positive");
    }
    if (cfg.weights.alpha < 0.0 || cfg.weights.beta < 0.0 || cfg.weights.gamma < 0.0) {
        throw InvalidSpec("config: loss coefficients must be nonnegative");
    }
    if (cfg.weights.lambda < 0.0 || cfg.weights.lambda > 1.0) {
        throw InvalidSpec("config: lambda must lie in [0, 1]");
    }
    if (cfg.gmm.tau < 0.0 || cfg.gmm.tau > 1.0 || cfg.gmm.max_iterations < 1) {
        throw InvalidSpec("config: tau must lie in [0, 1], max_iterations >= 1");
    }
}

std::string config_fingerprint(const TrainConfig& cfg) {
    nlohmann::json j;
    j["weights"] = {{"alpha", cfg.weights.alpha},
                    {"beta", cfg.weights.beta},
                    {"gamma", cfg.weights.gamma},
                    {"lambda", cfg.weights.lambda}};
    j["gmm"] = {{"max_iterations", cfg.gmm.max_iterations},
                {"tolerance", cfg.gmm.tolerance},
                {"variance_floor", cfg.gmm.variance_floor},
                {"tau", cfg.gmm.tau}};
    j["selection_enabled"] = cfg.selection_enabled;
    j["empty_selection_policy"] = "skip_step";
    j["d_z"] = cfg.d_z;
    j["batch"] = cfg.batch;
    j["epochs"] = cfg.epochs;
    j["iterations_per_epoch"] = cfg.iterations_per_epoch;
    j["g_steps"] = cfg.g_steps;
    j["s_steps"] = cfg.s_steps;
    j["generator_adam"] = {{"lr", cfg.generator_adam.lr},
                           {"beta1", cfg.generator_adam.beta1},
                           {"beta2", cfg.generator_adam.beta2},
                           {"eps", cfg.generator_adam.eps}};
    j["student_sgd"] = {{"lr", cfg.student_sgd.lr},
                        {"momentum", cfg.student_sgd.momentum},
                        {"weight_decay", cfg.student_sgd.weight_decay}};
    j["student_hidden"] = cfg.student_hidden;
    j["generator_hidden"] = cfg.generator_hidden;
    j["seed"] = cfg.seed;
    return j.dump();
}

double IterationRecord::mean_selection_rate() const {
    MeanAcc acc;
    for (double r : selection_rates) acc.add(r);
    return acc.n > 0 ? acc.value() : 0.0;
}

std::vector<double> RunRecord::epoch_accuracies() const {
    std::vector<double> out;
    out.reserve(epochs.size());
    for (const EpochRecord& e : epochs) out.push_back(e.student_accuracy);
    return out;
}

IterationRecord dfkd_iteration(const Network& teacher, Network& student,
                               Network& generator, AdamState& generator_state,
                               SgdState& student_state, const TrainConfig& cfg,
                               const std::optional<GridShape>& grid, Rng& noise_rng,
                               long epoch, const GeneratorStepProbeFn& probe) {
    const LossWeights& w = cfg.weights;
    IterationRecord rec{kNaN, kNaN, kNaN, kNaN, {}, 0};
    MeanAcc adv_acc, rep_acc, cls_acc, kd_acc;

    auto make_mask = [&](const Tensor& teacher_logits) {
        if (!cfg.selection_enabled) {
            return select_all(static_cast<std::size_t>(teacher_logits.rows()));
        }
        const std::vector<double> conf = per_sample_confidence(teacher_logits);
        return select(conf, cfg.gmm);
    };

    // ---- generator updates ----
    for (int gs = 0; gs < cfg.g_steps; ++gs) {
        Tensor z = sample_latent(noise_rng, cfg.batch, cfg.d_z);
        Graph g;
        StagedNetwork staged_gen = stage(generator, g);
        Tensor samples = generator_forward_staged(staged_gen, z);

        BnObservation obs;
        Tensor teacher_logits = classifier_forward(teacher, samples, ForwardMode::observe, &obs);
        Tensor student_logits = classifier_forward(student, samples, ForwardMode::train);

        SelectionMask mask = make_mask(teacher_logits);
        rec.selection_rates.push_back(mask.selection_rate);
        if (w.beta != 0.0 && mask.count() == 0) {
            rec.empty_events += 1; // skip_step policy
            continue;
        }

        GeneratorLossParts parts;
        if (w.alpha != 0.0) parts.cls = class_prior_loss(teacher_logits);
        if (w.beta != 0.0) parts.adv = adversarial_loss(teacher_logits, student_logits, mask);
        if (w.gamma != 0.0) parts.rep = representation_loss(obs, teacher, samples, grid, w.lambda);
        Tensor loss = generator_loss(w, parts);

        if (parts.cls) cls_acc.add(parts.cls->item());
        if (parts.adv) adv_acc.add(parts.adv->item());
        if (parts.rep) rep_acc.add(parts.rep->item());
        if (probe) {
            probe(GeneratorStepProbe{samples, teacher_logits, student_logits, obs, mask,
                                     loss.item(),
                                     parts.cls ? parts.cls->item() : kNaN,
                                     parts.adv ? parts.adv->item() : kNaN,
                                     parts.rep ? parts.rep->item() : kNaN});
        }

        if (loss.on_graph()) {
            GradientMap grads = g.backward(loss, staged_gen.leaves);
            const std::vector<Tensor*> params = collect_params(generator);
            adam_step(params, grads, generator_state, cfg.generator_adam);
        }
    }

    // ---- student updates ----
    for (int ss = 0; ss < cfg.s_steps; ++ss) {
        Tensor z = sample_latent(noise_rng, cfg.batch, cfg.d_z);
        Tensor samples = generator_forward(generator, z); // eager, current generator
        Tensor teacher_logits = classifier_forward(teacher, samples, ForwardMode::eval);

        SelectionMask mask = make_mask(teacher_logits);
        rec.selection_rates.push_back(mask.selection_rate);
        if (mask.count() == 0) {
            rec.empty_events += 1;
            continue;
        }

        Graph g;
        StagedNetwork staged_student = stage(student, g);
        Tensor student_logits = forward_staged(staged_student, samples, ForwardMode::train);
        Tensor loss = kd_loss_l1(teacher_logits, student_logits, mask);
        kd_acc.add(loss.item());

        GradientMap grads = g.backward(loss, staged_student.leaves);
        const std::vector<Tensor*> params = collect_params(student);
        sgd_step(params, grads, student_state, cfg.student_sgd, epoch, cfg.epochs);
    }

    rec.loss_adv = adv_acc.value();
    rec.loss_rep = rep_acc.value();
    rec.loss_cls = cls_acc.value();
    rec.loss_kd = kd_acc.value();
    return rec;
}

DistillResult run_distillation(const Network& teacher, const TrainConfig& cfg,
                               const EvalView& eval_data,
                               const GeneratorStepProbeFn& probe) {
    validate_config(cfg);
    if (eval_data.size() == 0) throw EmptyDataset("run_distillation: empty evaluation split");

    const Tensor eval_x = eval_data.x();
    const std::vector<int> eval_y = eval_data.y();
    const int d_in = eval_x.cols();
    const int classes = eval_data.classes();

    std::vector<int> student_widths;
    student_widths.push_back(d_in);
    student_widths.insert(student_widths.end(), cfg.student_hidden.begin(),
                          cfg.student_hidden.end());
    student_widths.push_back(classes);

    Rng student_init(cfg.seed, streams::kInitStudent);
    Rng generator_init(cfg.seed, streams::kInitGenerator);
    Rng noise(cfg.seed, streams::kLatent);

    DistillResult result;
    result.student = Network::classifier(student_widths, student_init);
    result.generator = Network::generator(cfg.d_z, cfg.generator_hidden, d_in, generator_init);

    AdamState generator_state;
    SgdState student_state;

    RunRecord& run = result.record;
    run.seed = cfg.seed;
    run.fingerprint = config_fingerprint(cfg);
    run.initial_accuracy = accuracy(result.student, eval_x, eval_y);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<IterationRecord> iters;
        iters.reserve(static_cast<std::size_t>(cfg.iterations_per_epoch));
        for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
            iters.push_back(dfkd_iteration(teacher, result.student, result.generator,
                                           generator_state, student_state, cfg,
                                           eval_data.grid(), noise, epoch, probe));
        }
        MeanAcc rate;
        for (const IterationRecord& r : iters) rate.add(r.mean_selection_rate());
        EpochRecord er;
        er.epoch = epoch;
        er.student_accuracy = accuracy(result.student, eval_x, eval_y);
        er.mean_selection_rate = rate.n > 0 ? rate.value() : 0.0;
        er.lr = cosine_lr(cfg.student_sgd.lr, epoch, cfg.epochs);
        run.epochs.push_back(er);
        run.iterations.push_back(std::move(iters));
    }

    Rng diversity_rng(cfg.seed, streams::kDiversity);
    Tensor z_final = sample_latent(diversity_rng, std::max(cfg.batch, 2), cfg.d_z);
    Tensor samples_final = generator_forward(result.generator, z_final);
    const DiversityScore div = diversity_score(samples_final, teacher);
    run.final_feature_spread = div.feature_spread;
    run.final_class_entropy = div.class_entropy;
    return result;
}

std::vector<TeacherSnapshot> train_teacher(const Dataset& dataset,
                                           const TeacherTrainConfig& cfg) {
    if (dataset.train_indices.empty() || dataset.test_indices.empty()) {
        throw EmptyDataset("train_teacher: dataset needs train and test splits");
    }
    if (cfg.epochs < 0 || cfg.batch < 2) {
        throw InvalidSpec("train_teacher: epochs must be >= 0 and batch >= 2");
    }

    std::vector<int> widths;
    widths.push_back(dataset.feature_width());
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(dataset.classes);

    Rng init(cfg.seed, streams::kInitTeacher);
    Network teacher = Network::classifier(widths, init);

    const Tensor test_x = dataset.test_x();
    const std::vector<int> test_y = dataset.test_y();

    std::vector<int> snapshot_epochs = cfg.snapshot_epochs;
    if (snapshot_epochs.empty()) snapshot_epochs.push_back(cfg.epochs);
    std::sort(snapshot_epochs.begin(), snapshot_epochs.end());

    std::vector<TeacherSnapshot> snapshots;
    auto take_snapshot = [&](int epoch) {
        TeacherSnapshot snap;
        snap.net = teacher;
        snap.epoch = epoch;
        snap.test_accuracy = accuracy(teacher, test_x, test_y);
        snap.below_floor = snap.test_accuracy < cfg.accuracy_floor;
        snapshots.push_back(std::move(snap));
    };

    if (cfg.epochs == 0) {
        take_snapshot(0);
        return snapshots;
    }

    const std::vector<int> train_idx = dataset.train_indices;
    const int n_train = static_cast<int>(train_idx.size());
    Rng shuffle(cfg.seed, streams::kTrainShuffle);
    SgdState state;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<int> perm = shuffle.permutation(n_train);
        for (int start = 0; start < n_train; start += cfg.batch) {
            const int stop = std::min(start + cfg.batch, n_train);
            if (stop - start < 2) break; // batch stats need >= 2 samples
            std::vector<int> rows;
            std::vector<int> labels;
            rows.reserve(static_cast<std::size_t>(stop - start));
            for (int i = start; i < stop; ++i) {
                const int r = train_idx[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
                rows.push_back(r);
                labels.push_back(dataset.y[static_cast<std::size_t>(r)]);
            }
            Tensor xb = dataset.gather_rows(rows);
            Tensor yb = onehot_rows(labels, dataset.classes);

            Graph g;
            StagedNetwork staged = stage(teacher, g);
            Tensor logits = forward_staged(staged, xb, ForwardMode::train);
            Tensor loss = reduce_mean(cross_entropy(softmax(logits), yb));
            GradientMap grads = g.backward(loss, staged.leaves);
            const std::vector<Tensor*> params = collect_params(teacher);
            sgd_step(params, grads, state, cfg.sgd, epoch - 1, cfg.epochs);
        }
        if (std::binary_search(snapshot_epochs.begin(), snapshot_epochs.end(), epoch)) {
            take_snapshot(epoch);
        }
    }
    return snapshots;
}

void write_telemetry_csv(const RunRecord& run, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_telemetry_csv: cannot open " + path.string());
    out << "epoch,iter,loss_adv,loss_rep,loss_cls,loss_kd,selection_rate,empty_events\n";
    for (std::size_t e = 0; e < run.iterations.size(); ++e) {
        for (std::size_t i = 0; i < run.iterations[e].size(); ++i) {
            const IterationRecord& r = run.iterations[e][i];
            out << e << ',' << i << ',' << fmt_double(r.loss_adv) << ','
                << fmt_double(r.loss_rep) << ',' << fmt_double(r.loss_cls) << ','
                << fmt_double(r.loss_kd) << ',' << fmt_double(r.mean_selection_rate())
                << ',' << r.empty_events << '\n';
        }
    }
    if (!out) throw IoError("write_telemetry_csv: write failed for " + path.string());
}

void write_epoch_summaries(const RunRecord& run, const std::filesystem::path& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const EpochRecord& e : run.epochs) {
        arr.push_back({{"epoch", e.epoch},
                       {"student_accuracy", e.student_accuracy},
                       {"mean_selection_rate", e.mean_selection_rate},
                       {"lr", e.lr}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_epoch_summaries: cannot open " + path.string());
    out << arr.dump(2) << '\n';
    if (!out) throw IoError("write_epoch_summaries: write failed for " + path.string());
}

} // namespace tadfkd
