#include <benchmark/benchmark.h>

#include "tadfkd/distill.hpp"
#include "tadfkd/losses.hpp"
#include "tadfkd/selection.hpp"

using namespace tadfkd;

namespace {

void bm_matmul_forward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1, 0);
    Tensor a = rng.normal_tensor({n, n});
    Tensor b = rng.normal_tensor({n, n});
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.values.data());
    }
    state.SetItemsProcessed(state.iterations() * 2L * n * n * n);
}
BENCHMARK(bm_matmul_forward)->Arg(64)->Arg(128);

void bm_generator_loss_backward(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    Rng t_init(1, streams::kInitTeacher);
    Rng g_init(1, streams::kInitGenerator);
    const int t_widths[] = {64, 128, 128, 64, 4};
    const int g_hidden[] = {128, 128};
    Network teacher = Network::classifier(t_widths, t_init);
    Network generator = Network::generator(64, g_hidden, 64, g_init);
    Rng sinit(1, streams::kInitStudent);
    const int s_widths[] = {64, 64, 32, 4};
    Network student = Network::classifier(s_widths, sinit);

    Rng noise(1, streams::kLatent);
    const GridShape grid{8, 8};
    for (auto _ : state) {
        Tensor z = sample_latent(noise, batch, 64);
        Graph g;
        StagedNetwork sg = stage(generator, g);
        Tensor x = generator_forward_staged(sg, z);
        BnObservation obs;
        Tensor t_logits =
            classifier_forward(std::as_const(teacher), x, ForwardMode::observe, &obs);
        Tensor s_logits = classifier_forward(student, x, ForwardMode::train);
        SelectionMask mask = select_all(static_cast<std::size_t>(batch));
        GeneratorLossParts parts;
        parts.adv = adversarial_loss(t_logits, s_logits, mask);
        parts.rep = representation_loss(obs, teacher, x, grid, 0.5);
        Tensor loss = generator_loss(LossWeights{}, parts);
        GradientMap grads = g.backward(loss, sg.leaves);
        benchmark::DoNotOptimize(grads.data());
    }
}
BENCHMARK(bm_generator_loss_backward)->Arg(64)->Arg(96);

void bm_fit_gmm(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(3, 0);
    std::vector<double> losses;
    for (int i = 0; i < n / 2; ++i) losses.push_back(0.2 + 0.05 * rng.next_normal());
    for (int i = 0; i < n - n / 2; ++i) losses.push_back(2.0 + 0.3 * rng.next_normal());
    for (auto _ : state) {
        GmmFit fit = fit_gmm_1d(losses, {});
        benchmark::DoNotOptimize(fit.log_likelihood);
    }
}
BENCHMARK(bm_fit_gmm)->Arg(96)->Arg(1024);

void bm_dfkd_iteration(benchmark::State& state) {
    Dataset ds = make_grid_patterns(4, 50, {8, 8}, 0.2, 5);
    TeacherTrainConfig tcfg;
    tcfg.epochs = 2;
    Network teacher = train_teacher(ds, tcfg).back().net;

    TrainConfig cfg;
    cfg.batch = static_cast<int>(state.range(0));
    Rng s_init(1, streams::kInitStudent);
    Rng g_init(1, streams::kInitGenerator);
    std::vector<int> s_widths = {64};
    s_widths.insert(s_widths.end(), cfg.student_hidden.begin(), cfg.student_hidden.end());
    s_widths.push_back(4);
    Network student = Network::classifier(s_widths, s_init);
    Network generator = Network::generator(cfg.d_z, cfg.generator_hidden, 64, g_init);

    AdamState gs;
    SgdState ss;
    Rng noise(1, streams::kLatent);
    for (auto _ : state) {
        IterationRecord rec = dfkd_iteration(teacher, student, generator, gs, ss, cfg,
                                             GridShape{8, 8}, noise, 0);
        benchmark::DoNotOptimize(rec.loss_kd);
    }
}
BENCHMARK(bm_dfkd_iteration)->Arg(64)->Arg(96)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
