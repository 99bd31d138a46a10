#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <utility>

#include "helpers.hpp"
#include "tadfkd/checkpoint.hpp"
#include "tadfkd/data.hpp"
#include "tadfkd/network.hpp"

using namespace tadfkd;
using test_util::rand_tensor;

namespace {

Network small_classifier(std::uint64_t seed = 1) {
    Rng rng(seed, streams::kInitTeacher);
    const int widths[] = {5, 8, 6, 3};
    return Network::classifier(widths, rng);
}

} // namespace

TEST_SUITE_BEGIN("network");

TEST_CASE("observe-mode logits equal eval-mode logits") {
    Network net = small_classifier();
    Rng rng(2, 0);
    Tensor x = rand_tensor({6, 5}, -1, 1, rng);
    Tensor eval_logits = classifier_forward(net, x, ForwardMode::eval);
    BnObservation obs;
    Tensor observe_logits =
        classifier_forward(std::as_const(net), x, ForwardMode::observe, &obs);
    CHECK(eval_logits.values == observe_logits.values);
    CHECK(obs.means.size() == net.batch_norm_count());
}

TEST_CASE("observed batch statistics match an independent oracle") {
    Network net = small_classifier(3);
    Rng rng(4, 0);
    Tensor x = rand_tensor({8, 5}, -1, 1, rng);

    // Oracle: run layers by hand up to each BN input, then plain
    // mean/variance per column.
    BnObservation obs;
    classifier_forward(std::as_const(net), x, ForwardMode::observe, &obs);

    Tensor h = x;
    std::size_t bn_seen = 0;
    for (const Layer& l : net.layers) {
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            h = add_row(matmul(h, transpose(d->weight)), d->bias);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
            const int dcols = h.cols();
            for (int j = 0; j < dcols; ++j) {
                double mean = 0.0;
                for (int i = 0; i < h.rows(); ++i) mean += h.at(i, j);
                mean /= h.rows();
                double var = 0.0;
                for (int i = 0; i < h.rows(); ++i) {
                    var += (h.at(i, j) - mean) * (h.at(i, j) - mean);
                }
                var /= h.rows();
                CHECK(obs.means[bn_seen].values[static_cast<std::size_t>(j)] ==
                      doctest::Approx(mean).epsilon(1e-12));
                CHECK(obs.vars[bn_seen].values[static_cast<std::size_t>(j)] ==
                      doctest::Approx(var).epsilon(1e-12));
            }
            // continue the oracle forward in eval normalization
            Tensor denom = Tensor::zeros({dcols});
            for (int j = 0; j < dcols; ++j) {
                denom.values[static_cast<std::size_t>(j)] =
                    std::sqrt(bn->running_var.values[static_cast<std::size_t>(j)] + bn->eps);
            }
            h = add_row(mul_row(div_row(sub_row(h, bn->running_mean), denom), bn->gamma),
                        bn->beta);
            ++bn_seen;
        } else if (std::get<Activation>(l) == Activation::relu) {
            h = relu(h);
        } else {
            h = tanh(h);
        }
    }
}

TEST_CASE("batch matching running stats observes zero deviation") {
    // One BN layer straight on the input: feed a batch whose per-column
    // mean/var already equal the running statistics.
    Network net;
    net.kind = NetworkKind::classifier;
    BatchNormLayer bn;
    bn.gamma = Tensor::full({2}, 1.0);
    bn.beta = Tensor::zeros({2});
    bn.running_mean = Tensor({2}, {0.5, -0.5});
    bn.running_var = Tensor({2}, {0.25, 0.25});
    net.layers.emplace_back(bn);
    DenseLayer d;
    d.weight = Tensor({1, 2}, {1, 1});
    d.bias = Tensor::zeros({1});
    net.layers.emplace_back(d);

    Tensor x({2, 2}, {1.0, 0.0, 0.0, -1.0}); // cols: mean .5/-.5, var .25/.25
    BnObservation obs;
    classifier_forward(std::as_const(net), x, ForwardMode::observe, &obs);
    CHECK(obs.means[0].values[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(obs.vars[0].values[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("train mode updates running stats per the stated rule") {
    Network net = small_classifier(5);
    auto* bn = std::get_if<BatchNormLayer>(&net.layers[1]);
    REQUIRE(bn != nullptr);
    const Tensor mean_before = bn->running_mean;
    const Tensor var_before = bn->running_var;

    Rng rng(6, 0);
    Tensor x = rand_tensor({8, 5}, -1, 1, rng);
    BnObservation obs;
    classifier_forward(std::as_const(net), x, ForwardMode::observe, &obs); // batch stats

    classifier_forward(net, x, ForwardMode::train);
    for (std::size_t j = 0; j < mean_before.values.size(); ++j) {
        const double want =
            0.9 * mean_before.values[j] + 0.1 * obs.means[0].values[j];
        CHECK(bn->running_mean.values[j] == doctest::Approx(want).epsilon(1e-12));
        const double want_var = 0.9 * var_before.values[j] + 0.1 * obs.vars[0].values[j];
        CHECK(bn->running_var.values[j] == doctest::Approx(want_var).epsilon(1e-12));
    }
}

TEST_CASE("eval forward is pure") {
    Network net = small_classifier(7);
    Rng rng(8, 0);
    Tensor x = rand_tensor({4, 5}, -1, 1, rng);
    const std::uint32_t sum_before = network_checksum(net);
    Tensor a = classifier_forward(std::as_const(net), x, ForwardMode::eval);
    Tensor b = classifier_forward(std::as_const(net), x, ForwardMode::eval);
    CHECK(a.values == b.values);
    CHECK(network_checksum(net) == sum_before);
}

TEST_CASE("mode and batch preconditions") {
    Network net = small_classifier(9);
    Tensor one_row = Tensor::zeros({1, 5});
    CHECK_THROWS_AS(classifier_forward(net, one_row, ForwardMode::train), BatchTooSmall);
    CHECK_THROWS_AS(
        classifier_forward(std::as_const(net), one_row, ForwardMode::observe, nullptr),
        BatchTooSmall);
    CHECK_NOTHROW(classifier_forward(std::as_const(net), one_row, ForwardMode::eval));
    CHECK_THROWS_AS(classifier_forward(std::as_const(net), one_row, ForwardMode::train),
                    InvalidSpec);
    Tensor wrong = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(classifier_forward(net, wrong, ForwardMode::train), ShapeMismatch);
}

TEST_CASE("generator output is tanh-bounded and zero at zeroed final layer") {
    Rng rng(10, streams::kInitGenerator);
    const int hidden[] = {6, 6};
    Network gen = Network::generator(3, hidden, 4, rng);

    Rng zr(11, streams::kLatent);
    Tensor z = sample_latent(zr, 5, 3);
    Tensor out = generator_forward(gen, z);
    for (double v : out.values) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }

    // zero the final dense layer: outputs must be exactly tanh(0) = 0
    for (auto it = gen.layers.rbegin(); it != gen.layers.rend(); ++it) {
        if (auto* d = std::get_if<DenseLayer>(&*it)) {
            for (double& v : d->weight.values) v = 0.0;
            for (double& v : d->bias.values) v = 0.0;
            break;
        }
    }
    Tensor zeroed = generator_forward(gen, z);
    for (double v : zeroed.values) CHECK(v == 0.0);
}

TEST_CASE("generator gradients pass the finite-difference check") {
    Rng rng(12, streams::kInitGenerator);
    const int hidden[] = {5};
    Network gen = Network::generator(3, hidden, 4, rng);
    Rng zr(13, streams::kLatent);
    Tensor z = sample_latent(zr, 4, 3);

    std::vector<Tensor*> params = collect_params(gen);
    std::vector<Tensor> values;
    for (Tensor* p : params) values.push_back(*p);

    RunningStatsGuard guard(gen);
    const double err = finite_diff_check(
        [&](Graph&, std::span<const Tensor> staged) {
            StagedNetwork sn = stage_with(gen, staged);
            return reduce_sum(generator_forward_staged(sn, z));
        },
        values);
    CHECK(err < 1e-4);
}

TEST_CASE("checkpoint round-trip is byte-identical and verified") {
    Network net = small_classifier(14);
    // make running stats non-trivial first
    Rng rng(15, 0);
    classifier_forward(net, rand_tensor({6, 5}, -1, 1, rng), ForwardMode::train);

    namespace fs = std::filesystem;
    const fs::path p1 = fs::temp_directory_path() / "tadfkd_net_a.json";
    const fs::path p2 = fs::temp_directory_path() / "tadfkd_net_b.json";
    save_network(net, p1);
    Network loaded = load_network(p1);
    save_network(loaded, p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {});
    const std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(!s1.empty());

    // identical logits from the reloaded network
    Tensor x = rand_tensor({4, 5}, -1, 1, rng);
    CHECK(classifier_forward(std::as_const(net), x, ForwardMode::eval).values ==
          classifier_forward(std::as_const(loaded), x, ForwardMode::eval).values);
    CHECK(network_checksum(net) == network_checksum(loaded));

    SUBCASE("corrupted checksum is rejected") {
        std::string text = s1;
        const auto pos = text.find("\"crc32\":");
        REQUIRE(pos != std::string::npos);
        text[pos + 9] = text[pos + 9] == '1' ? '2' : '1';
        std::ofstream out(p1, std::ios::binary);
        out << text;
        out.close();
        CHECK_THROWS_AS(load_network(p1), ChecksumMismatch);
    }
    SUBCASE("wrong schema version is rejected") {
        std::string text = s1;
        const auto pos = text.find("\"schema_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 19, "\"schema_version\": 9");
        std::ofstream out(p1, std::ios::binary);
        out << text;
        out.close();
        CHECK_THROWS_AS(load_network(p1), SchemaVersionMismatch);
    }
    fs::remove(p1);
    fs::remove(p2);
    CHECK_THROWS_AS(load_network(p1), IoError);
}

TEST_SUITE_END();
