#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "tadfkd/selection.hpp"

using namespace tadfkd;

namespace {

double norm_pdf(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) /
           std::sqrt(2.0 * std::numbers::pi * var);
}

// Seeded two-cluster sample: 100 draws from N(0.1, 0.01^2) and 100 from
// N(5, 0.01^2).
std::vector<double> bimodal_losses(std::uint64_t seed = 99) {
    Rng rng(seed, 0);
    std::vector<double> losses;
    for (int i = 0; i < 100; ++i) losses.push_back(0.1 + 0.01 * rng.next_normal());
    for (int i = 0; i < 100; ++i) losses.push_back(5.0 + 0.01 * rng.next_normal());
    return losses;
}

} // namespace

TEST_SUITE_BEGIN("selection");

TEST_CASE("per_sample_confidence equals -log max softmax probability") {
    Tensor logits({3, 4}, {5, 0, 0, 0,
                           0.3, 0.2, 0.1, 0.0,
                           0, 0, 0, 0});
    const std::vector<double> conf = per_sample_confidence(logits);

    // confident row ~ 0
    CHECK(conf[0] < 0.03);
    // uniform row over C=4: ln 4
    CHECK(conf[2] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    // direct oracle on every row
    Tensor probs = softmax(logits);
    for (int i = 0; i < 3; ++i) {
        double mx = 0.0;
        for (int j = 0; j < 4; ++j) mx = std::max(mx, probs.at(i, j));
        CHECK(conf[static_cast<std::size_t>(i)] ==
              doctest::Approx(-std::log(mx)).epsilon(1e-12));
    }

    Tensor uniform10 = Tensor::zeros({1, 10});
    CHECK(per_sample_confidence(uniform10)[0] ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("EM recovers a well-separated two-cluster mixture") {
    const std::vector<double> losses = bimodal_losses();
    const GmmFit fit = fit_gmm_1d(losses, {});

    CHECK(!fit.degenerate);
    CHECK(std::abs(fit.mean1 - 0.1) < 0.05);
    CHECK(std::abs(fit.mean2 - 5.0) < 0.05);
    CHECK(std::abs(fit.weight1 - 0.5) < 0.05);
    CHECK(std::abs(fit.weight2 - 0.5) < 0.05);
    CHECK(fit.weight1 + fit.weight2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.mean1 <= fit.mean2);
    CHECK(fit.var1 >= 0.0);
    CHECK(fit.var2 >= 0.0);
}

TEST_CASE("EM log-likelihood is non-decreasing") {
    const std::vector<double> losses = bimodal_losses(7);
    const GmmFit fit = fit_gmm_1d(losses, {});
    REQUIRE(fit.log_likelihood_trace.size() >= 2);
    for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i) {
        CHECK(fit.log_likelihood_trace[i] >= fit.log_likelihood_trace[i - 1] - 1e-10);
    }
}

TEST_CASE("responsibilities match the direct Bayes-rule oracle") {
    const std::vector<double> losses = bimodal_losses(3);
    const GmmFit fit = fit_gmm_1d(losses, {});
    for (double x : losses) {
        const double p1 = fit.weight1 * norm_pdf(x, fit.mean1, fit.var1);
        const double p2 = fit.weight2 * norm_pdf(x, fit.mean2, fit.var2);
        const double oracle = p1 / (p1 + p2);
        CHECK(std::abs(posterior_small(fit, x) - oracle) < 1e-10);
    }
}

TEST_CASE("posterior_small analytic geometry") {
    GmmFit fit;
    fit.mean1 = 1.0;
    fit.mean2 = 9.0;
    fit.var1 = fit.var2 = 0.5;
    fit.weight1 = fit.weight2 = 0.5;

    // symmetric fit: midpoint posterior is exactly 1/2
    CHECK(posterior_small(fit, 5.0) == doctest::Approx(0.5).epsilon(1e-12));
    // far below the small mean
    CHECK(posterior_small(fit, 0.0) > 0.999);
    // at the big mean
    CHECK(posterior_small(fit, 9.0) < 0.001);

    fit.degenerate = true;
    CHECK_THROWS_AS(posterior_small(fit, 1.0), DegenerateFit);
}

TEST_CASE("all-equal losses are degenerate and select everything") {
    const std::vector<double> flat(32, 1.25);
    const GmmFit fit = fit_gmm_1d(flat, {});
    CHECK(fit.degenerate);

    const SelectionMask mask = select(flat, {});
    CHECK(mask.count() == 32);
    CHECK(mask.selection_rate == 1.0);
    for (double p : mask.posterior) CHECK(p == 1.0);
}

TEST_CASE("bimodal batch selects exactly the low-loss cluster at tau 0.5") {
    const std::vector<double> losses = bimodal_losses();
    const SelectionMask mask = select(losses, {});
    for (std::size_t i = 0; i < losses.size(); ++i) {
        CHECK(mask.selected[i] == (losses[i] < 2.5));
    }
    CHECK(mask.selection_rate == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tau boundary and monotonicity") {
    const std::vector<double> losses = bimodal_losses(5);

    GmmConfig top;
    top.tau = 1.0;
    CHECK(select(losses, top).count() == 0); // posterior <= 1 never exceeds 1

    // raising tau never admits a sample a lower tau rejected
    const GmmFit fit = fit_gmm_1d(losses, {});
    std::vector<double> taus = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<SelectionMask> masks;
    for (double tau : taus) {
        GmmConfig cfg;
        cfg.tau = tau;
        masks.push_back(select(losses, cfg));
    }
    for (std::size_t t = 1; t < masks.size(); ++t) {
        for (std::size_t i = 0; i < losses.size(); ++i) {
            if (masks[t].selected[i]) CHECK(masks[t - 1].selected[i]);
        }
    }
    (void)fit;
}

TEST_CASE("selection commutes with batch permutation") {
    const std::vector<double> losses = bimodal_losses(11);
    const SelectionMask base = select(losses, {});

    Rng rng(12, 0);
    const std::vector<int> perm = rng.permutation(static_cast<int>(losses.size()));
    std::vector<double> shuffled(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        shuffled[i] = losses[static_cast<std::size_t>(perm[i])];
    }
    const SelectionMask permuted = select(shuffled, {});
    for (std::size_t i = 0; i < losses.size(); ++i) {
        CHECK(permuted.selected[i] == base.selected[static_cast<std::size_t>(perm[i])]);
        CHECK(permuted.posterior[i] ==
              doctest::Approx(base.posterior[static_cast<std::size_t>(perm[i])])
                  .epsilon(1e-12));
    }
}

TEST_CASE("E-step responsibilities are invariant under affine rescaling with "
          "correspondingly rescaled parameters") {
    const std::vector<double> losses = bimodal_losses(13);
    const GmmFit fit = fit_gmm_1d(losses, {});
    const double a = 3.0, b = -1.0;

    GmmFit scaled = fit;
    scaled.mean1 = a * fit.mean1 + b;
    scaled.mean2 = a * fit.mean2 + b;
    scaled.var1 = a * a * fit.var1;
    scaled.var2 = a * a * fit.var2;

    for (double x : losses) {
        CHECK(posterior_small(scaled, a * x + b) ==
              doctest::Approx(posterior_small(fit, x)).epsilon(1e-10));
    }
}

TEST_CASE("batch size preconditions") {
    const std::vector<double> single = {1.0};
    CHECK_THROWS_AS(fit_gmm_1d(single, {}), BatchTooSmall);
    const SelectionMask mask = select(single, {}); // policy: select everything
    CHECK(mask.count() == 1);
}

TEST_SUITE_END();
