#include "tadfkd/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tadfkd {

namespace {

// Smallest admissible mixture density / responsibility mass.
constexpr double kTiny = 1e-300;

double gaussian_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

} // namespace

std::size_t SelectionMask::count() const {
    return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
}

std::vector<double> per_sample_confidence(const Tensor& teacher_logits) {
    Tensor probs = softmax(teacher_logits.detached());
    const int batch = probs.shape[0];
    const int c = probs.shape[1];
    std::vector<double> out(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
        double mx = probs.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, probs.at(i, j));
        out[static_cast<std::size_t>(i)] = -std::log(std::max(mx, kEps));
    }
    return out;
}

GmmFit fit_gmm_1d(std::span<const double> losses, const GmmConfig& cfg) {
    const std::size_t n = losses.size();
    if (n < 2) {
        throw BatchTooSmall("fit_gmm_1d: need at least 2 points, got " + std::to_string(n));
    }

    double mean = 0.0;
    for (double x : losses) mean += x;
    mean /= static_cast<double>(n);
    double svar = 0.0;
    for (double x : losses) svar += (x - mean) * (x - mean);
    svar /= static_cast<double>(n - 1);

    GmmFit fit;
    if (svar < cfg.variance_floor) {
        fit.mean1 = fit.mean2 = mean;
        fit.var1 = fit.var2 = cfg.variance_floor;
        fit.degenerate = true;
        return fit;
    }

    const auto [mn, mx] = std::minmax_element(losses.begin(), losses.end());
    fit.mean1 = *mn;
    fit.mean2 = *mx;
    fit.var1 = fit.var2 = svar;
    fit.weight1 = fit.weight2 = 0.5;

    std::vector<double> resp2(n); // responsibility of the big component
    double prev_ll = 0.0;
    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        // E-step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p1 = fit.weight1 * gaussian_pdf(losses[i], fit.mean1, fit.var1);
            const double p2 = fit.weight2 * gaussian_pdf(losses[i], fit.mean2, fit.var2);
            const double denom = std::max(p1 + p2, kTiny);
            resp2[i] = p2 / denom;
            ll += std::log(denom);
        }
        fit.log_likelihood_trace.push_back(ll);
        fit.log_likelihood = ll;
        fit.iterations = iter;
        if (iter > 1 && std::abs(ll - prev_ll) < cfg.tolerance) break;
        prev_ll = ll;

        // M-step
        double mass2 = 0.0;
        for (double r : resp2) mass2 += r;
        const double mass1 = static_cast<double>(n) - mass2;
        if (mass1 < kTiny || mass2 < kTiny) {
            fit.degenerate = true;
            break;
        }
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            m1 += (1.0 - resp2[i]) * losses[i];
            m2 += resp2[i] * losses[i];
        }
        m1 /= mass1;
        m2 /= mass2;
        double v1 = 0.0, v2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            v1 += (1.0 - resp2[i]) * (losses[i] - m1) * (losses[i] - m1);
            v2 += resp2[i] * (losses[i] - m2) * (losses[i] - m2);
        }
        fit.mean1 = m1;
        fit.mean2 = m2;
        fit.var1 = std::max(v1 / mass1, cfg.variance_floor);
        fit.var2 = std::max(v2 / mass2, cfg.variance_floor);
        fit.weight1 = mass1 / static_cast<double>(n);
        fit.weight2 = mass2 / static_cast<double>(n);
    }

    if (fit.mean1 > fit.mean2) {
        std::swap(fit.mean1, fit.mean2);
        std::swap(fit.var1, fit.var2);
        std::swap(fit.weight1, fit.weight2);
    }
    if (std::abs(fit.mean2 - fit.mean1) < 1e-9) fit.degenerate = true;
    return fit;
}

double posterior_small(const GmmFit& fit, double loss_value) {
    if (fit.degenerate) {
        throw DegenerateFit("posterior_small: fit is degenerate");
    }
    const double p1 = fit.weight1 * gaussian_pdf(loss_value, fit.mean1, fit.var1);
    const double p2 = fit.weight2 * gaussian_pdf(loss_value, fit.mean2, fit.var2);
    return p1 / std::max(p1 + p2, kTiny);
}

SelectionMask select(std::span<const double> losses, const GmmConfig& cfg) {
    const std::size_t n = losses.size();
    if (n < 2) return select_all(n);

    GmmFit fit = fit_gmm_1d(losses, cfg);
    if (fit.degenerate) return select_all(n);

    SelectionMask mask;
    mask.selected.resize(n);
    mask.posterior.resize(n);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mask.posterior[i] = posterior_small(fit, losses[i]);
        mask.selected[i] = mask.posterior[i] > cfg.tau;
        kept += mask.selected[i] ? 1 : 0;
    }
    mask.selection_rate = static_cast<double>(kept) / static_cast<double>(n);
    return mask;
}

SelectionMask select_all(std::size_t batch) {
    SelectionMask mask;
    mask.selected.assign(batch, true);
    mask.posterior.assign(batch, 1.0);
    mask.selection_rate = batch > 0 ? 1.0 : 0.0;
    return mask;
}

} // namespace tadfkd
