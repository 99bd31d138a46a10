#pragma once

// Evaluation metrics: classification accuracy, peak and converging
// accuracy per run, cross-teacher robustness aggregation, and a
// dependency-free diversity diagnostic over teacher features.

#include <span>
#include <string>
#include <vector>

#include "tadfkd/data.hpp"
#include "tadfkd/distill.hpp"
#include "tadfkd/network.hpp"

namespace tadfkd {

// Fraction of argmax-correct predictions (eval mode, ties to the lowest
// class index).
double accuracy(const Network& model, const Tensor& x, std::span<const int> y);
double accuracy(const Network& model, const EvalView& data);

// Peak epoch accuracy of a run.
double acc_max(const RunRecord& run);
// Mean accuracy over the final k epochs.
double acc_last_k(const RunRecord& run, int k);

struct DiversityScore {
    double feature_spread = 0.0; // mean pairwise distance of teacher features
    double class_entropy = 0.0;  // entropy of the predicted-class histogram
};

DiversityScore diversity_score(const Tensor& samples, const Network& teacher);

// One distillation run, reduced to what the report needs.
struct RunSummary {
    std::string teacher;
    std::string method;
    std::uint64_t seed = 0;
    double teacher_accuracy = 0.0;
    double acc_max = 0.0;
    double acc_last = 0.0;       // acc_last[k] for the report's k
    double final_class_entropy = 0.0;
    double final_feature_spread = 0.0;
};

struct RobustnessRow {
    std::string teacher;
    std::string method;
    double teacher_accuracy = 0.0;
    double acc_max = 0.0;        // peak over the group's runs
    double acc_last_mean = 0.0;
    double acc_last_sd = 0.0;    // sample standard deviation (n-1)
    double teacher_gap = 0.0;    // teacher_accuracy - acc_max
    double stability_gap = 0.0;  // acc_max - acc_last_mean
    int runs = 0;
};

struct RobustnessReport {
    int k = 0;
    std::vector<RobustnessRow> rows; // per teacher, methods ranked by acc_last_mean
};

// Aggregates runs per (teacher, method); every expected group must be
// present (MissingGroup otherwise) and no (teacher, method, seed) may
// repeat. Row order is independent of the order runs come in.
RobustnessReport robustness_report(std::span<const RunSummary> runs,
                                   std::span<const std::string> teachers,
                                   std::span<const std::string> methods, int k);

} // namespace tadfkd
