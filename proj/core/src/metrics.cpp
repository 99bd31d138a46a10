#include "tadfkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tadfkd {

double accuracy(const Network& model, const Tensor& x, std::span<const int> y) {
    if (y.empty() || x.rows() == 0) throw EmptyDataset("accuracy: empty dataset");
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw ShapeMismatch("accuracy: feature rows and labels disagree");
    }
    Tensor logits = classifier_forward(model, x, ForwardMode::eval);
    const std::vector<int> pred = argmax_rows(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        correct += pred[i] == y[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

double accuracy(const Network& model, const EvalView& data) {
    const std::vector<int> y = data.y();
    return accuracy(model, data.x(), y);
}

double acc_max(const RunRecord& run) {
    const std::vector<double> accs = run.epoch_accuracies();
    if (accs.empty()) throw KTooLarge("acc_max: run has no epochs");
    return *std::max_element(accs.begin(), accs.end());
}

double acc_last_k(const RunRecord& run, int k) {
    const std::vector<double> accs = run.epoch_accuracies();
    if (k < 1 || static_cast<std::size_t>(k) > accs.size()) {
        throw KTooLarge("acc_last_k: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(accs.size()) + " epochs");
    }
    double sum = 0.0;
    for (std::size_t i = accs.size() - static_cast<std::size_t>(k); i < accs.size(); ++i) {
        sum += accs[i];
    }
    return sum / static_cast<double>(k);
}

DiversityScore diversity_score(const Tensor& samples, const Network& teacher) {
    const int n = samples.rows();
    if (n < 2) throw BatchTooSmall("diversity_score: need at least 2 samples");

    DiversityScore score;

    Tensor features = penultimate_features(teacher, samples);
    const int fd = features.cols();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double sq = 0.0;
            for (int c = 0; c < fd; ++c) {
                const double d = features.at(i, c) - features.at(j, c);
                sq += d * d;
            }
            total += std::sqrt(sq);
        }
    }
    score.feature_spread = total / (static_cast<double>(n) * (n - 1) / 2.0);

    Tensor logits = classifier_forward(teacher, samples, ForwardMode::eval);
    const std::vector<int> pred = argmax_rows(logits);
    std::vector<int> hist(static_cast<std::size_t>(teacher.output_width()), 0);
    for (int p : pred) hist[static_cast<std::size_t>(p)] += 1;
    double entropy = 0.0;
    for (int count : hist) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) / static_cast<double>(n);
        entropy -= p * std::log(p);
    }
    score.class_entropy = entropy;
    return score;
}

RobustnessReport robustness_report(std::span<const RunSummary> runs,
                                   std::span<const std::string> teachers,
                                   std::span<const std::string> methods, int k) {
    std::set<std::tuple<std::string, std::string, std::uint64_t>> seen;
    for (const RunSummary& r : runs) {
        if (!seen.insert({r.teacher, r.method, r.seed}).second) {
            throw InvalidSpec("robustness_report: duplicate run " + r.teacher + "/" +
                              r.method + "/seed " + std::to_string(r.seed));
        }
    }

    RobustnessReport report;
    report.k = k;
    for (const std::string& teacher : teachers) {
        std::vector<RobustnessRow> teacher_rows;
        for (const std::string& method : methods) {
            std::vector<const RunSummary*> group;
            for (const RunSummary& r : runs) {
                if (r.teacher == teacher && r.method == method) group.push_back(&r);
            }
            if (group.empty()) {
                throw MissingGroup("robustness_report: no runs for " + teacher + "/" + method);
            }
            // Seed order must not matter.
            std::sort(group.begin(), group.end(),
                      [](const RunSummary* a, const RunSummary* b) { return a->seed < b->seed; });

            RobustnessRow row;
            row.teacher = teacher;
            row.method = method;
            row.teacher_accuracy = group.front()->teacher_accuracy;
            row.runs = static_cast<int>(group.size());
            double last_sum = 0.0;
            for (const RunSummary* r : group) {
                row.acc_max = std::max(row.acc_max, r->acc_max);
                last_sum += r->acc_last;
            }
            row.acc_last_mean = last_sum / static_cast<double>(group.size());
            if (group.size() > 1) {
                double ss = 0.0;
                for (const RunSummary* r : group) {
                    const double d = r->acc_last - row.acc_last_mean;
                    ss += d * d;
                }
                row.acc_last_sd = std::sqrt(ss / static_cast<double>(group.size() - 1));
            }
            row.teacher_gap = row.teacher_accuracy - row.acc_max;
            row.stability_gap = row.acc_max - row.acc_last_mean;
            teacher_rows.push_back(std::move(row));
        }
        std::stable_sort(teacher_rows.begin(), teacher_rows.end(),
                         [](const RobustnessRow& a, const RobustnessRow& b) {
                             return a.acc_last_mean > b.acc_last_mean;
                         });
        for (RobustnessRow& row : teacher_rows) report.rows.push_back(std::move(row));
    }
    return report;
}

} // namespace tadfkd
