#pragma once

// Report rendering: aligned text tables, machine JSON, and SVG accuracy
// curves. Text and JSON carry identical numbers.

#include <filesystem>
#include <string>
#include <vector>

#include "tadfkd/metrics.hpp"

namespace tadfkd {

std::string render_report_text(const RobustnessReport& report);
std::string render_report_json(const RobustnessReport& report);

struct AccuracySeries {
    std::string label;
    std::vector<double> accuracies; // one point per epoch
};

// Line plot, epoch on x and accuracy on y, one polyline per series.
std::string render_accuracy_svg(const std::vector<AccuracySeries>& series);

void write_text_file(const std::filesystem::path& path, const std::string& content);

} // namespace tadfkd
