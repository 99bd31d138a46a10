#include "tadfkd/report_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tadfkd/format.hpp"

namespace tadfkd {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

} // namespace

std::string render_report_text(const RobustnessReport& report) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"teacher", "method", "teacher_acc", "acc_max",
                     "acc_last[" + std::to_string(report.k) + "]", "sd", "teacher_gap",
                     "stability_gap", "runs"});
    for (const RobustnessRow& r : report.rows) {
        cells.push_back({r.teacher, r.method, fmt_fixed(r.teacher_accuracy, 4),
                         fmt_fixed(r.acc_max, 4), fmt_fixed(r.acc_last_mean, 4),
                         fmt_fixed(r.acc_last_sd, 4), fmt_fixed(r.teacher_gap, 4),
                         fmt_fixed(r.stability_gap, 4), std::to_string(r.runs)});
    }
    std::vector<std::size_t> widths(cells[0].size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());

    std::ostringstream os;
    for (std::size_t ri = 0; ri < cells.size(); ++ri) {
        for (std::size_t c = 0; c < cells[ri].size(); ++c) {
            os << pad(cells[ri][c], widths[c]) << (c + 1 < cells[ri].size() ? "  " : "");
        }
        os << '\n';
        if (ri == 0) {
            std::size_t total = 0;
            for (std::size_t wdt : widths) total += wdt;
            os << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
        }
    }
    return os.str();
}

std::string render_report_json(const RobustnessReport& report) {
    nlohmann::json doc;
    doc["k"] = report.k;
    nlohmann::json rows = nlohmann::json::array();
    for (const RobustnessRow& r : report.rows) {
        rows.push_back({{"teacher", r.teacher},
                        {"method", r.method},
                        {"teacher_accuracy", r.teacher_accuracy},
                        {"acc_max", r.acc_max},
                        {"acc_last_mean", r.acc_last_mean},
                        {"acc_last_sd", r.acc_last_sd},
                        {"teacher_gap", r.teacher_gap},
                        {"stability_gap", r.stability_gap},
                        {"runs", r.runs}});
    }
    doc["rows"] = std::move(rows);
    return doc.dump(2) + "\n";
}

std::string render_accuracy_svg(const std::vector<AccuracySeries>& series) {
    constexpr int kWidth = 720, kHeight = 420;
    constexpr int kLeft = 60, kRight = 170, kTop = 20, kBottom = 45;
    const int plot_w = kWidth - kLeft - kRight;
    const int plot_h = kHeight - kTop - kBottom;

    std::size_t max_epochs = 1;
    for (const AccuracySeries& s : series) max_epochs = std::max(max_epochs, s.accuracies.size());

    auto x_of = [&](std::size_t epoch) {
        const double t = max_epochs > 1
                             ? static_cast<double>(epoch) / static_cast<double>(max_epochs - 1)
                             : 0.0;
        return kLeft + t * plot_w;
    };
    auto y_of = [&](double acc) { return kTop + (1.0 - acc) * plot_h; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
       << (kTop + plot_h) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << (kTop + plot_h) << "\" x2=\""
       << (kLeft + plot_w) << "\" y2=\"" << (kTop + plot_h) << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 10; tick += 2) {
        const double acc = tick / 10.0;
        os << "<text x=\"" << (kLeft - 8) << "\" y=\"" << fmt_fixed(y_of(acc) + 4, 1)
           << "\" text-anchor=\"end\" font-size=\"11\">" << fmt_fixed(acc, 1) << "</text>\n";
        os << "<line x1=\"" << (kLeft - 4) << "\" y1=\"" << fmt_fixed(y_of(acc), 1) << "\" x2=\""
           << kLeft << "\" y2=\"" << fmt_fixed(y_of(acc), 1) << "\" stroke=\"black\"/>\n";
    }
    os << "<text x=\"" << (kLeft + plot_w / 2) << "\" y=\"" << (kHeight - 10)
       << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
    os << "<text x=\"16\" y=\"" << (kTop + plot_h / 2)
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (kTop + plot_h / 2) << ")\">accuracy</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const AccuracySeries& s = series[si];
        if (s.accuracies.empty()) continue;
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t e = 0; e < s.accuracies.size(); ++e) {
            os << fmt_fixed(x_of(e), 2) << ',' << fmt_fixed(y_of(s.accuracies[e]), 2)
               << (e + 1 < s.accuracies.size() ? " " : "");
        }
        os << "\"/>\n";
        const double ly = kTop + 14.0 * static_cast<double>(si + 1);
        os << "<line x1=\"" << (kLeft + plot_w + 10) << "\" y1=\"" << fmt_fixed(ly - 4, 1)
           << "\" x2=\"" << (kLeft + plot_w + 30) << "\" y2=\"" << fmt_fixed(ly - 4, 1)
           << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        os << "<text x=\"" << (kLeft + plot_w + 35) << "\" y=\"" << fmt_fixed(ly, 1)
           << "\" font-size=\"11\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_text_file: cannot open " + path.string());
    out << content;
    if (!out) throw IoError("write_text_file: write failed for " + path.string());
}

} // namespace tadfkd
