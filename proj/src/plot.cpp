#include "maskdepth/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace maskdepth {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 150;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace

std::vector<ChartSeries> chart_series_from_rows(const std::vector<EvalRow>& rows) {
    // (perturbation, level) -> running mean of rmse over complete-region rows
    std::map<std::string, std::map<double, std::pair<double, int64_t>>> acc;
    for (const auto& r : rows) {
        if (r.region != "complete") continue;
        auto& slot = acc[r.perturbation][r.level];
        slot.first += r.metrics.rmse;
        slot.second += 1;
    }
    std::vector<ChartSeries> series;
    for (const auto& [name, by_level] : acc) {
        ChartSeries s;
        s.label = name;
        for (const auto& [level, sum_count] : by_level) {
            s.points.emplace_back(level, sum_count.first / sum_count.second);
        }
        series.push_back(std::move(s));
    }
    return series;
}

void write_chart_svg(const std::string& path, ChartKind kind, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<ChartSeries>& series) {
    if (series.empty()) throw std::invalid_argument("chart needs at least one series");
    double x_min = 1e300, x_max = -1e300, y_min = 0.0, y_max = -1e300;
    int64_t total_points = 0;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_max = std::max(y_max, y);
            ++total_points;
        }
    }
    if (total_points == 0) throw std::invalid_argument("chart has no points");
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max <= y_min) y_max = y_min + 1.0;
    y_max *= 1.05;

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto px = [&](double x) { return kMarginLeft + (x - x_min) / (x_max - x_min) * plot_w; };
    auto py = [&](double y) { return kMarginTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };

    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open svg for writing: " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";

    // axes
    f << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
      << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
      << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double ty = y_min + (y_max - y_min) * tick / 4.0;
        f << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << py(ty) + 4
          << "\" text-anchor=\"end\">" << fmt(ty) << "</text>\n";
        f << "<line x1=\"" << kMarginLeft - 3 << "\" y1=\"" << py(ty) << "\" x2=\""
          << kMarginLeft << "\" y2=\"" << py(ty) << "\" stroke=\"black\"/>\n";
    }
    for (int tick = 0; tick <= 4; ++tick) {
        const double tx = x_min + (x_max - x_min) * tick / 4.0;
        f << "<text x=\"" << px(tx) << "\" y=\"" << kMarginTop + plot_h + 18
          << "\" text-anchor=\"middle\">" << fmt(tx) << "</text>\n";
    }
    f << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    f << "<text x=\"16\" y=\"" << kMarginTop + plot_h / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kMarginTop + plot_h / 2
      << ")\">" << y_label << "</text>\n";

    const double bar_group = plot_w / std::max<size_t>(total_points, 1);
    size_t bar_index = 0;
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % 10];
        if (kind == ChartKind::line) {
            std::ostringstream pts;
            for (const auto& [x, y] : s.points) pts << px(x) << ',' << py(y) << ' ';
            f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
              << pts.str() << "\"/>\n";
            for (const auto& [x, y] : s.points) {
                f << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\""
                  << color << "\"/>\n";
            }
        } else {
            for (const auto& [x, y] : s.points) {
                const double bx = kMarginLeft + bar_group * bar_index + bar_group * 0.1;
                const double bw = bar_group * 0.8;
                f << "<rect x=\"" << bx << "\" y=\"" << py(y) << "\" width=\"" << bw
                  << "\" height=\"" << kMarginTop + plot_h - py(y) << "\" fill=\"" << color
                  << "\"/>\n";
                f << "<text x=\"" << bx + bw / 2 << "\" y=\"" << kMarginTop + plot_h + 18
                  << "\" text-anchor=\"middle\" font-size=\"9\">" << s.label << ":" << fmt(x)
                  << "</text>\n";
                ++bar_index;
            }
        }
        const double ly = kMarginTop + 16.0 * si;
        f << "<rect x=\"" << kWidth - kMarginRight + 10 << "\" y=\"" << ly - 9
          << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        f << "<text x=\"" << kWidth - kMarginRight + 25 << "\" y=\"" << ly << "\">" << s.label
          << "</text>\n";
    }
    f << "</svg>\n";
    if (!f) throw std::runtime_error("svg write failed: " + path);
}

void plot_csv(const std::string& csv_path, const std::string& svg_path, ChartKind kind,
              const std::string& title) {
    const auto rows = read_csv(csv_path);
    const auto series = chart_series_from_rows(rows);
    write_chart_svg(svg_path, kind, title, kind == ChartKind::line ? "severity / epsilon" : "",
                    "RMSE", series);
}

}  // namespace maskdepth
