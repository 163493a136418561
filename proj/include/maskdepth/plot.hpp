#pragma once

#include <string>
#include <vector>

#include "maskdepth/evaluate.hpp"

namespace maskdepth {

enum class ChartKind { line, bar };

struct ChartSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;  // x, y
};

/// Minimal standalone SVG chart writer: axes, ticks, legend, polylines or
/// bars.
void write_chart_svg(const std::string& path, ChartKind kind, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<ChartSeries>& series);

/// Groups evaluation rows by perturbation; x = level, y = mean rmse over
/// images (region "complete").
std::vector<ChartSeries> chart_series_from_rows(const std::vector<EvalRow>& rows);

/// CSV to SVG in one step, for the CLI plot subcommand.
void plot_csv(const std::string& csv_path, const std::string& svg_path, ChartKind kind,
              const std::string& title);

}  // namespace maskdepth
