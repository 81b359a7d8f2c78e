#pragma once

#include <string>
#include <vector>

#include "caps/metrics/metrics.hpp"
#include "json.hpp"

namespace caps::harness {

// NaN and infinities map to null.
nlohmann::json number_or_null(double v);
nlohmann::json to_json(const metrics::RunStats& s);
nlohmann::json to_json(const metrics::SmoothnessReport& r);

// Fixed-point with `digits` decimals; NaN prints as "NaN".
std::string format_number(double v, int digits);

struct MarkdownTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string render() const;
};

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Line plot of one or more series sharing axes.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<Series>& series);
// Stem plot of an amplitude spectrum.
std::string svg_stem_plot(const std::string& title, const std::vector<metrics::SpectrumBin>& bins);

void write_text(const std::string& path, const std::string& text);

}  // namespace caps::harness
