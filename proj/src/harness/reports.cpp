#include "caps/harness/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace caps::harness {

using nlohmann::json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const metrics::RunStats& s) {
  return {{"runs", s.runs},
          {"completions", s.completions},
          {"completion_rate_percent", s.completion_rate},
          {"avg_lap_time_s", number_or_null(s.avg_lap_time_s)}};
}

json to_json(const metrics::SmoothnessReport& r) {
  return {{"sm_steering", r.sm_steering},
          {"sm_speed", r.sm_speed},
          {"mean_abs_steering_change_deg", r.mean_abs_steering_change},
          {"n_samples", r.n_samples}};
}

std::string format_number(double v, int digits) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string MarkdownTable::render() const {
  std::ostringstream out;
  auto row = [&](const std::vector<std::string>& cells) {
    out << "|";
    for (const auto& c : cells) out << " " << c << " |";
    out << "\n";
  };
  row(header);
  out << "|";
  for (std::size_t i = 0; i < header.size(); ++i) out << "---|";
  out << "\n";
  for (const auto& r : rows) row(r);
  return out.str();
}

namespace {

constexpr double kWidth = 720, kHeight = 320, kLeft = 60, kRight = 20, kTop = 36, kBottom = 44;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kHeight - kTop - kBottom); }
};

std::string axes(const Frame& f, const std::string& title, const std::string& x_label) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << escape(title) << "</text>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
    << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << kHeight - kBottom + 14 << "\" text-anchor=\"middle\">"
      << num(xv) << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n";
  return o.str();
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  Frame f{0, 1, -1, 1};
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        f = {s.x[i], s.x[i], s.y[i], s.y[i]};
        first = false;
      }
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  std::ostringstream o;
  o << axes(f, title, x_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << kColors[k % 4] << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << num(f.px(s.x[i])) << "," << num(f.py(s.y[i])) << " ";
    o << "\"/>\n";
    o << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << kTop + 12 * (k + 1) << "\" text-anchor=\"end\" fill=\""
      << kColors[k % 4] << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_stem_plot(const std::string& title, const std::vector<metrics::SpectrumBin>& bins) {
  Frame f{0, 1, 0, 1};
  if (!bins.empty()) {
    f.x1 = bins.back().frequency;
    double top = 0.0;
    for (const auto& b : bins) top = std::max(top, b.amplitude);
    f.y1 = top > 0.0 ? top : 1.0;
  }
  std::ostringstream o;
  o << axes(f, title, "frequency (Hz)");
  for (const auto& b : bins) {
    const double x = f.px(b.frequency);
    o << "<line x1=\"" << num(x) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(x) << "\" y2=\""
      << num(f.py(b.amplitude)) << "\" stroke=\"" << kColors[0] << "\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace caps::harness
