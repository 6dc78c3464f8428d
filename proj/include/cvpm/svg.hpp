#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cvpm/simulation.hpp"

namespace cvpm {

/// Minimal SVG emitter: lines, rectangles, polylines, text. Fixed-precision
/// output keeps repeated runs byte-identical.
class SvgWriter {
 public:
  SvgWriter(double width, double height) : width_(width), height_(height) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width, const std::string& dash = "") {
    body_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
          << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
          << fmt(stroke_width) << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill, double opacity,
            const std::string& stroke = "none") {
    body_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w)
          << "\" height=\"" << fmt(h) << "\" fill=\"" << fill << "\" fill-opacity=\""
          << fmt(opacity) << "\" stroke=\"" << stroke << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double stroke_width) {
    if (pts.empty()) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
          << fmt(stroke_width) << "\" points=\"";
    for (const auto& [x, y] : pts) body_ << fmt(x) << "," << fmt(y) << " ";
    body_ << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size,
            const std::string& fill = "#333333") {
    body_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << fmt(size)
          << "\" font-family=\"sans-serif\" fill=\"" << fill << "\">" << s << "</text>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width_) << "\" height=\""
        << fmt(height_) << "\" viewBox=\"0 0 " << fmt(width_) << " " << fmt(height_) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
  }

  double width_, height_;
  std::ostringstream body_;
};

inline const char* branch_color(Branch b) {
  switch (b) {
    case Branch::smpc_safe: return "#1f77b4";
    case Branch::cvpm_robust: return "#ff7f0e";
    case Branch::cvpm_prob: return "#d62728";
    default: return "#9467bd";
  }
}

/// Top-down (s, d) plot of a closed-loop run: road band with lane markings, the
/// ego path colored by the active branch, obstacle footprints at sampled times.
inline std::string trajectory_svg(const SimulationTrace& trace, const Scenario& sc) {
  const double W = 900.0, H = 320.0, pad = 45.0;

  double s_min = 1e300, s_max = -1e300;
  for (const auto& st : trace.steps) {
    s_min = std::min({s_min, st.ego.s});
    s_max = std::max({s_max, st.ego.s});
    for (const auto& o : st.obstacles) {
      s_min = std::min(s_min, o.s);
      s_max = std::max(s_max, o.s);
    }
  }
  if (trace.steps.empty()) {
    s_min = 0;
    s_max = 1;
  }
  s_min -= 8.0;
  s_max += 8.0;
  const double d_lo = sc.road.d_min() - 1.0, d_hi = sc.road.d_max() + 1.0;
  const double sx = (W - 2 * pad) / (s_max - s_min);
  const double sy = (H - 2 * pad) / (d_hi - d_lo);
  auto X = [&](double s) { return pad + (s - s_min) * sx; };
  auto Y = [&](double d) { return H - pad - (d - d_lo) * sy; };  // left lanes up

  SvgWriter svg(W, H);
  svg.rect(X(s_min), Y(sc.road.d_max()), (s_max - s_min) * sx,
           (sc.road.d_max() - sc.road.d_min()) * sy, "#f2f2f2", 1.0);
  for (int lane = 0; lane <= sc.road.lane_count; ++lane) {
    const double d = sc.road.d_min() + lane * sc.road.lane_width;
    const bool edge = lane == 0 || lane == sc.road.lane_count;
    svg.line(X(s_min), Y(d), X(s_max), Y(d), edge ? "#555555" : "#bbbbbb", edge ? 1.5 : 1.0,
             edge ? "" : "8,6");
  }

  const int n_obs = trace.steps.empty() ? 0 : static_cast<int>(trace.steps.front().obstacles.size());
  const int stride = std::max(1, static_cast<int>(trace.steps.size()) / 6);
  for (int i = 0; i < n_obs; ++i) {
    const auto& geom = sc.obstacles[i].obstacle.model.geometry;
    std::vector<std::pair<double, double>> path;
    for (size_t t = 0; t < trace.steps.size(); ++t) {
      const auto& o = trace.steps[t].obstacles[i];
      path.emplace_back(X(o.s), Y(o.d));
      if (t % stride == 0 || t + 1 == trace.steps.size()) {
        const double op = 0.15 + 0.45 * static_cast<double>(t) / trace.steps.size();
        svg.rect(X(o.s - 0.5 * geom.length), Y(o.d + 0.5 * geom.width), geom.length * sx,
                 geom.width * sy, "#777777", op);
      }
    }
    svg.polyline(path, "#aaaaaa", 1.0);
  }

  for (size_t t = 0; t + 1 < trace.steps.size(); ++t) {
    const auto& a = trace.steps[t];
    const auto& b = trace.steps[t + 1];
    svg.line(X(a.ego.s), Y(a.ego.d), X(b.ego.s), Y(b.ego.d), branch_color(a.trace.branch), 2.5);
  }
  if (!trace.steps.empty()) {
    const auto& geom = sc.planner.vehicle.geometry;
    for (size_t t = 0; t < trace.steps.size(); t += stride) {
      const auto& e = trace.steps[t].ego;
      svg.rect(X(e.s - 0.5 * geom.length), Y(e.d + 0.5 * geom.width), geom.length * sx,
               geom.width * sy, "#c62828", 0.35);
    }
    const auto& e = trace.steps.back().ego;
    svg.rect(X(e.s - 0.5 * geom.length), Y(e.d + 0.5 * geom.width), geom.length * sx,
             geom.width * sy, "#c62828", 0.85);
  }

  double lx = pad, ly = 16.0;
  svg.text(lx, ly, trace.scenario_id + " / " + trace.scheme, 13.0);
  lx += 300.0;
  for (Branch b : {Branch::smpc_safe, Branch::cvpm_robust, Branch::cvpm_prob,
                   Branch::ftp_backup}) {
    svg.line(lx, ly - 4, lx + 22, ly - 4, branch_color(b), 3.0);
    svg.text(lx + 26, ly, branch_name(b), 11.0);
    lx += 120.0;
  }
  return svg.str();
}

inline void save_trajectory_svg(const SimulationTrace& trace, const Scenario& sc,
                                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_trajectory_svg: cannot write " + path.string());
  out << trajectory_svg(trace, sc);
}

}  // namespace cvpm
