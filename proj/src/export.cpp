#include "dslam/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dslam {

namespace {

constexpr double kOccupiedThresh = 0.65;
constexpr double kFreeThresh = 0.196;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

}  // namespace

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  open_out(path) << content;
}

void write_pgm(const OccupancyGrid& map, const std::string& path) {
  const GridGeom& geom = map.geom();
  std::ofstream out = open_out(path);
  out << "P5\n" << geom.width << " " << geom.height << "\n255\n";
  std::string row(geom.width, '\0');
  for (int r = geom.height - 1; r >= 0; r--) {
    for (int c = 0; c < geom.width; c++) {
      unsigned char v = 205;
      if (map.known(r, c)) {
        const double p = map.probability(r, c);
        if (p >= kOccupiedThresh)
          v = 0;
        else if (p <= kFreeThresh)
          v = 254;
      }
      row[c] = static_cast<char>(v);
    }
    out.write(row.data(), row.size());
  }

  nlohmann::ordered_json meta;
  meta["resolution"] = geom.resolution;
  meta["origin"] = {geom.origin.x, geom.origin.y};
  meta["occupied_thresh"] = kOccupiedThresh;
  meta["free_thresh"] = kFreeThresh;
  open_out(path + ".meta.json") << meta.dump(1) << "\n";
}

void write_trajectory(const std::string& path, const std::vector<TrajectoryPoint>& traj) {
  std::ofstream out = open_out(path);
  char line[200];
  for (const TrajectoryPoint& p : traj) {
    const double qz = std::sin(p.pose.theta / 2.0);
    const double qw = std::cos(p.pose.theta / 2.0);
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f\n", p.t, p.pose.x,
                  p.pose.y, 0.0, 0.0, 0.0, qz, qw);
    out << line;
  }
}

std::vector<TrajectoryPoint> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<TrajectoryPoint> traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, x, y, z, qx, qy, qz, qw;
    if (!(ss >> t >> x >> y >> z >> qx >> qy >> qz >> qw))
      throw std::runtime_error("malformed trajectory line in " + path);
    TrajectoryPoint p;
    p.t = t;
    p.pose = {x, y, 2.0 * std::atan2(qz, qw)};
    p.pose.theta = normalize_angle(p.pose.theta);
    traj.push_back(p);
  }
  return traj;
}

namespace {

struct Range {
  double lo = 0.0, hi = 1.0;

  double clamp_span() const { return hi - lo; }
};

Range span_of(const std::vector<const std::vector<double>*>& arrays) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* a : arrays)
    for (double v : *a) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  return {lo, hi};
}

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string f4g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label, bool band) {
  if (series.empty()) throw std::invalid_argument("write_svg_plot: no series");
  constexpr double w = 800, h = 500, ml = 70, mr = 20, mt = 45, mb = 55;
  const double pw = w - ml - mr, ph = h - mt - mb;

  bool banded = band && series.size() >= 2;
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw std::invalid_argument("write_svg_plot: malformed series");
    if (s.x.size() != series[0].x.size() || s.x != series[0].x) banded = false;
  }

  std::vector<const std::vector<double>*> xs, ys;
  for (const PlotSeries& s : series) {
    xs.push_back(&s.x);
    ys.push_back(&s.y);
  }
  const Range rx = span_of(xs);

  std::vector<double> mean, sd;
  if (banded) {
    const size_t n = series[0].x.size();
    mean.assign(n, 0.0);
    sd.assign(n, 0.0);
    for (size_t i = 0; i < n; i++) {
      for (const PlotSeries& s : series) mean[i] += s.y[i];
      mean[i] /= series.size();
      for (const PlotSeries& s : series) sd[i] += (s.y[i] - mean[i]) * (s.y[i] - mean[i]);
      sd[i] = std::sqrt(sd[i] / series.size());
    }
  }
  std::vector<double> band_lo, band_hi;
  if (banded) {
    for (size_t i = 0; i < mean.size(); i++) {
      band_lo.push_back(mean[i] - sd[i]);
      band_hi.push_back(mean[i] + sd[i]);
    }
    ys.push_back(&band_lo);
    ys.push_back(&band_hi);
  }
  const Range ry = span_of(ys);

  const auto px = [&](double v) { return ml + (v - rx.lo) / rx.clamp_span() * pw; };
  const auto py = [&](double v) { return mt + ph - (v - ry.lo) / ry.clamp_span() * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << w << " " << h
      << "\" font-family=\"monospace\" font-size=\"13\">\n";
  svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";

  for (int i = 0; i <= 5; i++) {
    const double fx = rx.lo + rx.clamp_span() * i / 5.0;
    const double fy = ry.lo + ry.clamp_span() * i / 5.0;
    const double gx = px(fx), gy = py(fy);
    svg << "<line x1=\"" << f2(gx) << "\" y1=\"" << mt << "\" x2=\"" << f2(gx) << "\" y2=\""
        << mt + ph << "\" stroke=\"#dddddd\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << f2(gy) << "\" x2=\"" << ml + pw << "\" y2=\""
        << f2(gy) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << f2(gx) << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\">" << f4g(fx) << "</text>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << f2(gy + 4)
        << "\" text-anchor=\"end\">" << f4g(fy) << "</text>\n";
  }
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">"
      << x_label << "</text>\n";
  svg << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">"
      << y_label << "</text>\n";

  const auto polyline = [&](const std::vector<double>& x, const std::vector<double>& y,
                            const char* color, const char* width) {
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
        << "\" points=\"";
    for (size_t i = 0; i < x.size(); i++)
      svg << f2(px(x[i])) << "," << f2(py(y[i])) << (i + 1 < x.size() ? " " : "");
    svg << "\"/>\n";
  };

  if (banded) {
    svg << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
    const auto& x = series[0].x;
    for (size_t i = 0; i < x.size(); i++) svg << f2(px(x[i])) << "," << f2(py(band_hi[i])) << " ";
    for (size_t i = x.size(); i-- > 0;)
      svg << f2(px(x[i])) << "," << f2(py(band_lo[i])) << (i > 0 ? " " : "");
    svg << "\"/>\n";
    polyline(series[0].x, mean, kPalette[0], "2");
    svg << "<text x=\"" << ml + pw - 8 << "\" y=\"" << mt + 18 << "\" text-anchor=\"end\">mean of "
        << series.size() << " runs &#177;1 std</text>\n";
  } else {
    for (size_t s = 0; s < series.size(); s++) {
      polyline(series[s].x, series[s].y, kPalette[s % 6], "1.5");
      svg << "<text x=\"" << ml + pw - 8 << "\" y=\"" << mt + 18 + 16 * s
          << "\" text-anchor=\"end\" fill=\"" << kPalette[s % 6] << "\">" << series[s].label
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
  write_text(path, svg.str());
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::ordered_json& resolved_config) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["code_version"] = kCodeVersion;
  m["config"] = resolved_config;
  open_out(out_dir + "/manifest.json") << m.dump(1) << "\n";
}

}  // namespace dslam
