#include "tfa/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tfa/error.hpp"

namespace tfa {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string range_comment(const HeatmapRange& r, ColorMap map) {
  return std::string("range ") + fmt(r.lo) + " " + fmt(r.hi) + " colormap " +
         (map == ColorMap::kGray ? "gray" : "diverging");
}

}  // namespace

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
  auto out = open_out(path);
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << fmt(m(r, c));
    out << '\n';
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

HeatmapRange auto_range(const Eigen::MatrixXd& m, ColorMap map) {
  if (m.size() == 0) return {};
  if (map == ColorMap::kDiverging) {
    double a = m.cwiseAbs().maxCoeff();
    if (a == 0.0) a = 1.0;
    return {-a, a};
  }
  double lo = m.minCoeff();
  double hi = m.maxCoeff();
  if (hi == lo) hi = lo + 1.0;
  return {lo, hi};
}

Rgb heat_color(double value, const HeatmapRange& range, ColorMap map) {
  double span = range.hi - range.lo;
  double u = span > 0.0 ? (value - range.lo) / span : 0.5;
  if (!std::isfinite(u)) u = 0.5;
  u = std::clamp(u, 0.0, 1.0);
  auto level = [](double x) { return static_cast<int>(std::lround(255.0 * x)); };
  if (map == ColorMap::kGray) {
    int g = level(u);
    return {g, g, g};
  }
  // blue at lo, white at the midpoint, red at hi
  if (u < 0.5) {
    double s = u / 0.5;
    return {level(s), level(s), 255};
  }
  double s = (1.0 - u) / 0.5;
  return {255, level(s), level(s)};
}

void write_heatmap_ppm(const std::filesystem::path& path, const Eigen::MatrixXd& m, ColorMap map,
                       std::optional<HeatmapRange> range) {
  HeatmapRange r = range.value_or(auto_range(m, map));
  auto out = open_out(path);
  out << "P3\n# " << range_comment(r, map) << '\n' << m.cols() << ' ' << m.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      auto c = heat_color(m(i, j), r, map);
      out << c.r << ' ' << c.g << ' ' << c.b << (j + 1 < m.cols() ? " " : "\n");
    }
  }
}

void write_heatmap_svg(const std::filesystem::path& path, const Eigen::MatrixXd& m, ColorMap map,
                       std::optional<HeatmapRange> range) {
  HeatmapRange r = range.value_or(auto_range(m, map));
  constexpr int kCell = 4;
  auto out = open_out(path);
  out << "<!-- " << range_comment(r, map) << " -->\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << m.cols() * kCell << "\" height=\""
      << m.rows() * kCell << "\" shape-rendering=\"crispEdges\">\n";
  char buf[128];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      auto c = heat_color(m(i, j), r, map);
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%ld\" y=\"%ld\" width=\"%d\" height=\"%d\" fill=\"#%02x%02x%02x\"/>\n",
                    static_cast<long>(j * kCell), static_cast<long>(i * kCell), kCell, kCell, c.r, c.g,
                    c.b);
      out << buf;
    }
  }
  out << "</svg>\n";
}

}  // namespace tfa
