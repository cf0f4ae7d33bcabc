#pragma once

// CSV, JSON and heatmap writers for metric and analysis outputs.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace tfa {

/// Writes a matrix as CSV with an optional header row. Values use enough
/// digits to round-trip.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

enum class ColorMap { kGray, kDiverging };

struct HeatmapRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Symmetric range for diverging maps, [min, max] otherwise.
HeatmapRange auto_range(const Eigen::MatrixXd& m, ColorMap map);

/// Plain-text PPM (P3), one pixel per entry. The value range and colormap are
/// recorded in a header comment.
void write_heatmap_ppm(const std::filesystem::path& path, const Eigen::MatrixXd& m, ColorMap map,
                       std::optional<HeatmapRange> range = std::nullopt);

/// SVG with one rectangle per entry and the range in a leading comment.
void write_heatmap_svg(const std::filesystem::path& path, const Eigen::MatrixXd& m, ColorMap map,
                       std::optional<HeatmapRange> range = std::nullopt);

struct Rgb {
  int r = 0, g = 0, b = 0;
};

Rgb heat_color(double value, const HeatmapRange& range, ColorMap map);

}  // namespace tfa
