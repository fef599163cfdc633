#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmt/common.hpp"

namespace mmt::viz {

struct ProjectedPoint {
    std::string label;
    LanguageId lang;
    double x = 0.0;
    double y = 0.0;
};

struct Projection {
    std::vector<ProjectedPoint> points;
    double explained[2] = {0.0, 0.0}; // variance along each axis
};

/// PCA to two dimensions. `vectors` is row-major [labels.size() x dim].
/// Each axis is signed so that its largest-magnitude loading is positive.
/// Error with fewer than 3 rows or fewer than 2 distinct rows.
Projection project_2d(std::span<const double> vectors, std::size_t dim, std::span<const std::string> labels,
                      std::span<const LanguageId> langs);

/// `label,language,x,y` with %.9g coordinates.
std::string projection_csv(const Projection& p);
/// Standalone SVG scatter, one colour per language in first-seen order, with a legend.
std::string projection_svg(const Projection& p, const std::string& title = "");

/// Writes `<stem>.csv` and `<stem>.svg`.
void render_scatter(const Projection& p, const std::filesystem::path& stem, const std::string& title = "");

/// Mean cosine distance between row i of `a` and row i of `b`.
double mean_cosine_distance(std::span<const double> a, std::span<const double> b, std::size_t dim);

} // namespace mmt::viz
