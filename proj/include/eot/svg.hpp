#pragma once

#include "eot/linalg.hpp"

#include <filesystem>
#include <string>
#include <vector>

// Minimal SVG scatter plots: one <circle> per point, a frame and tick labels.
namespace eot::svg {

struct Series {
    Matrix points;  // n x 2
    std::string color = "#1f77b4";
    double radius = 1.5;
    std::string label;
};

struct ScatterPlot {
    std::string title;
    std::vector<Series> series;
    double width = 420.0;
    double height = 420.0;
};

std::string render(const ScatterPlot& plot);
void write(const ScatterPlot& plot, const std::filesystem::path& path);

/// Number of marker elements render() emits.
std::size_t marker_count(const ScatterPlot& plot);

}  // namespace eot::svg
