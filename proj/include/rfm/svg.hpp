#pragma once

#include <string>
#include <utility>
#include <vector>

// Minimal static SVG writers for 2D inspection artifacts: sample scatters
// and sampling trajectories. No external tooling; files open in a browser.
namespace rfm::svg {

struct PointGroup {
    std::string label;
    std::string color;  // CSS color
    std::vector<std::pair<double, double>> points;
};

// scatter of one or more groups with auto-scaled axes and a legend
void write_scatter(const std::string& path, const std::vector<PointGroup>& groups);

// one polyline per trajectory over the first two state dims, start and end
// marked; used for 2D sampling paths
void write_polylines(const std::string& path,
                     const std::vector<std::vector<std::pair<double, double>>>& lines);

}  // namespace rfm::svg
