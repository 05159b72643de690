#include "rfm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "rfm/errors.hpp"

namespace rfm::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 40.0;

struct Bounds {
    double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;

    void include(double x, double y) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    void pad() {
        const double dx = (xmax - xmin) * 0.05 + 1e-9;
        const double dy = (ymax - ymin) * 0.05 + 1e-9;
        xmin -= dx;
        xmax += dx;
        ymin -= dy;
        ymax += dy;
    }
    double sx(double x) const {
        return kMargin + (x - xmin) / (xmax - xmin) * (kWidth - 2 * kMargin);
    }
    double sy(double y) const {
        return kHeight - kMargin - (y - ymin) / (ymax - ymin) * (kHeight - 2 * kMargin);
    }
};

std::ofstream open_svg(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << std::setprecision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return out;
}

void close_svg(std::ofstream& out, const std::string& path) {
    out << "</svg>\n";
    if (!out) throw IoError("failed while writing " + path);
}

}  // namespace

void write_scatter(const std::string& path, const std::vector<PointGroup>& groups) {
    Bounds b;
    bool any = false;
    for (const auto& g : groups)
        for (const auto& [x, y] : g.points) {
            if (!any) {
                b = Bounds{x, x, y, y};
                any = true;
            } else {
                b.include(x, y);
            }
        }
    b.pad();

    std::ofstream out = open_svg(path);
    out << "<line x1=\"" << b.sx(b.xmin) << "\" y1=\"" << b.sy(0) << "\" x2=\"" << b.sx(b.xmax)
        << "\" y2=\"" << b.sy(0) << "\" stroke=\"#ddd\"/>\n";
    out << "<line x1=\"" << b.sx(0) << "\" y1=\"" << b.sy(b.ymin) << "\" x2=\"" << b.sx(0)
        << "\" y2=\"" << b.sy(b.ymax) << "\" stroke=\"#ddd\"/>\n";
    for (const auto& g : groups)
        for (const auto& [x, y] : g.points)
            out << "<circle cx=\"" << b.sx(x) << "\" cy=\"" << b.sy(y)
                << "\" r=\"2.5\" fill=\"" << g.color << "\" fill-opacity=\"0.6\"/>\n";
    double ly = kMargin;
    for (const auto& g : groups) {
        out << "<circle cx=\"" << kWidth - kMargin - 100 << "\" cy=\"" << ly
            << "\" r=\"4\" fill=\"" << g.color << "\"/>\n";
        out << "<text x=\"" << kWidth - kMargin - 90 << "\" y=\"" << ly + 4
            << "\" font-size=\"12\" font-family=\"sans-serif\">" << g.label << "</text>\n";
        ly += 18.0;
    }
    close_svg(out, path);
}

void write_polylines(const std::string& path,
                     const std::vector<std::vector<std::pair<double, double>>>& lines) {
    Bounds b;
    bool any = false;
    for (const auto& line : lines)
        for (const auto& [x, y] : line) {
            if (!any) {
                b = Bounds{x, x, y, y};
                any = true;
            } else {
                b.include(x, y);
            }
        }
    b.pad();

    std::ofstream out = open_svg(path);
    for (const auto& line : lines) {
        if (line.empty()) continue;
        out << "<polyline fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1\" points=\"";
        for (const auto& [x, y] : line) out << b.sx(x) << "," << b.sy(y) << " ";
        out << "\"/>\n";
        out << "<circle cx=\"" << b.sx(line.front().first) << "\" cy=\""
            << b.sy(line.front().second) << "\" r=\"2.5\" fill=\"#999\"/>\n";
        out << "<circle cx=\"" << b.sx(line.back().first) << "\" cy=\""
            << b.sy(line.back().second) << "\" r=\"2.5\" fill=\"#cc3311\"/>\n";
    }
    close_svg(out, path);
}

}  // namespace rfm::svg
