#pragma once

#include <string>
#include <vector>

namespace ckoop::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    bool equal_aspect = false;
    int width = 640;
    int height = 420;
};

// Self-contained SVG document. Non-finite points break the polyline.
[[nodiscard]] std::string render(const LineChart& chart);
[[nodiscard]] std::string escape(const std::string& text);

}  // namespace ckoop::svg
