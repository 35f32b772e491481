#pragma once

#include <vector>

namespace sgp {

struct Rect {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    double x2() const { return x + w; }
    double y2() const { return y + h; }

    bool operator==(const Rect&) const = default;
};

// Intersection; zero-size rect when disjoint.
Rect intersect(const Rect& a, const Rect& b);

// Exact area of the union, by coordinate-compression sweep over x strips.
double union_area(const std::vector<Rect>& rects);

double iou(const Rect& a, const Rect& b);

}  // namespace sgp
