#include "sgp/geometry.hpp"

#include <algorithm>

namespace sgp {

Rect intersect(const Rect& a, const Rect& b) {
    double x1 = std::max(a.x, b.x);
    double y1 = std::max(a.y, b.y);
    double x2 = std::min(a.x2(), b.x2());
    double y2 = std::min(a.y2(), b.y2());
    if (x2 <= x1 || y2 <= y1) return Rect{};
    return Rect{x1, y1, x2 - x1, y2 - y1};
}

double union_area(const std::vector<Rect>& rects) {
    std::vector<double> xs;
    xs.reserve(rects.size() * 2);
    for (const Rect& r : rects) {
        if (r.w <= 0.0 || r.h <= 0.0) continue;
        xs.push_back(r.x);
        xs.push_back(r.x2());
    }
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        double strip_w = xs[i + 1] - xs[i];
        double mid = 0.5 * (xs[i] + xs[i + 1]);
        // Union of y intervals of the rects spanning this strip.
        std::vector<std::pair<double, double>> spans;
        for (const Rect& r : rects) {
            if (r.w <= 0.0 || r.h <= 0.0) continue;
            if (r.x <= mid && mid < r.x2()) spans.emplace_back(r.y, r.y2());
        }
        if (spans.empty()) continue;
        std::sort(spans.begin(), spans.end());
        double covered = 0.0;
        double cur_lo = spans[0].first;
        double cur_hi = spans[0].second;
        for (std::size_t k = 1; k < spans.size(); ++k) {
            if (spans[k].first > cur_hi) {
                covered += cur_hi - cur_lo;
                cur_lo = spans[k].first;
                cur_hi = spans[k].second;
            } else {
                cur_hi = std::max(cur_hi, spans[k].second);
            }
        }
        covered += cur_hi - cur_lo;
        total += covered * strip_w;
    }
    return total;
}

double iou(const Rect& a, const Rect& b) {
    double inter = intersect(a, b).area();
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace sgp
