#include "popmon/indoor_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace popmon {

double euclidean(const Location& a, const Location& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

namespace geometry {
namespace {

double cross(Point2 o, Point2 a, Point2 b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(Point2 a, Point2 b, Point2 p) {
    return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
           std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

int sign(double v) {
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
}

bool segments_touch(Point2 p1, Point2 p2, Point2 q1, Point2 q2) {
    const int d1 = sign(cross(q1, q2, p1));
    const int d2 = sign(cross(q1, q2, p2));
    const int d3 = sign(cross(p1, p2, q1));
    const int d4 = sign(cross(p1, p2, q2));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    if (d1 == 0 && on_segment(q1, q2, p1)) return true;
    if (d2 == 0 && on_segment(q1, q2, p2)) return true;
    if (d3 == 0 && on_segment(p1, p2, q1)) return true;
    if (d4 == 0 && on_segment(p1, p2, q2)) return true;
    return false;
}

double point_segment_distance(Point2 a, Point2 b, Point2 p) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    return std::hypot(a.x + t * dx - p.x, a.y + t * dy - p.y);
}

}  // namespace

double polygon_area(const std::vector<Point2>& polygon) {
    double twice = 0.0;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& a = polygon[i];
        const Point2& b = polygon[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

bool polygon_is_simple(const std::vector<Point2>& polygon) {
    const std::size_t n = polygon.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const Point2 a1 = polygon[i];
        const Point2 a2 = polygon[(i + 1) % n];
        if (a1.x == a2.x && a1.y == a2.y) return false;
        for (std::size_t j = i + 1; j < n; ++j) {
            // adjacent edges share a vertex by construction
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_touch(a1, a2, polygon[j], polygon[(j + 1) % n])) return false;
        }
    }
    return true;
}

double distance_to_boundary(const std::vector<Point2>& polygon, Point2 p) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        best = std::min(best, point_segment_distance(polygon[i], polygon[(i + 1) % n], p));
    }
    return best;
}

bool contains(const std::vector<Point2>& polygon, Point2 p) {
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& a = polygon[i];
        const Point2& b = polygon[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

Point2 centroid(const std::vector<Point2>& polygon) {
    const double area = polygon_area(polygon);
    double cx = 0.0;
    double cy = 0.0;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& a = polygon[i];
        const Point2& b = polygon[(i + 1) % n];
        const double f = a.x * b.y - b.x * a.y;
        cx += (a.x + b.x) * f;
        cy += (a.y + b.y) * f;
    }
    return {cx / (6.0 * area), cy / (6.0 * area)};
}

}  // namespace geometry
}  // namespace popmon
