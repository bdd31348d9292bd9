#pragma once

// Convex polygon primitives: half-plane clipping with edge provenance and
// exact polynomial moments (area, centroid, polar second moment).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "sgflow/errors.hpp"

namespace sgflow {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Point2& operator+=(Point2 o) { x += o.x; y += o.y; return *this; }
    constexpr Point2& operator-=(Point2 o) { x -= o.x; y -= o.y; return *this; }
    constexpr Point2& operator*=(double s) { x *= s; y *= s; return *this; }
    friend constexpr Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Point2 operator-(Point2 a) { return {-a.x, -a.y}; }
    friend constexpr Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
    friend constexpr Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
    friend constexpr bool operator==(Point2, Point2) = default;
};

constexpr double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
constexpr double norm2(Point2 a) { return dot(a, a); }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

/// {p : normal·p <= offset}, with |normal| = 1.
struct HalfPlane {
    Point2 normal;
    double offset = 0.0;

    /// Normalizes `n`; the offset is scaled accordingly so the set is unchanged.
    static HalfPlane from_unnormalized(Point2 n, double c) {
        const double len = norm(n);
        return {{n.x / len, n.y / len}, c / len};
    }

    double signed_distance(Point2 p) const { return dot(normal, p) - offset; }
    bool contains(Point2 p) const { return signed_distance(p) <= 0.0; }
    /// {p : normal·p >= offset}
    HalfPlane complement() const { return {-normal, -offset}; }
};

/// Label of an edge that lies on the outer domain boundary.
inline constexpr int kBoundaryEdge = -1;

/// Counter-clockwise convex vertex loop. `labels[k]` tags the edge from
/// vertex k to vertex k+1 with the index of the half-plane that produced it
/// (kBoundaryEdge for edges inherited from the domain).
class ConvexPolygon {
public:
    ConvexPolygon() = default;
    explicit ConvexPolygon(std::vector<Point2> vertices)
        : vertices_(std::move(vertices)), labels_(vertices_.size(), kBoundaryEdge) {}
    ConvexPolygon(std::vector<Point2> vertices, std::vector<int> labels)
        : vertices_(std::move(vertices)), labels_(std::move(labels)) {}

    bool empty() const { return vertices_.size() < 3; }
    std::size_t size() const { return vertices_.size(); }
    std::span<const Point2> vertices() const { return vertices_; }
    std::span<const int> labels() const { return labels_; }
    const Point2& operator[](std::size_t k) const { return vertices_[k]; }
    Point2 edge_start(std::size_t k) const { return vertices_[k]; }
    Point2 edge_end(std::size_t k) const { return vertices_[(k + 1) % vertices_.size()]; }

    void clear() { vertices_.clear(); labels_.clear(); }

    /// Shoelace area (0 for empty polygons).
    double area() const {
        if (empty()) return 0.0;
        const Point2 o = vertices_[0];
        double a = 0.0;
        for (std::size_t k = 1; k + 1 < vertices_.size(); ++k)
            a += cross(vertices_[k] - o, vertices_[k + 1] - o);
        return 0.5 * a;
    }

    /// Convex and counter-clockwise up to `rel_tol` · scale².
    bool is_convex_ccw(double rel_tol = 1e-12) const {
        const std::size_t n = vertices_.size();
        if (n < 3) return false;
        double scale = 0.0;
        for (auto p : vertices_) scale = std::max(scale, norm(p - vertices_[0]));
        const double tol = rel_tol * scale * scale;
        double turn = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const Point2 a = vertices_[k];
            const Point2 b = vertices_[(k + 1) % n];
            const Point2 c = vertices_[(k + 2) % n];
            if (cross(b - a, c - b) < -tol) return false;
            turn += std::atan2(cross(b - a, c - b), dot(b - a, c - b));
        }
        // a convex loop winds exactly once
        return std::abs(turn - 2.0 * std::numbers::pi) < 1e-6;
    }

    bool contains(Point2 p, double tol = 0.0) const {
        if (empty()) return false;
        const std::size_t n = vertices_.size();
        for (std::size_t k = 0; k < n; ++k) {
            const Point2 a = vertices_[k];
            const Point2 b = vertices_[(k + 1) % n];
            const Point2 e = b - a;
            if (cross(e, p - a) < -tol * norm(e)) return false;
        }
        return true;
    }

private:
    std::vector<Point2> vertices_;
    std::vector<int> labels_;
};

/// Returns poly ∩ h. Vertices on the cut are obtained by linear interpolation
/// along the crossed edges; the new edge on the cut line gets `label`.
/// Consecutive vertices closer than `merge_tol` are merged.
inline ConvexPolygon clip_halfplane(const ConvexPolygon& poly, const HalfPlane& h,
                                    int label = kBoundaryEdge, double merge_tol = 0.0) {
    const std::size_t n = poly.size();
    if (poly.empty()) return {};

    thread_local std::vector<double> sd;
    sd.resize(n);
    bool any_out = false;
    bool any_in = false;
    for (std::size_t k = 0; k < n; ++k) {
        // points within rounding distance of the line count as inside, so
        // re-clipping by the same half-plane is a no-op
        const Point2 v = poly[k];
        sd[k] = dot(h.normal, v) - h.offset;
        const double mag = std::abs(h.normal.x * v.x) + std::abs(h.normal.y * v.y) + std::abs(h.offset);
        if (sd[k] <= 8.0 * std::numeric_limits<double>::epsilon() * mag)
            sd[k] = std::min(sd[k], 0.0);
        if (sd[k] > 0.0) any_out = true; else any_in = true;
    }
    if (!any_out) return poly;
    if (!any_in) return {};

    std::vector<Point2> out;
    std::vector<int> out_labels;
    out.reserve(n + 1);
    out_labels.reserve(n + 1);
    const auto labels = poly.labels();

    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k1 = (k + 1) % n;
        const bool in0 = sd[k] <= 0.0;
        const bool in1 = sd[k1] <= 0.0;
        if (in0) {
            out.push_back(poly[k]);
            out_labels.push_back(labels[k]);
            if (!in1) {
                const double t = sd[k] / (sd[k] - sd[k1]);
                out.push_back(poly[k] + t * (poly[k1] - poly[k]));
                out_labels.push_back(label);
            }
        } else if (in1) {
            const double t = sd[k] / (sd[k] - sd[k1]);
            out.push_back(poly[k] + t * (poly[k1] - poly[k]));
            out_labels.push_back(labels[k]);
        }
    }

    // Merge coincident neighbours. When v_k ~ v_{k+1} the edge k is
    // degenerate, so v_k and its label are dropped.
    std::size_t kept = 0;
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (kept > 0 && norm(out[k] - out[kept - 1]) <= merge_tol) {
            out[kept - 1] = out[k];
            out_labels[kept - 1] = out_labels[k];
            continue;
        }
        out[kept] = out[k];
        out_labels[kept] = out_labels[k];
        ++kept;
    }
    out.resize(kept);
    out_labels.resize(kept);
    while (out.size() >= 2 && norm(out.back() - out.front()) <= merge_tol) {
        out.pop_back();
        out_labels.pop_back();
    }
    if (out.size() < 3) return {};
    return ConvexPolygon(std::move(out), std::move(out_labels));
}

struct PolygonMoments {
    double area = 0.0;
    Point2 centroid;
    /// ∫ |x - ref|² dx
    double second_moment = 0.0;
};

/// Exact moments by per-edge Green's-theorem integration, evaluated in
/// coordinates relative to `ref`. Throws DegenerateCell on empty input.
inline PolygonMoments polygon_moments(const ConvexPolygon& poly, Point2 ref) {
    if (poly.empty()) throw DegenerateCell("polygon_moments: empty polygon");
    const std::size_t n = poly.size();
    // accumulate about the first vertex, then translate; keeps small cells
    // far from ref accurate
    const Point2 o = poly[0];
    double a2 = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double ii = 0.0;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        const Point2 p = poly[k] - o;
        const Point2 q = poly[k + 1] - o;
        const double c = cross(p, q);
        a2 += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
        ii += c * (p.x * p.x + p.x * q.x + q.x * q.x + p.y * p.y + p.y * q.y + q.y * q.y);
    }
    if (a2 <= 0.0) throw DegenerateCell("polygon_moments: non-positive area");
    PolygonMoments m;
    m.area = 0.5 * a2;
    const Point2 s{cx / (3.0 * a2), cy / (3.0 * a2)};
    m.centroid = o + s;
    const double about_centroid = std::max(0.0, ii / 12.0 - m.area * norm2(s));
    m.second_moment = about_centroid + m.area * norm2(m.centroid - ref);
    return m;
}

/// Nearest point of a convex polygon to p (p itself when inside).
inline Point2 project_onto(const ConvexPolygon& poly, Point2 p) {
    if (poly.contains(p)) return p;
    Point2 best = poly[0];
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < poly.size(); ++k) {
        const Point2 a = poly.edge_start(k);
        const Point2 e = poly.edge_end(k) - a;
        const double t = std::clamp(dot(p - a, e) / norm2(e), 0.0, 1.0);
        const Point2 c = a + t * e;
        const double d2 = norm2(p - c);
        if (d2 < best_d2) { best_d2 = d2; best = c; }
    }
    return best;
}

inline ConvexPolygon make_rectangle(double x0, double y0, double x1, double y1) {
    return ConvexPolygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

/// Regular n-gon centred at `center`, scaled so that its area equals `area`.
inline ConvexPolygon make_regular_polygon(std::size_t sides, double area, Point2 center = {}) {
    const double n = static_cast<double>(sides);
    // area of the n-gon with circumradius R is (n/2) R² sin(2π/n)
    const double radius = std::sqrt(2.0 * area / (n * std::sin(2.0 * std::numbers::pi / n)));
    std::vector<Point2> v;
    v.reserve(sides);
    for (std::size_t k = 0; k < sides; ++k) {
        const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / n;
        v.push_back(center + Point2{radius * std::cos(th), radius * std::sin(th)});
    }
    return ConvexPolygon(std::move(v));
}

/// A validated convex domain with cached geometric quantities.
class Domain {
public:
    explicit Domain(ConvexPolygon poly) : poly_(std::move(poly)) {
        if (!poly_.is_convex_ccw())
            throw Error("domain must be a non-degenerate convex counter-clockwise polygon");
        const auto m = polygon_moments(poly_, poly_[0]);
        area_ = m.area;
        centroid_ = m.centroid;
        lo_ = hi_ = poly_[0];
        for (auto p : poly_.vertices()) {
            lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y)};
            hi_ = {std::max(hi_.x, p.x), std::max(hi_.y, p.y)};
            for (auto q : poly_.vertices()) diameter_ = std::max(diameter_, distance(p, q));
        }
    }

    const ConvexPolygon& polygon() const { return poly_; }
    double area() const { return area_; }
    Point2 centroid() const { return centroid_; }
    double diameter() const { return diameter_; }
    Point2 bbox_min() const { return lo_; }
    Point2 bbox_max() const { return hi_; }

    /// Largest distance from `p` to a vertex of the domain.
    double circumradius_about(Point2 p) const {
        double r = 0.0;
        for (auto v : poly_.vertices()) r = std::max(r, distance(p, v));
        return r;
    }

private:
    ConvexPolygon poly_;
    double area_ = 0.0;
    Point2 centroid_;
    double diameter_ = 0.0;
    Point2 lo_, hi_;
};

}  // namespace sgflow
