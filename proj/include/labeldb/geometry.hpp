#pragma once

#include <algorithm>

namespace labeldb {

/// Axis-aligned box in pixel coordinates, origin top-left.
struct Box {
    double x = 0;
    double y = 0;
    double width = 0;
    double height = 0;

    [[nodiscard]] double right() const { return x + width; }
    [[nodiscard]] double bottom() const { return y + height; }
    [[nodiscard]] double area() const { return width * height; }

    friend bool operator==(const Box&, const Box&) = default;
};

inline double intersection_area(const Box& a, const Box& b)
{
    const double w = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const double h = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b)
{
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

/// Grows each side by `fraction` of the box extent on that axis; the center stays fixed.
inline Box expanded(const Box& box, double fraction)
{
    const double dw = fraction * box.width;
    const double dh = fraction * box.height;
    return {box.x - dw, box.y - dh, box.width + 2 * dw, box.height + 2 * dh};
}

}  // namespace labeldb
