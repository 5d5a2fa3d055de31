#pragma once

#include <algorithm>
#include <array>

namespace hoi {

/// Axis-aligned box as (center x, center y, width, height).
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;

  double x0() const { return cx - w / 2; }
  double y0() const { return cy - h / 2; }
  double x1() const { return cx + w / 2; }
  double y1() const { return cy + h / 2; }
  double area() const { return std::max(w, 0.0) * std::max(h, 0.0); }
  bool degenerate() const { return !(w > 0 && h > 0); }
  std::array<double, 4> values() const { return {cx, cy, w, h}; }

  bool operator==(const Box&) const = default;
};

/// Marks "no object" for interactions without an object.
inline constexpr Box kEmptyBox{0, 0, 0, 0};

Box box_from_corners(double x0, double y0, double x1, double y1);

/// Positive extent and fully inside the unit square (with a small slack).
bool inside_unit_square(const Box& b, double slack = 1e-12);

/// Smallest box enclosing both.
Box enclosing_box(const Box& a, const Box& b);

double intersection_area(const Box& a, const Box& b);

/// Intersection over union; 0 when either box has zero area.
double iou(const Box& a, const Box& b);

/// Generalized IoU = IoU - |hull \ union| / |hull|. Zero-area boxes count as
/// points with IoU 0; a zero-area hull gives 0.
double giou(const Box& a, const Box& b);

double l1_distance(const Box& a, const Box& b);

}  // namespace hoi
