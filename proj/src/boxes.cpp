#include "hoi/boxes.hpp"

#include <cmath>

namespace hoi {

Box box_from_corners(double x0, double y0, double x1, double y1) {
  return Box{(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

bool inside_unit_square(const Box& b, double slack) {
  return b.w > 0 && b.h > 0 && b.x0() >= -slack && b.y0() >= -slack && b.x1() <= 1 + slack &&
         b.y1() <= 1 + slack;
}

Box enclosing_box(const Box& a, const Box& b) {
  return box_from_corners(std::min(a.x0(), b.x0()), std::min(a.y0(), b.y0()),
                          std::max(a.x1(), b.x1()), std::max(a.y1(), b.y1()));
}

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

double iou(const Box& a, const Box& b) {
  if (a.degenerate() || b.degenerate()) return 0.0;
  const double inter = intersection_area(a, b);
  return inter / (a.area() + b.area() - inter);
}

double giou(const Box& a, const Box& b) {
  const double inter = (a.degenerate() || b.degenerate()) ? 0.0 : intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull = enclosing_box(a, b).area();
  if (hull <= 0) return 0.0;
  const double i = uni > 0 ? inter / uni : 0.0;
  return i - (hull - uni) / hull;
}

double l1_distance(const Box& a, const Box& b) {
  return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
}

}  // namespace hoi
