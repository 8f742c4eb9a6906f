// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors

#pragma once

#include <algorithm>
#include <cmath>

namespace ceutrack {

/// Axis-aligned box, top-left origin, pixel units unless stated otherwise.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
  double area() const { return w * h; }
};

/// Box in center parameterization, used by the regression losses in
/// normalized coordinates.
struct CenterBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

inline CenterBox to_center(const BBox& b) { return {b.cx(), b.cy(), b.w, b.h}; }

inline BBox to_corner(const CenterBox& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.w, b.h};
}

/// Crop rectangle described by its center and side lengths.
struct Region {
  double center_x = 0.0;
  double center_y = 0.0;
  double side_w = 0.0;
  double side_h = 0.0;

  double left() const { return center_x - side_w / 2.0; }
  double top() const { return center_y - side_h / 2.0; }
  double right() const { return center_x + side_w / 2.0; }
  double bottom() const { return center_y + side_h / 2.0; }

  // Half-open membership: [left, right) x [top, bottom).
  bool contains(double px, double py) const {
    return px >= left() && px < right() && py >= top() && py < bottom();
  }
};

}  // namespace ceutrack
