#pragma once

namespace roteq {

/// Pixel-frame keypoint; (x, y) = (column, row), origin at pixel (0, 0).
struct Keypoint {
  double x = 0;
  double y = 0;
  float response = 0;
};

}  // namespace roteq
