#pragma once

// Differentiable attend (image -> glimpse) and write (glimpse -> canvas) via
// scale-and-translate affine grids and bilinear sampling. Coordinates are
// normalized to [-1,1]; out-of-bounds samples read as zero.

#include "air/tensor.hpp"

namespace air {

struct Pose2D {
  double s = 1.0;   // isotropic scale, > 0
  double tx = 0.0;  // translation, normalized coordinates
  double ty = 0.0;
};

// grid[r][c] = (s*x_c + tx, s*y_r + ty) with x_c, y_r spanning [-1,1].
struct AffineGrid {
  int h = 0, w = 0;
  std::vector<double> xs, ys;  // row-major, normalized source coordinates
};
AffineGrid affine_grid(const Pose2D& pose, int out_h, int out_w);

// Non-differentiable sampling of a raw image through a grid (test utility
// and fast inference path).
std::vector<double> bilinear_sample(const std::vector<double>& img, int h,
                                    int w, const AffineGrid& grid);

// Differentiable glimpse extraction. pose is a rank-1 tensor (s, tx, ty);
// gradients flow into both the image and the pose.
Tensor attend(const Tensor& img, const Tensor& pose, int out_h, int out_w);

// Places the glimpse on an H x W zero canvas using the inverse transform
// (sampling the glimpse with pose-inverse grids).
Tensor write(const Tensor& glimpse, const Tensor& pose, int H, int W);

}  // namespace air
