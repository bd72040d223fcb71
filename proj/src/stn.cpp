#include "air/stn.hpp"

#include <cmath>
#include <stdexcept>

#include "air/kernels.hpp"

namespace air {

namespace {
// Normalized lattice coordinate for index i of n (0 when n == 1).
inline double lattice(int i, int n) {
  return n > 1 ? -1.0 + 2.0 * i / (n - 1) : 0.0;
}

// Map normalized [-1,1] to pixel coordinates [0, n-1].
inline double to_pixel(double x, int n) { return (x + 1.0) * 0.5 * (n - 1); }
}  // namespace

AffineGrid affine_grid(const Pose2D& pose, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("affine_grid: output dims must be >= 1");
  AffineGrid g;
  g.h = out_h;
  g.w = out_w;
  g.xs.resize(static_cast<size_t>(out_h) * out_w);
  g.ys.resize(g.xs.size());
  for (int r = 0; r < out_h; ++r) {
    double yr = lattice(r, out_h);
    for (int c = 0; c < out_w; ++c) {
      double xc = lattice(c, out_w);
      g.xs[r * out_w + c] = pose.s * xc + pose.tx;
      g.ys[r * out_w + c] = pose.s * yr + pose.ty;
    }
  }
  return g;
}

std::vector<double> bilinear_sample(const std::vector<double>& img, int h,
                                    int w, const AffineGrid& grid) {
  size_t n = grid.xs.size();
  std::vector<double> px(n), py(n), out(n);
  for (size_t i = 0; i < n; ++i) {
    px[i] = to_pixel(grid.xs[i], w);
    py[i] = to_pixel(grid.ys[i], h);
  }
  kern::bilinear_gather(img.data(), h, w, px.data(), py.data(),
                        static_cast<int>(n), out.data());
  return out;
}

namespace {

// Bilinear value and derivatives w.r.t. the pixel coordinates.
struct TapGrad {
  double value = 0.0, dx = 0.0, dy = 0.0;
};

TapGrad tap(const std::vector<double>& img, int h, int w, double x, double y) {
  TapGrad out;
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  for (int dy = 0; dy <= 1; ++dy) {
    int yy = y0 + dy;
    if (yy < 0 || yy >= h) continue;
    double wy = dy ? fy : 1.0 - fy;
    double dwy = dy ? 1.0 : -1.0;
    for (int dx = 0; dx <= 1; ++dx) {
      int xx = x0 + dx;
      if (xx < 0 || xx >= w) continue;
      double wx = dx ? fx : 1.0 - fx;
      double dwx = dx ? 1.0 : -1.0;
      double v = img[yy * w + xx];
      out.value += wy * wx * v;
      out.dx += wy * dwx * v;
      out.dy += dwy * wx * v;
    }
  }
  return out;
}

void scatter(double* gimg, int h, int w, double x, double y, double g) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  for (int dy = 0; dy <= 1; ++dy) {
    int yy = y0 + dy;
    if (yy < 0 || yy >= h) continue;
    double wy = dy ? fy : 1.0 - fy;
    for (int dx = 0; dx <= 1; ++dx) {
      int xx = x0 + dx;
      if (xx < 0 || xx >= w) continue;
      double wx = dx ? fx : 1.0 - fx;
      gimg[yy * w + xx] += g * wy * wx;
    }
  }
}

}  // namespace

Tensor attend(const Tensor& img, const Tensor& pose, int out_h, int out_w) {
  if (img.shape().size() != 2)
    throw std::invalid_argument("attend: image must be rank-2");
  if (pose.size() != 3)
    throw std::invalid_argument("attend: pose must be (s, tx, ty)");
  const int h = img.shape()[0], w = img.shape()[1];
  const double s = pose.at(0), tx = pose.at(1), ty = pose.at(2);

  Pose2D p{s, tx, ty};
  AffineGrid grid = affine_grid(p, out_h, out_w);
  std::vector<double> out = bilinear_sample(img.data(), h, w, grid);

  auto img_impl = img.impl();
  return make_op(
      {out_h, out_w}, std::move(out), {img, pose},
      [img_impl, h, w, out_h, out_w, s, tx, ty](
          const std::vector<double>& g, const std::vector<double*>& pg) {
        double gs = 0.0, gtx = 0.0, gty = 0.0;
        const bool need_pose = pg[1] != nullptr;
        const double sx = 0.5 * (w - 1);  // d(pixel)/d(normalized)
        const double sy = 0.5 * (h - 1);
        for (int r = 0; r < out_h; ++r) {
          double yr = lattice(r, out_h);
          for (int c = 0; c < out_w; ++c) {
            double xc = lattice(c, out_w);
            double px = to_pixel(s * xc + tx, w);
            double py = to_pixel(s * yr + ty, h);
            double go = g[r * out_w + c];
            if (go == 0.0) continue;
            if (pg[0]) scatter(pg[0], h, w, px, py, go);
            if (need_pose) {
              TapGrad t = tap(img_impl->data, h, w, px, py);
              gs += go * (t.dx * sx * xc + t.dy * sy * yr);
              gtx += go * t.dx * sx;
              gty += go * t.dy * sy;
            }
          }
        }
        if (need_pose) {
          pg[1][0] += gs;
          pg[1][1] += gtx;
          pg[1][2] += gty;
        }
      });
}

Tensor write(const Tensor& glimpse, const Tensor& pose, int H, int W) {
  if (pose.size() != 3)
    throw std::invalid_argument("write: pose must be (s, tx, ty)");
  Tensor s = select(pose, 0);
  Tensor tx = select(pose, 1);
  Tensor ty = select(pose, 2);
  Tensor one = Tensor::scalar(1.0);
  Tensor inv = concat({one / s, neg(tx / s), neg(ty / s)});
  return attend(glimpse, inv, H, W);
}

}  // namespace air
