#include "air/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace air::kern {

namespace {
std::atomic<bool> g_parallel{true};

int env_thread_cap() {
  const char* s = std::getenv("AIR_THREADS");
  if (!s) return 0;
  int v = std::atoi(s);
  return v > 0 ? v : 0;
}
}  // namespace

int max_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  int cap = env_thread_cap();
  if (cap > 0) n = std::min(n, cap);
  return n;
}

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }

// ---------------------------------------------------------------------------
// matmul

void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      if (accumulate) c[i * n + j] += acc;
      else c[i * n + j] = acc;
    }
  }
}

void matmul_omp(const double* a, const double* b, double* c,
                int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      if (accumulate) c[i * n + j] += acc;
      else c[i * n + j] = acc;
    }
  }
}

void matmul(const double* a, const double* b, double* c,
            int m, int k, int n, bool accumulate) {
  if (parallel_enabled()) matmul_omp(a, b, c, m, k, n, accumulate);
  else matmul_serial(a, b, c, m, k, n, accumulate);
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[j * k + t];
      if (accumulate) c[i * n + j] += acc;
      else c[i * n + j] = acc;
    }
  }
}

void matmul_nt_omp(const double* a, const double* b, double* c,
                   int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[j * k + t];
      if (accumulate) c[i * n + j] += acc;
      else c[i * n + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               int m, int k, int n, bool accumulate) {
  if (parallel_enabled()) matmul_nt_omp(a, b, c, m, k, n, accumulate);
  else matmul_nt_serial(a, b, c, m, k, n, accumulate);
}

void matmul_tn_serial(const double* a, const double* b, double* c,
                      int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[t * m + i] * b[t * n + j];
      if (accumulate) c[i * n + j] += acc;
      else c[i * n + j] = acc;
    }
  }
}

void matmul_tn_omp(const double* a, const double* b, double* c,
                   int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[t * m + i] * b[t * n + j];
      if (accumulate) c[i * n + j] += acc;
      else c[i * n + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               int m, int k, int n, bool accumulate) {
  if (parallel_enabled()) matmul_tn_omp(a, b, c, m, k, n, accumulate);
  else matmul_tn_serial(a, b, c, m, k, n, accumulate);
}

// ---------------------------------------------------------------------------
// convolution

namespace {
inline int reflect(int i, int n) {
  // reflect-101 style without repeating the border sample twice
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

inline double conv_at(const double* img, int h, int w,
                      const double* kernel, int kh, int kw, int r, int c) {
  const int rh = kh / 2, rw = kw / 2;
  double acc = 0.0;
  for (int dr = -rh; dr <= rh; ++dr) {
    int rr = reflect(r + dr, h);
    for (int dc = -rw; dc <= rw; ++dc) {
      int cc = reflect(c + dc, w);
      acc += img[rr * w + cc] * kernel[(dr + rh) * kw + (dc + rw)];
    }
  }
  return acc;
}
}  // namespace

void conv2d_reflect_serial(const double* img, int h, int w,
                           const double* kernel, int kh, int kw, double* out) {
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      out[r * w + c] = conv_at(img, h, w, kernel, kh, kw, r, c);
}

void conv2d_reflect_omp(const double* img, int h, int w,
                        const double* kernel, int kh, int kw, double* out) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      out[r * w + c] = conv_at(img, h, w, kernel, kh, kw, r, c);
}

void conv2d_reflect(const double* img, int h, int w,
                    const double* kernel, int kh, int kw, double* out) {
  if (parallel_enabled()) conv2d_reflect_omp(img, h, w, kernel, kh, kw, out);
  else conv2d_reflect_serial(img, h, w, kernel, kh, kw, out);
}

// ---------------------------------------------------------------------------
// bilinear gather

namespace {
inline double sample_at(const double* img, int h, int w, double x, double y) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  double acc = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    int yy = y0 + dy;
    if (yy < 0 || yy >= h) continue;
    double wy = dy ? fy : 1.0 - fy;
    for (int dx = 0; dx <= 1; ++dx) {
      int xx = x0 + dx;
      if (xx < 0 || xx >= w) continue;
      double wx = dx ? fx : 1.0 - fx;
      acc += wy * wx * img[yy * w + xx];
    }
  }
  return acc;
}
}  // namespace

void bilinear_gather_serial(const double* img, int h, int w,
                            const double* xs, const double* ys, int n,
                            double* out) {
  for (int i = 0; i < n; ++i) out[i] = sample_at(img, h, w, xs[i], ys[i]);
}

void bilinear_gather_omp(const double* img, int h, int w,
                         const double* xs, const double* ys, int n,
                         double* out) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < n; ++i) out[i] = sample_at(img, h, w, xs[i], ys[i]);
}

void bilinear_gather(const double* img, int h, int w,
                     const double* xs, const double* ys, int n, double* out) {
  if (parallel_enabled()) bilinear_gather_omp(img, h, w, xs, ys, n, out);
  else bilinear_gather_serial(img, h, w, xs, ys, n, out);
}

}  // namespace air::kern
