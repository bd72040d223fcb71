#pragma once

// Data-parallel inner loops used by the tensor ops, the spatial transformer
// and the rasterizer. Every kernel has a serial reference implementation and
// an OpenMP variant; both compute each output element in the same order, so
// results are bit-identical. tools/bench_kernels.cpp compares their speed.

#include <cstddef>

namespace air::kern {

// Worker cap. Defaults to the OpenMP maximum, overridable with AIR_THREADS.
int max_threads();

// Global switch between the serial reference and the OpenMP kernels.
void set_parallel(bool on);
bool parallel_enabled();

// c = a[m x k] * b[k x n]   (+= when accumulate)
void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n, bool accumulate);
void matmul_omp(const double* a, const double* b, double* c,
                int m, int k, int n, bool accumulate);
void matmul(const double* a, const double* b, double* c,
            int m, int k, int n, bool accumulate = false);

// c = a[m x k] * b[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c,
                      int m, int k, int n, bool accumulate);
void matmul_nt_omp(const double* a, const double* b, double* c,
                   int m, int k, int n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c,
               int m, int k, int n, bool accumulate = false);

// c = a[k x m]^T * b[k x n]
void matmul_tn_serial(const double* a, const double* b, double* c,
                      int m, int k, int n, bool accumulate);
void matmul_tn_omp(const double* a, const double* b, double* c,
                   int m, int k, int n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c,
               int m, int k, int n, bool accumulate = false);

// Same-size 2D convolution with reflect padding; kernel is kh x kw, odd dims.
void conv2d_reflect_serial(const double* img, int h, int w,
                           const double* kernel, int kh, int kw, double* out);
void conv2d_reflect_omp(const double* img, int h, int w,
                        const double* kernel, int kh, int kw, double* out);
void conv2d_reflect(const double* img, int h, int w,
                    const double* kernel, int kh, int kw, double* out);

// Bilinear gather: out[i] = interp(img, xs[i], ys[i]) in pixel coordinates,
// zero outside [0,w-1] x [0,h-1].
void bilinear_gather_serial(const double* img, int h, int w,
                            const double* xs, const double* ys, int n,
                            double* out);
void bilinear_gather_omp(const double* img, int h, int w,
                         const double* xs, const double* ys, int n,
                         double* out);
void bilinear_gather(const double* img, int h, int w,
                     const double* xs, const double* ys, int n, double* out);

}  // namespace air::kern
