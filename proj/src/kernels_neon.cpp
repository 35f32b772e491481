#if defined(__aarch64__)

#include <arm_neon.h>

#include "sgp/kernels.hpp"

namespace sgp::kernels {

namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vy = vld1q_f64(y + i);
        vy = vfmaq_f64(vy, va, vld1q_f64(x + i));
        vst1q_f64(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double sum_neon(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

void relu_neon(double* x, std::size_t n) {
    float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmaxq_f64(vld1q_f64(x + i), zero));
    for (; i < n; ++i)
        if (x[i] < 0.0) x[i] = 0.0;
}

}  // namespace

const Ops& neon_ops() {
    static const Ops ops{dot_neon, axpy_neon, sum_neon, relu_neon};
    return ops;
}

}  // namespace sgp::kernels

#endif  // __aarch64__
