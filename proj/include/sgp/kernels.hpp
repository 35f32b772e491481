#pragma once

#include <cstddef>

// Dense inner loops used by the predictor. A scalar reference implementation
// always exists; an AVX2 (x86-64) or NEON (aarch64) variant is selected once
// at startup when the CPU supports it. Variants are equivalence-tested against
// the scalar reference. Within one build on one machine the selection is
// stable, so seeded runs stay byte-identical.
namespace sgp::kernels {

struct Ops {
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    // x = max(x, 0)
    void (*relu)(double* x, std::size_t n);
};

const Ops& scalar_ops();
const Ops& active();
const char* active_name();

// Force the scalar path (also honored via env SGP_FORCE_SCALAR=1). Must be
// called before the first active() use to take effect.
void force_scalar();

}  // namespace sgp::kernels
