#include <cstdlib>
#include <cstring>

#include "sgp/kernels.hpp"

namespace sgp::kernels {

#if defined(__x86_64__)
const Ops& avx2_ops();
#elif defined(__aarch64__)
const Ops& neon_ops();
#endif

namespace {

bool g_force_scalar = false;

struct Selection {
    const Ops* ops;
    const char* name;
};

Selection select() {
    const char* env = std::getenv("SGP_FORCE_SCALAR");
    if (g_force_scalar || (env && std::strcmp(env, "1") == 0))
        return {&scalar_ops(), "scalar"};
#if defined(__x86_64__)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return {&avx2_ops(), "avx2"};
#elif defined(__aarch64__)
    return {&neon_ops(), "neon"};
#endif
    return {&scalar_ops(), "scalar"};
}

Selection& selection() {
    static Selection s = select();
    return s;
}

}  // namespace

void force_scalar() { g_force_scalar = true; }

const Ops& active() { return *selection().ops; }

const char* active_name() { return selection().name; }

}  // namespace sgp::kernels
