#include "core/kernels.hpp"

namespace sfd::kernels {

namespace {
bool g_parallel = true;
}

void set_parallel(bool on) { g_parallel = on; }

bool parallel_enabled() { return g_parallel; }

int thread_count() {
#ifdef _OPENMP
    return g_parallel ? omp_get_max_threads() : 1;
#else
    return 1;
#endif
}

}  // namespace sfd::kernels
