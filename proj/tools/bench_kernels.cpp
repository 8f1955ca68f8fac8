// Compares the serial reference kernels against the OpenMP versions and
// verifies bit-identical outputs while timing both. Run: bench_kernels [n]
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "core/kernels.hpp"
#include "core/rng.hpp"

using sfd::Rng;
namespace k = sfd::kernels;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_best(F&& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

void fill(std::vector<float>& v, Rng& rng) {
    for (auto& x : v) x = static_cast<float>(rng.normal());
}

}  // namespace

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::atoi(argv[1]) : 384;
    const int reps = 5;
    Rng rng(7);
    std::vector<float> a(static_cast<size_t>(n) * n), b(a.size()), c_ser(a.size()),
        c_par(a.size());
    fill(a, rng);
    fill(b, rng);

    const double flops = 2.0 * n * n * static_cast<double>(n);
    std::printf("kernel benchmark, %dx%d matrices, %d threads available\n", n, n,
                k::thread_count());

    struct Case {
        const char* name;
        void (*ser)(int, int, int, const float*, const float*, float*, bool);
        void (*par)(int, int, int, const float*, const float*, float*, bool);
    };
    const Case cases[] = {
        {"gemm", k::serial::gemm<float>, k::par::gemm<float>},
        {"gemm_tn", k::serial::gemm_tn<float>, k::par::gemm_tn<float>},
        {"gemm_nt", k::serial::gemm_nt<float>, k::par::gemm_nt<float>},
    };
    for (const auto& cs : cases) {
        const double ts = time_best([&] { cs.ser(n, n, n, a.data(), b.data(), c_ser.data(), false); }, reps);
        const double tp = time_best([&] { cs.par(n, n, n, a.data(), b.data(), c_par.data(), false); }, reps);
        const bool same = std::memcmp(c_ser.data(), c_par.data(), sizeof(float) * c_ser.size()) == 0;
        std::printf("  %-8s serial %7.1f ms (%6.2f GF/s)   omp %7.1f ms (%6.2f GF/s)   "
                    "speedup %.2fx   bit-identical: %s\n",
                    cs.name, ts * 1e3, flops / ts * 1e-9, tp * 1e3, flops / tp * 1e-9, ts / tp,
                    same ? "yes" : "NO");
        if (!same) return 1;
    }
    return 0;
}
