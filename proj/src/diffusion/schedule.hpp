#pragma once

#include <vector>

namespace sfd {

// Forward-process variance schedule. alpha_bar is the running product of
// (1 - beta) and is strictly decreasing from just under 1 toward 0.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;

    // linear beta ramp, the classic 1e-4 -> 2e-2 over 1000 steps by default
    static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
};

}  // namespace sfd
