#pragma once

#include <string>
#include <vector>

#include "core/gradcheck.hpp"

namespace sfd {

struct NamedReport {
    std::string name;
    GradReport report;
};

// Finite-difference verification of every differentiable op in the library,
// double precision, randomized shapes covering rank 1 through 4. Kinked ops
// (relu, l1) get inputs pushed away from their kink sets. rtol 1e-4, step 1e-4.
std::vector<NamedReport> run_op_gradient_suite();

// true iff every report passes
bool suite_passes(const std::vector<NamedReport>& reports);

}  // namespace sfd
