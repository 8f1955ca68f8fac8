#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace sfd {

// Result of a finite-difference gradient verification.
struct GradReport {
    double max_rel_err = 0.0;
    bool pass = false;
    int64_t coords_checked = 0;
    std::string worst;  // where the largest deviation occurred
};

struct GradCheckParams {
    double step = 1e-4;        // central-difference half-step
    double rtol = 1e-4;        // max allowed relative error
    double denom_floor = 1e-6; // floor on |fd| + |ad| to keep tiny grads from blowing up
    int max_coords = -1;       // cap per input tensor; -1 checks every coordinate
    uint64_t subset_seed = 17; // deterministic coordinate choice when capped
};

// Compares the tape gradient of a scalar-valued function against central
// differences, coordinate by coordinate, over every input tensor.
// The inputs are mutated during probing and restored before returning.
template <class T>
GradReport grad_check(const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f,
                      std::vector<Tensor<T>> inputs, const GradCheckParams& p = {});

// single-input convenience
template <class T>
GradReport grad_check(const std::function<Tensor<T>(Tensor<T>)>& f, Tensor<T> x,
                      const GradCheckParams& p = {});

}  // namespace sfd
