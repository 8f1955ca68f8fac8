#include "model/fourier.hpp"

#include <cmath>

#include "core/error.hpp"

namespace sfd {

template <class T>
Tensor<T> fourier_box_features(const std::array<double, 4>& box, int k_freqs) {
    if (k_freqs < 1) throw ContractError(cat("need at least one frequency, got ", k_freqs));
    for (double c : box)
        if (!(c >= 0.0 && c <= 1.0))
            throw ContractError(cat("box coordinate ", c, " outside [0,1]"));
    Tensor<T> out = Tensor<T>::zeros({1, 8 * k_freqs});
    T* p = out.data();
    int i = 0;
    for (double c : box) {
        double freq = 2.0 * M_PI;  // j = 0 -> 2pi * c; doubles each octave
        for (int j = 0; j < k_freqs; ++j) {
            p[i++] = static_cast<T>(std::sin(freq * c));
            p[i++] = static_cast<T>(std::cos(freq * c));
            freq *= 2.0;
        }
    }
    return out;
}

template Tensor<float> fourier_box_features<float>(const std::array<double, 4>&, int);
template Tensor<double> fourier_box_features<double>(const std::array<double, 4>&, int);

}  // namespace sfd
