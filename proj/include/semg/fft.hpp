#pragma once

#include <complex>
#include <span>
#include <vector>

namespace semg::fft {

// Real-input forward DFT, bins 0..n/2 (unnormalized).
std::vector<std::complex<double>> forward_real(std::span<const double> x);

// Inverse of forward_real for a length-n signal; divides by n.
std::vector<double> inverse_real(std::span<const std::complex<double>> bins, std::size_t n);

}  // namespace semg::fft
