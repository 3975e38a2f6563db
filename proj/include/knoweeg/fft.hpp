#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace knoweeg::spectral {

using cplx = std::complex<double>;

// In-place forward DFT of any length: X_k = sum_t x_t e^{-2 pi i k t / n}.
// Power-of-two lengths use iterative radix-2; other lengths go through
// Bluestein's chirp-z with a power-of-two convolution.
void fft(std::vector<cplx>& data);

// In-place inverse DFT including the 1/n factor.
void ifft(std::vector<cplx>& data);

// One-sided spectrum of a real signal zero-padded (or truncated) to nfft:
// returns bins 0..nfft/2.
std::vector<cplx> rfft(std::span<const double> signal, std::size_t nfft);

// Real signal of length n whose one-sided spectrum is `half` (n/2+1 bins).
std::vector<double> irfft(std::span<const cplx> half, std::size_t n);

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

}  // namespace knoweeg::spectral
