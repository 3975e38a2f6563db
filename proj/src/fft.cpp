#include "knoweeg/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace knoweeg::spectral {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace {

void radix2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::size_t half = len / 2;
    // Twiddles computed directly per index; repeated multiplication drifts.
    std::vector<cplx> w(half);
    for (std::size_t k = 0; k < half; ++k)
      w[k] = cplx(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + half] * w[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void bluestein(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  const std::size_t m = next_power_of_two(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small and exact.
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::vector<cplx> u(m), v(m);
  for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
  v[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) v[k] = v[m - k] = std::conj(chirp[k]);
  radix2(u, false);
  radix2(v, false);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  radix2(u, true);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = u[k] * scale * chirp[k];
}

void transform(std::vector<cplx>& a, bool inverse) {
  if (a.size() <= 1) return;
  if (is_power_of_two(a.size()))
    radix2(a, inverse);
  else
    bluestein(a, inverse);
}

}  // namespace

void fft(std::vector<cplx>& data) { transform(data, false); }

void ifft(std::vector<cplx>& data) {
  transform(data, true);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= scale;
}

std::vector<cplx> rfft(std::span<const double> signal, std::size_t nfft) {
  if (nfft == 0) throw std::invalid_argument("rfft: nfft must be positive");
  std::vector<cplx> buf(nfft);
  const std::size_t n = std::min(nfft, signal.size());
  for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(signal[i], 0.0);
  fft(buf);
  buf.resize(nfft / 2 + 1);
  return buf;
}

std::vector<double> irfft(std::span<const cplx> half, std::size_t n) {
  if (half.size() != n / 2 + 1) throw std::invalid_argument("irfft: bin count must be n/2+1");
  std::vector<cplx> full(n);
  for (std::size_t k = 0; k < half.size(); ++k) full[k] = half[k];
  for (std::size_t k = 1; k < (n + 1) / 2; ++k) full[n - k] = std::conj(half[k]);
  ifft(full);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = full[i].real();
  return out;
}

}  // namespace knoweeg::spectral
