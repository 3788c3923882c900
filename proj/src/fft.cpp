#include "semg/fft.hpp"

#include <cstring>
#include <map>
#include <memory>
#include <mutex>

#include <fftw3.h>

#include "semg/common.hpp"

namespace semg::fft {

namespace {

// FFTW planning is not thread-safe; plans are cached per (size, direction)
// and executed on private buffers under the same lock.
struct Plan {
  std::size_t n = 0;
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan plan = nullptr;

  ~Plan() {
    if (plan) fftw_destroy_plan(plan);
    fftw_free(real);
    fftw_free(cplx);
  }
};

std::mutex g_mutex;

Plan& get_plan(std::size_t n, bool forward) {
  static std::map<std::pair<std::size_t, bool>, std::unique_ptr<Plan>> cache;
  auto& slot = cache[{n, forward}];
  if (!slot) {
    slot = std::make_unique<Plan>();
    slot->n = n;
    slot->real = fftw_alloc_real(n);
    slot->cplx = fftw_alloc_complex(n / 2 + 1);
    const int ni = static_cast<int>(n);
    slot->plan = forward
                     ? fftw_plan_dft_r2c_1d(ni, slot->real, slot->cplx, FFTW_ESTIMATE)
                     : fftw_plan_dft_c2r_1d(ni, slot->cplx, slot->real, FFTW_ESTIMATE);
  }
  return *slot;
}

}  // namespace

std::vector<std::complex<double>> forward_real(std::span<const double> x) {
  if (x.empty()) throw Error(Errc::invalid_argument, "empty FFT input");
  std::lock_guard lock(g_mutex);
  auto& p = get_plan(x.size(), true);
  std::memcpy(p.real, x.data(), x.size() * sizeof(double));
  fftw_execute(p.plan);
  std::vector<std::complex<double>> out(x.size() / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {p.cplx[k][0], p.cplx[k][1]};
  return out;
}

std::vector<double> inverse_real(std::span<const std::complex<double>> bins, std::size_t n) {
  if (n == 0 || bins.size() != n / 2 + 1) {
    throw Error(Errc::invalid_argument, "inverse FFT needs n/2+1 bins");
  }
  std::lock_guard lock(g_mutex);
  auto& p = get_plan(n, false);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    p.cplx[k][0] = bins[k].real();
    p.cplx[k][1] = bins[k].imag();
  }
  fftw_execute(p.plan);  // c2r destroys its input; it is refilled every call
  std::vector<double> out(p.real, p.real + n);
  for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

}  // namespace semg::fft
