#pragma once

// Reference implementations written directly from the textbook definitions.
// They deliberately avoid the library's code paths (no FFT, no GEMM).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------- signal

// Count windows by sliding a cursor until a full window no longer fits.
inline std::size_t count_windows(std::size_t n, std::size_t a, std::size_t b) {
  std::size_t count = 0;
  for (std::size_t start = 0; start + a <= n; start += b) ++count;
  return count;
}

// Squared magnitude of an order-n Butterworth high-pass after the pre-warped bilinear map.
inline double butterworth_hp_mag2(double f, double fc, double fs, int order) {
  if (f <= 0) return 0.0;
  const double ratio = std::tan(std::numbers::pi * fc / fs) / std::tan(std::numbers::pi * f / fs);
  return 1.0 / (1.0 + std::pow(ratio, 2 * order));
}

// |H(e^jw)| of a biquad cascade given raw coefficients {b0,b1,b2,a1,a2}.
inline double cascade_magnitude(const std::vector<std::array<double, 5>>& sections, double f,
                                double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& s : sections) {
    h *= (s[0] + s[1] * z1 + s[2] * z2) / (1.0 + s[3] * z1 + s[4] * z2);
  }
  return std::abs(h);
}

// Direct-form-I difference equation, run in double.
inline std::vector<double> run_cascade(const std::vector<std::array<double, 5>>& sections,
                                       std::vector<double> x) {
  for (const auto& s : sections) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x1 = i >= 1 ? x[i - 1] : 0, x2 = i >= 2 ? x[i - 2] : 0;
      const double y1 = i >= 1 ? y[i - 1] : 0, y2 = i >= 2 ? y[i - 2] : 0;
      y[i] = s[0] * x[i] + s[1] * x1 + s[2] * x2 - s[3] * y1 - s[4] * y2;
    }
    x = std::move(y);
  }
  return x;
}

// -------------------------------------------------------------- features

struct Features {
  double mav, rms, std, wl, wa, zc, ssc, iemg, mpf, mf;
};

// Periodogram by the O(N^2) DFT sum over a twiddle table.
inline std::vector<std::pair<double, double>> dft_power(const std::vector<double>& x, double fs) {
  const std::size_t n = x.size();
  std::vector<double> cs(n), sn(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    cs[m] = std::cos(ang);
    sn[m] = std::sin(ang);
  }
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t m = k * t % n;
      re += x[t] * cs[m];
      im += x[t] * sn[m];
    }
    double p = (re * re + im * im) / static_cast<double>(n);
    if (k != 0 && !(n % 2 == 0 && k == n / 2)) p *= 2;
    out.emplace_back(static_cast<double>(k) * fs / static_cast<double>(n), p);
  }
  return out;
}

inline Features features(const std::vector<double>& x, double fs, double zc_eps = 0.01,
                         double ssc_eps = 0.01, double wamp_eps = 0.01) {
  Features f{};
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (double v : x) mean += v / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    f.iemg += std::abs(x[i]);
    f.rms += x[i] * x[i];
    f.std += (x[i] - mean) * (x[i] - mean);
    if (i + 1 < x.size()) {
      const double d = x[i + 1] - x[i];
      f.wl += std::abs(d);
      f.wa += std::abs(d) > wamp_eps ? 1 : 0;
      f.zc += (x[i] * x[i + 1] < 0 && std::abs(d) >= zc_eps) ? 1 : 0;
    }
    if (i >= 1 && i + 1 < x.size()) {
      f.ssc += ((x[i] - x[i - 1]) * (x[i] - x[i + 1]) > ssc_eps) ? 1 : 0;
    }
  }
  f.mav = f.iemg / n;
  f.rms = std::sqrt(f.rms / n);
  f.std = std::sqrt(f.std / n);
  const auto spec = dft_power(x, fs);
  double total = 0, weighted = 0;
  for (auto [fr, p] : spec) {
    total += p;
    weighted += fr * p;
  }
  f.mpf = weighted / total;
  double cum = 0;
  for (auto [fr, p] : spec) {
    cum += p;
    if (cum >= total / 2) {
      f.mf = fr;
      break;
    }
  }
  return f;
}

// -------------------------------------------------------------- networks

// Same-padded stride-1 cross-correlation on one NHWC sample; w indexed [ki][kj][ci][co].
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t h, std::size_t w,
                                  std::size_t cin, const std::vector<double>& wt,
                                  const std::vector<double>& bias, std::size_t k,
                                  std::size_t cout) {
  std::vector<double> y(h * w * cout);
  const long pad = static_cast<long>(k / 2);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t co = 0; co < cout; ++co) {
        double s = bias[co];
        for (std::size_t ki = 0; ki < k; ++ki)
          for (std::size_t kj = 0; kj < k; ++kj) {
            const long ii = static_cast<long>(i + ki) - pad, jj = static_cast<long>(j + kj) - pad;
            if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(w)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              s += x[(ii * w + jj) * cin + ci] * wt[((ki * k + kj) * cin + ci) * cout + co];
            }
          }
        y[(i * w + j) * cout + co] = s;
      }
  return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Trainable parameter count of the SEDCNN stack from the closed-form per-layer sizes.
inline std::size_t sedcnn_param_count(const std::vector<std::size_t>& channels,
                                      std::size_t first_attached, bool se, bool residual,
                                      std::size_t r, std::size_t k, std::size_t classes) {
  std::size_t total = 0, in = 1;
  for (std::size_t m = 0; m < channels.size() / 2; ++m) {
    const std::size_t a = channels[2 * m], b = channels[2 * m + 1];
    total += a * (k * k * in + 1) + 2 * a;  // conv + BN gamma/beta
    total += b * (k * k * a + 1) + 2 * b;
    if (m >= first_attached) {
      if (se) total += (b * (b / r) + b / r) + ((b / r) * b + b);
      if (residual) total += b * (in + 1);
    }
    in = b;
  }
  return total + classes * (in + 1);
}

// Spatial sizes through the module chain: same-padding keeps size, pooling halves it.
inline std::vector<std::size_t> sedcnn_spatial_chain(std::size_t hw, std::size_t modules) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < modules; ++m) {
    out.push_back(hw);
    if (m + 1 < modules) hw /= 2;
  }
  return out;
}

// ------------------------------------------------------------ evaluation

inline std::map<std::pair<int, int>, std::size_t> tally(const std::vector<int>& t,
                                                        const std::vector<int>& p) {
  std::map<std::pair<int, int>, std::size_t> m;
  for (std::size_t i = 0; i < t.size(); ++i) ++m[{t[i], p[i]}];
  return m;
}

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x0, double h) {
  return (f(x0 + h) - f(x0 - h)) / (2 * h);
}

inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
