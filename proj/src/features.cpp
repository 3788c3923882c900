#include "semg/features.hpp"

#include <cmath>
#include <numbers>

#include "semg/fft.hpp"

namespace semg::features {

TimeFeatures time_domain_features(std::span<const double> x, const FeatureThresholds& th) {
  const auto n = x.size();
  if (n < 3) throw Error(Errc::series_too_short, "need at least 3 samples");
  TimeFeatures f;
  double sum = 0, sum_sq = 0, sum_abs = 0;
  for (double v : x) {
    sum += v;
    sum_sq += v * v;
    sum_abs += std::abs(v);
  }
  const double dn = static_cast<double>(n);
  f.iemg = sum_abs;
  f.mav = sum_abs / dn;
  f.rms = std::sqrt(sum_sq / dn);
  const double mean = sum / dn;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  f.std = std::sqrt(var / dn);

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = std::abs(x[i + 1] - x[i]);
    f.wl += d;
    if (d > th.wamp_eps) f.wa += 1;
    if (x[i] * x[i + 1] < 0 && d >= th.zc_eps) f.zc += 1;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if ((x[i] - x[i - 1]) * (x[i] - x[i + 1]) > th.ssc_eps) f.ssc += 1;
  }
  return f;
}

std::vector<SpectrumBin> power_spectrum(std::span<const double> x, int sample_rate_hz,
                                        Taper taper) {
  const auto n = x.size();
  if (n < 2) throw Error(Errc::series_too_short, "spectrum needs at least 2 samples");
  std::vector<double> buf(x.begin(), x.end());
  if (taper == Taper::hann) {
    for (std::size_t i = 0; i < n; ++i) {
      buf[i] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    }
  }
  const auto bins = fft::forward_real(buf);
  std::vector<SpectrumBin> out(bins.size());
  const double dn = static_cast<double>(n);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const bool unpaired = (k == 0) || (n % 2 == 0 && k == n / 2);
    out[k].frequency_hz = static_cast<double>(k) * sample_rate_hz / dn;
    out[k].power = std::norm(bins[k]) / dn * (unpaired ? 1.0 : 2.0);
  }
  return out;
}

FrequencyFeatures frequency_domain_features(std::span<const SpectrumBin> spectrum) {
  if (spectrum.empty()) throw Error(Errc::zero_power, "empty spectrum");
  double total = 0, weighted = 0;
  for (const auto& b : spectrum) {
    total += b.power;
    weighted += b.frequency_hz * b.power;
  }
  if (!(total > 0)) throw Error(Errc::zero_power, "spectrum has no power");
  FrequencyFeatures f;
  f.mpf = weighted / total;
  const double half = total / 2.0;
  double cum = 0;
  f.mf = spectrum.back().frequency_hz;
  for (const auto& b : spectrum) {
    cum += b.power;
    if (cum >= half) {
      f.mf = b.frequency_hz;
      break;
    }
  }
  return f;
}

FeatureVector extract_feature_vector(const signal::Window& w, const FeatureThresholds& th,
                                     int sample_rate_hz, Taper taper) {
  const auto rows = w.rows();
  if (rows * kChannels != w.samples.size() || rows < 3) {
    throw Error(Errc::feature_extraction, "malformed window");
  }
  FeatureVector fv;
  fv.label = w.source_label;
  std::vector<double> x(rows);
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (std::size_t t = 0; t < rows; ++t) x[t] = w.at(t, c);
    try {
      const auto td = time_domain_features(x, th);
      const auto fd = frequency_domain_features(power_spectrum(x, sample_rate_hz, taper));
      double* out = fv.values.data() + c * kFeaturesPerChannel;
      out[0] = td.mav;
      out[1] = td.rms;
      out[2] = td.std;
      out[3] = td.wl;
      out[4] = td.wa;
      out[5] = td.zc;
      out[6] = td.ssc;
      out[7] = td.iemg;
      out[8] = fd.mpf;
      out[9] = fd.mf;
    } catch (const Error& e) {
      throw Error(Errc::feature_extraction,
                  "channel " + std::to_string(c + 1) + ": " + e.what());
    }
  }
  return fv;
}

std::string feature_csv_header() {
  std::string h;
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (const char* name : kFeatureNames) {
      h += 'c' + std::to_string(c + 1) + '_' + name + ',';
    }
  }
  return h + "label";
}

std::string feature_csv_row(const FeatureVector& fv) {
  std::string row;
  for (double v : fv.values) row += format_real(v) + ',';
  return row + std::to_string(fv.label);
}

}  // namespace semg::features
