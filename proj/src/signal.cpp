#include "semg/signal.hpp"

#include <cmath>
#include <numbers>

namespace semg::signal {

void validate(const Recording& rec) {
  if (rec.sample_rate_hz != kSampleRateHz) {
    throw Error(Errc::invalid_argument,
                "sample rate " + std::to_string(rec.sample_rate_hz) + " Hz is not supported");
  }
  const auto n = rec.channels[0].size();
  if (n == 0) throw Error(Errc::invalid_argument, "recording is empty");
  for (const auto& ch : rec.channels) {
    if (ch.size() != n) throw Error(Errc::invalid_argument, "channel lengths differ");
  }
}

std::complex<double> Biquad::response(double freq_hz, double sample_rate_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

std::array<std::complex<double>, 2> Biquad::poles() const {
  // roots of z^2 + a1 z + a2
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2));
  return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
}

std::complex<double> FilterBank::highpass_response(double freq_hz) const {
  std::complex<double> h = 1.0;
  for (const auto& s : highpass) h *= s.response(freq_hz, sample_rate_hz);
  return h;
}

std::complex<double> FilterBank::response(double freq_hz) const {
  return highpass_response(freq_hz) * notch.response(freq_hz, sample_rate_hz);
}

std::vector<Biquad> FilterBank::sections() const {
  auto all = highpass;
  all.push_back(notch);
  return all;
}

FilterBank design_filter_bank(int sample_rate_hz, double cutoff_hz, double notch_hz,
                              double notch_q) {
  const double nyquist = sample_rate_hz / 2.0;
  if (sample_rate_hz <= 0 || !(cutoff_hz > 0.0) || !(cutoff_hz < notch_hz) ||
      !(notch_hz < nyquist)) {
    throw Error(Errc::invalid_frequency, "require 0 < cutoff < notch < fs/2");
  }
  if (!(notch_q > 0.0)) throw Error(Errc::invalid_frequency, "notch Q must be positive");

  FilterBank bank;
  bank.sample_rate_hz = sample_rate_hz;
  bank.cutoff_hz = cutoff_hz;
  bank.notch_hz = notch_hz;
  bank.notch_q = notch_q;

  // Pre-warped analog cutoff for s = (1 - z^-1) / (1 + z^-1).
  const double wc = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
  const double wc2 = wc * wc;
  constexpr int n = kHighpassOrder;
  for (int k = 1; k <= n / 2; ++k) {
    // Low-pass prototype pole pair on the unit circle; s -> wc/s maps the
    // section 1/(s^2 + c s + 1) to s^2/(s^2 + c wc s + wc^2).
    const double theta = std::numbers::pi * (2.0 * k + n - 1) / (2.0 * n);
    const double c = -2.0 * std::cos(theta);
    const double a0 = 1.0 + c * wc + wc2;
    Biquad s;
    s.b0 = 1.0 / a0;
    s.b1 = -2.0 / a0;
    s.b2 = 1.0 / a0;
    s.a1 = (2.0 * wc2 - 2.0) / a0;
    s.a2 = (1.0 - c * wc + wc2) / a0;
    bank.highpass.push_back(s);
  }

  const double w0 = 2.0 * std::numbers::pi * notch_hz / sample_rate_hz;
  const double alpha = std::sin(w0) / (2.0 * notch_q);
  const double a0 = 1.0 + alpha;
  bank.notch.b0 = 1.0 / a0;
  bank.notch.b1 = -2.0 * std::cos(w0) / a0;
  bank.notch.b2 = 1.0 / a0;
  bank.notch.a1 = -2.0 * std::cos(w0) / a0;
  bank.notch.a2 = (1.0 - alpha) / a0;
  return bank;
}

FilterState::FilterState(const FilterBank& bank)
    : sections_(bank.sections()), state_(sections_.size(), {0.0, 0.0}) {}

float FilterState::process(float x) {
  double v = x;
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    const auto& s = sections_[i];
    auto& z = state_[i];
    const double y = s.b0 * v + z[0];
    z[0] = s.b1 * v - s.a1 * y + z[1];
    z[1] = s.b2 * v - s.a2 * y;
    v = y;
  }
  return static_cast<float>(v);
}

void FilterState::reset() {
  for (auto& z : state_) z = {0.0, 0.0};
}

Recording filter_recording(const Recording& rec, const FilterBank& bank) {
  validate(rec);
  Recording out = rec;
  for (std::size_t c = 0; c < kChannels; ++c) {
    FilterState st(bank);
    auto& dst = out.channels[c];
    for (auto& v : dst) v = st.process(v);
  }
  return out;
}

void validate(const WindowingParams& p) {
  if (p.window_len < 1 || p.hop < 1 || p.hop > p.window_len) {
    throw Error(Errc::invalid_argument, "windowing requires a >= 1, 1 <= b <= a");
  }
}

std::size_t window_count(std::size_t n, const WindowingParams& p) {
  validate(p);
  if (n < p.window_len) return 0;
  return (n - p.window_len) / p.hop + 1;
}

std::vector<Window> segment_windows(const Recording& rec, const WindowingParams& p) {
  validate(rec);
  validate(p);
  const auto n = rec.length();
  if (n < p.window_len) {
    throw Error(Errc::insufficient_samples, "recording has " + std::to_string(n) +
                                                " samples, window needs " +
                                                std::to_string(p.window_len));
  }
  const auto count = window_count(n, p);
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Window w;
    w.source_label = rec.gesture_label;
    w.start_index = k * p.hop;
    w.samples.resize(p.window_len * kChannels);
    for (std::size_t t = 0; t < p.window_len; ++t) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        w.samples[t * kChannels + c] = rec.channels[c][w.start_index + t];
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<float> reshape_to_input(const Window& w) {
  if (w.samples.size() != kImageSide * kImageSide) {
    throw Error(Errc::dimension, "window has " + std::to_string(w.samples.size()) +
                                     " elements, expected 1600");
  }
  // The flattened window already is the row-major image.
  return w.samples;
}

Window reshape_from_input(std::span<const float> image, int label, std::size_t start) {
  if (image.size() != kImageSide * kImageSide) {
    throw Error(Errc::dimension, "image must have 1600 elements");
  }
  return Window{{image.begin(), image.end()}, label, start};
}

}  // namespace semg::signal
