#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "semg/common.hpp"

namespace semg::signal {

// One labeled 8-channel capture.
struct Recording {
  std::array<std::vector<float>, kChannels> channels;
  int sample_rate_hz = kSampleRateHz;
  int gesture_label = 0;
  std::string subject_id;
  int repetition_index = 0;

  std::size_t length() const { return channels[0].size(); }
};

// Throws Errc::invalid_argument if channel lengths differ, are empty, or the
// rate is not 200 Hz.
void validate(const Recording& rec);

// Direct-form-II-transposed biquad, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  std::complex<double> response(double freq_hz, double sample_rate_hz) const;
  std::array<std::complex<double>, 2> poles() const;
};

struct FilterBank {
  std::vector<Biquad> highpass;  // 4 sections for order 8
  Biquad notch;
  double sample_rate_hz = kSampleRateHz;
  double cutoff_hz = 20.0;
  double notch_hz = 50.0;
  double notch_q = 30.0;

  std::complex<double> highpass_response(double freq_hz) const;
  std::complex<double> response(double freq_hz) const;  // high-pass then notch
  std::vector<Biquad> sections() const;                 // cascade in application order
};

inline constexpr int kHighpassOrder = 8;

FilterBank design_filter_bank(int sample_rate_hz = kSampleRateHz, double cutoff_hz = 20.0,
                              double notch_hz = 50.0, double notch_q = 30.0);

// Causal per-sample cascade state. The offline and streaming paths both run
// through process(), which keeps them sample-for-sample identical.
class FilterState {
 public:
  FilterState() = default;
  explicit FilterState(const FilterBank& bank);

  float process(float x);
  void reset();

 private:
  std::vector<Biquad> sections_;
  std::vector<std::array<double, 2>> state_;
};

Recording filter_recording(const Recording& rec, const FilterBank& bank);

struct WindowingParams {
  std::size_t window_len = 200;
  std::size_t hop = 100;
};

void validate(const WindowingParams& p);

inline constexpr std::size_t kWindowLen = 200;
inline constexpr std::size_t kImageSide = 40;
static_assert(kWindowLen * kChannels == kImageSide * kImageSide);

// 200x8 samples stored time-major, channel-minor.
struct Window {
  std::vector<float> samples;
  int source_label = 0;
  std::size_t start_index = 0;

  float at(std::size_t t, std::size_t ch) const { return samples[t * kChannels + ch]; }
  std::size_t rows() const { return samples.size() / kChannels; }
};

std::size_t window_count(std::size_t n, const WindowingParams& p);

std::vector<Window> segment_windows(const Recording& rec, const WindowingParams& p = {});

// Row-major 40x40 image over the flattened (time-major, channel-minor) window.
std::vector<float> reshape_to_input(const Window& w);
Window reshape_from_input(std::span<const float> image, int label = 0, std::size_t start = 0);

struct ImageIndex {
  std::size_t row;
  std::size_t col;
};
constexpr ImageIndex image_index(std::size_t t, std::size_t ch) {
  const std::size_t flat = t * kChannels + ch;
  return {flat / kImageSide, flat % kImageSide};
}

}  // namespace semg::signal
