#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "semg/signal.hpp"

namespace semg::synth {

inline constexpr std::size_t kRecordingLength = 3200;

struct GestureTemplate {
  std::vector<std::array<double, kChannels>> gain;  // per gesture, per channel, in [0.05, 1]
  // Burst envelope over the recording: rise, plateau and fall fractions.
  double attack = 0.05;
  double hold = 0.9;
  double release = 0.05;
  double rest_level = 0.35;  // envelope floor outside the burst
  // Slow per-channel amplitude modulation: class offsets plus per-recording jitter.
  std::vector<std::array<double, kChannels>> phase;
  // Sign with which each channel picks up the gesture's shared carrier.
  std::vector<std::array<int, kChannels>> polarity;

  std::size_t gestures() const { return gain.size(); }
};

struct TemplateParams {
  std::size_t gestures = kNumGestures;
  double separation = 0.3;   // minimum Euclidean distance between gain rows
  std::size_t max_attempts = 20000;
  std::uint64_t seed = 42;
};

// Rejection-samples gain rows; throws template_separation when a row cannot be placed.
GestureTemplate make_template(const TemplateParams& p);

struct NoiseSpec {
  double band_low_hz = 20.0;
  double band_high_hz = 95.0;
  double interference_50hz = 0.3;  // relative to the recording's mean gain
  double drift = 0.5;              // relative; content below 20 Hz
  double white_noise_sigma = 0.02; // absolute
  double carrier_correlation = 0.8;
  double modulation_depth = 0.9;
  double modulation_low_hz = 0.1;
  double modulation_high_hz = 0.3;
  double phase_jitter = 3.141592653589793;  // per-recording, per-channel, uniform in +-jitter
  double subject_jitter = 0.1;     // per-subject relative gain spread
  double repetition_jitter = 0.15; // per-recording relative gain spread
};

void validate(const NoiseSpec& n);

// Deterministic in all arguments; each recording draws from a stream keyed by
// (seed, subject, gesture, repetition).
std::vector<signal::Recording> generate_corpus(const GestureTemplate& tpl, const NoiseSpec& noise,
                                               std::size_t reps_per_gesture,
                                               std::size_t subjects, std::uint64_t seed);

// Default corpus: 10 gestures, 15 repetitions, one subject.
std::vector<signal::Recording> default_corpus(std::uint64_t seed = 42);

struct SanityReport {
  // Mean per-channel power of the filtered signal, per class.
  std::vector<std::array<double, kChannels>> class_power;
  double line_ratio_raw = 0;       // 50 Hz bin over neighbouring-bin mean, averaged
  double line_ratio_filtered = 0;
  double band_fraction_min = 0;    // smallest in-band power share after filtering
  double mav_1nn_accuracy = 0;     // leave-one-out 1-NN on per-recording mean MAV
};

// Neighbouring bins are those 2 to 5 Hz from the line on either side.
double line_ratio(std::span<const float> x, int sample_rate_hz, double line_hz = 50.0);
double band_power_fraction(std::span<const float> x, int sample_rate_hz, double lo, double hi);

SanityReport corpus_sanity(const std::vector<signal::Recording>& corpus);

}  // namespace semg::synth
