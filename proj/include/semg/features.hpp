#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "semg/signal.hpp"

namespace semg::features {

struct FeatureThresholds {
  double zc_eps = 0.01;
  double ssc_eps = 0.01;
  double wamp_eps = 0.01;
};

inline constexpr std::size_t kTimeFeatures = 8;
inline constexpr std::size_t kFeaturesPerChannel = 10;
inline constexpr std::size_t kFeatureDim = kChannels * kFeaturesPerChannel;

// Order within each channel block.
inline constexpr std::array<const char*, kFeaturesPerChannel> kFeatureNames = {
    "mav", "rms", "std", "wl", "wa", "zc", "ssc", "iemg", "mpf", "mf"};

struct TimeFeatures {
  double mav = 0, rms = 0, std = 0, wl = 0;
  double wa = 0, zc = 0, ssc = 0;
  double iemg = 0;
};

TimeFeatures time_domain_features(std::span<const double> x, const FeatureThresholds& th = {});

struct SpectrumBin {
  double frequency_hz;
  double power;
};

enum class Taper { rectangular, hann };

// One-sided periodogram; interior bins carry doubled power so the sum equals
// the signal energy (with the rectangular taper).
std::vector<SpectrumBin> power_spectrum(std::span<const double> x, int sample_rate_hz,
                                        Taper taper = Taper::rectangular);

struct FrequencyFeatures {
  double mpf = 0;
  double mf = 0;
};

FrequencyFeatures frequency_domain_features(std::span<const SpectrumBin> spectrum);

struct FeatureVector {
  std::array<double, kFeatureDim> values{};
  int label = 0;
};

FeatureVector extract_feature_vector(const signal::Window& w, const FeatureThresholds& th = {},
                                     int sample_rate_hz = kSampleRateHz,
                                     Taper taper = Taper::rectangular);

std::string feature_csv_header();
std::string feature_csv_row(const FeatureVector& fv);

}  // namespace semg::features
