#include "semg/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include "semg/features.hpp"
#include "semg/fft.hpp"

namespace semg::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double row_distance(const std::array<double, kChannels>& a, const std::array<double, kChannels>& b) {
  double s = 0;
  for (std::size_t c = 0; c < kChannels; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

// Unit-RMS noise with a flat spectrum inside [lo, hi] Hz and nothing outside.
std::vector<double> band_noise(std::size_t n, double fs, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::vector<std::complex<double>> bins(n / 2 + 1);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    const double ph = phase(rng);  // drawn for every bin so the stream layout is fixed
    if (f >= lo && f <= hi) bins[k] = std::polar(1.0, ph);
  }
  auto x = fft::inverse_real(bins, n);
  double ss = 0;
  for (double v : x) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  for (auto& v : x) v /= rms;
  return x;
}

double smooth_step(double u) { return 0.5 - 0.5 * std::cos(std::numbers::pi * std::clamp(u, 0.0, 1.0)); }

double burst(const GestureTemplate& t, double u) {
  double level;
  if (u < t.attack) {
    level = smooth_step(u / t.attack);
  } else if (u < t.attack + t.hold) {
    level = 1.0;
  } else {
    level = 1.0 - smooth_step((u - t.attack - t.hold) / std::max(t.release, 1e-12));
  }
  return t.rest_level + (1.0 - t.rest_level) * level;
}

}  // namespace

GestureTemplate make_template(const TemplateParams& p) {
  GestureTemplate t;
  Rng rng = derive_rng(p.seed, {0x7e3b1a7eULL});
  std::uniform_real_distribution<double> gain(0.05, 1.0);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::set<unsigned> used_patterns;
  for (std::size_t g = 0; g < p.gestures; ++g) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < p.max_attempts && !placed; ++attempt) {
      std::array<double, kChannels> row{};
      for (auto& v : row) v = gain(rng);
      if (std::count_if(row.begin(), row.end(), [](double v) { return v >= 0.5; }) < 2) continue;
      placed = std::all_of(t.gain.begin(), t.gain.end(),
                           [&](const auto& other) { return row_distance(row, other) >= p.separation; });
      if (placed) t.gain.push_back(row);
    }
    if (!placed) {
      throw Error(Errc::template_separation,
                  "could not place gesture " + std::to_string(g) + " at separation " +
                      format_real(p.separation) + " after " + std::to_string(p.max_attempts) +
                      " attempts");
    }
    std::array<double, kChannels> ph{};
    for (auto& v : ph) v = phase(rng);
    t.phase.push_back(ph);

    // Channel 0 is always +1: a global sign flip yields the same correlation pattern.
    std::uniform_int_distribution<unsigned> bits(0, (1u << (kChannels - 1)) - 1);
    unsigned pattern;
    // Distinct patterns at Hamming distance >= 2 from every earlier one.
    auto far_enough = [&](unsigned cand) {
      return std::all_of(used_patterns.begin(), used_patterns.end(),
                         [&](unsigned u) { return std::popcount(u ^ cand) >= 2; });
    };
    do {
      pattern = bits(rng);
    } while (!far_enough(pattern));
    used_patterns.insert(pattern);
    std::array<int, kChannels> pol{};
    pol[0] = 1;
    for (std::size_t c = 1; c < kChannels; ++c) pol[c] = (pattern >> (c - 1)) & 1u ? -1 : 1;
    t.polarity.push_back(pol);
  }
  return t;
}

void validate(const NoiseSpec& n) {
  auto bad = [](const std::string& why) { throw Error(Errc::invalid_argument, why); };
  if (n.interference_50hz < 0 || n.drift < 0 || n.white_noise_sigma < 0) {
    bad("noise amplitudes must be non-negative");
  }
  if (!(n.band_low_hz > 0 && n.band_low_hz < n.band_high_hz && n.band_high_hz < kSampleRateHz / 2.0)) {
    bad("carrier band must lie inside (0, Nyquist)");
  }
  if (n.carrier_correlation < 0 || n.carrier_correlation > 1) bad("carrier correlation must be in [0,1]");
  if (n.modulation_depth < 0 || n.modulation_depth >= 1) bad("modulation depth must be in [0,1)");
  if (n.subject_jitter < 0 || n.repetition_jitter < 0) bad("jitter must be non-negative");
}

std::vector<signal::Recording> generate_corpus(const GestureTemplate& tpl, const NoiseSpec& noise,
                                               std::size_t reps, std::size_t subjects,
                                               std::uint64_t seed) {
  if (reps < 1 || subjects < 1) {
    throw Error(Errc::invalid_argument, "need at least one repetition and one subject");
  }
  validate(noise);
  const double fs = kSampleRateHz;
  const std::size_t n = kRecordingLength;
  const double rho = noise.carrier_correlation;
  const double own = std::sqrt(1.0 - rho * rho);
  std::vector<signal::Recording> out;
  out.reserve(reps * subjects * tpl.gestures());

  for (std::size_t s = 0; s < subjects; ++s) {
    Rng subject_rng = derive_rng(seed, {0x5b1ULL, s});
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<std::array<double, kChannels>> subject_scale(tpl.gestures());
    for (auto& row : subject_scale) {
      for (auto& v : row) v = std::max(0.1, 1.0 + noise.subject_jitter * unit(subject_rng));
    }
    char sid[16];
    std::snprintf(sid, sizeof sid, "s%02zu", s + 1);

    for (std::size_t g = 0; g < tpl.gestures(); ++g) {
      for (std::size_t r = 0; r < reps; ++r) {
        Rng rng = derive_rng(seed, {s, g, r});
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const double rep_scale = std::max(0.1, 1.0 + noise.repetition_jitter * unit(rng));
        std::array<double, kChannels> gain{};
        double ref = 0;
        for (std::size_t c = 0; c < kChannels; ++c) {
          gain[c] = tpl.gain[g][c] * subject_scale[g][c] * rep_scale;
          ref += gain[c] / kChannels;
        }
        const double mod_hz =
            noise.modulation_low_hz + (noise.modulation_high_hz - noise.modulation_low_hz) * uni(rng);
        std::array<double, kChannels> mod_phase{};
        for (std::size_t c = 0; c < kChannels; ++c) {
          mod_phase[c] = tpl.phase[g][c] + noise.phase_jitter * (2.0 * uni(rng) - 1.0);
        }
        const double line_phase = kTwoPi * uni(rng);
        std::array<double, 2> drift_hz{0.1 + 2.9 * uni(rng), 0.1 + 2.9 * uni(rng)};
        std::array<double, 2> drift_phase{kTwoPi * uni(rng), kTwoPi * uni(rng)};

        const auto shared = band_noise(n, fs, noise.band_low_hz, noise.band_high_hz, rng);
        signal::Recording rec;
        rec.sample_rate_hz = kSampleRateHz;
        rec.gesture_label = static_cast<int>(g);
        rec.subject_id = sid;
        rec.repetition_index = static_cast<int>(r);
        for (std::size_t c = 0; c < kChannels; ++c) {
          const auto priv = band_noise(n, fs, noise.band_low_hz, noise.band_high_hz, rng);
          std::normal_distribution<double> white(0.0, 1.0);
          auto& ch = rec.channels[c];
          ch.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / fs;
            const double carrier = own * priv[i] + rho * tpl.polarity[g][c] * shared[i];
            const double mod =
                1.0 + noise.modulation_depth *
                          std::sin(kTwoPi * mod_hz * t + mod_phase[c]);
            const double env = burst(tpl, static_cast<double>(i) / static_cast<double>(n));
            double v = gain[c] * env * mod * carrier;
            v += ref * noise.interference_50hz * std::sin(kTwoPi * 50.0 * t + line_phase);
            v += ref * noise.drift * 0.5 *
                 (std::sin(kTwoPi * drift_hz[0] * t + drift_phase[0]) +
                  std::sin(kTwoPi * drift_hz[1] * t + drift_phase[1]));
            v += noise.white_noise_sigma * white(rng);
            ch[i] = static_cast<float>(v);
          }
        }
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

std::vector<signal::Recording> default_corpus(std::uint64_t seed) {
  return generate_corpus(make_template({.seed = seed}), NoiseSpec{}, 15, 1, seed);
}

// ------------------------------------------------------------------ sanity

namespace {

std::vector<features::SpectrumBin> spectrum_of(std::span<const float> x, int fs) {
  std::vector<double> d(x.begin(), x.end());
  return features::power_spectrum(d, fs);
}

}  // namespace

double line_ratio(std::span<const float> x, int sample_rate_hz, double line_hz) {
  const auto spec = spectrum_of(x, sample_rate_hz);
  const double df = spec.size() > 1 ? spec[1].frequency_hz : 1.0;
  const auto line = static_cast<std::size_t>(std::llround(line_hz / df));
  double sum = 0;
  std::size_t count = 0;
  for (const auto& b : spec) {
    const double off = std::abs(b.frequency_hz - line_hz);
    if (off >= 2.0 && off <= 5.0) {
      sum += b.power;
      ++count;
    }
  }
  if (count == 0 || sum <= 0) return 0.0;
  return spec.at(line).power / (sum / static_cast<double>(count));
}

double band_power_fraction(std::span<const float> x, int sample_rate_hz, double lo, double hi) {
  double in = 0, total = 0;
  for (const auto& b : spectrum_of(x, sample_rate_hz)) {
    total += b.power;
    if (b.frequency_hz >= lo && b.frequency_hz <= hi) in += b.power;
  }
  return total > 0 ? in / total : 0.0;
}

SanityReport corpus_sanity(const std::vector<signal::Recording>& corpus) {
  SanityReport rep;
  if (corpus.empty()) return rep;
  const auto bank = signal::design_filter_bank();
  int max_label = 0;
  for (const auto& r : corpus) max_label = std::max(max_label, r.gesture_label);
  rep.class_power.assign(max_label + 1, {});
  std::vector<std::size_t> class_count(max_label + 1, 0);
  std::vector<std::array<double, kChannels>> mav(corpus.size());
  double raw_sum = 0, filt_sum = 0;
  rep.band_fraction_min = 1.0;

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& raw = corpus[i];
    const auto filt = signal::filter_recording(raw, bank);
    double in = 0, total = 0;
    for (std::size_t c = 0; c < kChannels; ++c) {
      raw_sum += line_ratio(raw.channels[c], raw.sample_rate_hz);
      filt_sum += line_ratio(filt.channels[c], raw.sample_rate_hz);
      for (const auto& b : spectrum_of(filt.channels[c], raw.sample_rate_hz)) {
        total += b.power;
        if (b.frequency_hz >= 20.0 && b.frequency_hz <= 95.0) in += b.power;
      }
      double p = 0;
      for (float v : filt.channels[c]) p += static_cast<double>(v) * v;
      rep.class_power[raw.gesture_label][c] += p / static_cast<double>(filt.length());
    }
    ++class_count[raw.gesture_label];
    rep.band_fraction_min = std::min(rep.band_fraction_min, total > 0 ? in / total : 0.0);

    const auto windows = signal::segment_windows(filt);
    for (const auto& w : windows) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        double s = 0;
        for (std::size_t t = 0; t < w.rows(); ++t) s += std::abs(w.at(t, c));
        mav[i][c] += s / static_cast<double>(w.rows()) / static_cast<double>(windows.size());
      }
    }
  }
  for (std::size_t g = 0; g < rep.class_power.size(); ++g) {
    for (auto& v : rep.class_power[g]) v /= std::max<std::size_t>(1, class_count[g]);
  }
  const double lines = static_cast<double>(corpus.size() * kChannels);
  rep.line_ratio_raw = raw_sum / lines;
  rep.line_ratio_filtered = filt_sum / lines;

  std::size_t hits = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    double best = INFINITY;
    std::size_t arg = i;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      if (j == i) continue;
      const double d = row_distance(mav[i], mav[j]);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    if (arg != i && corpus[arg].gesture_label == corpus[i].gesture_label) ++hits;
  }
  rep.mav_1nn_accuracy = static_cast<double>(hits) / static_cast<double>(corpus.size());
  return rep;
}

}  // namespace semg::synth
