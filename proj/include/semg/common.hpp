#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace semg {

inline constexpr std::size_t kChannels = 8;
inline constexpr int kSampleRateHz = 200;
inline constexpr int kNumGestures = 10;

enum class Errc {
  invalid_argument,
  invalid_frequency,
  insufficient_samples,
  dimension,
  series_too_short,
  zero_power,
  feature_extraction,
  shape_mismatch,
  degenerate_batch,
  divisibility,
  config_validation,
  empty_dataset,
  divergence,
  format_version,
  corruption,
  single_class,
  missing_class,
  label_out_of_range,
  empty_matrix,
  template_separation,
  bundle_not_loaded,
  io,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

using Rng = std::mt19937_64;

// Independent generator stream keyed by a seed plus any number of integer tags.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

// Little-endian byte sink/source for the binary containers.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::span<const std::uint8_t> data);
  void str(std::string_view s);  // u64 length prefix
  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::string str();
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> data);

// Shortest round-trip decimal text.
std::string format_real(double v);
std::string format_real(float v);

}  // namespace semg
