#include "semg/common.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

namespace semg {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::invalid_frequency: return "invalid frequency";
    case Errc::insufficient_samples: return "insufficient samples";
    case Errc::dimension: return "dimension error";
    case Errc::series_too_short: return "series too short";
    case Errc::zero_power: return "zero power";
    case Errc::feature_extraction: return "feature extraction error";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::degenerate_batch: return "degenerate batch";
    case Errc::divisibility: return "divisibility error";
    case Errc::config_validation: return "config validation error";
    case Errc::empty_dataset: return "empty dataset";
    case Errc::divergence: return "divergence";
    case Errc::format_version: return "format version mismatch";
    case Errc::corruption: return "corrupt container";
    case Errc::single_class: return "single class";
    case Errc::missing_class: return "missing class";
    case Errc::label_out_of_range: return "label out of range";
    case Errc::empty_matrix: return "empty matrix";
    case Errc::template_separation: return "template separation failure";
    case Errc::bundle_not_loaded: return "bundle not loaded";
    case Errc::io: return "i/o error";
  }
  return "unknown error";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t state) {
  for (auto b : bytes) {
    state ^= b;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

static_assert(std::endian::native == std::endian::little,
              "containers are written in host order, which must be little-endian");

void ByteWriter::u32(std::uint32_t v) {
  auto p = reinterpret_cast<const std::uint8_t*>(&v);
  buf_.insert(buf_.end(), p, p + sizeof v);
}
void ByteWriter::u64(std::uint64_t v) {
  auto p = reinterpret_cast<const std::uint8_t*>(&v);
  buf_.insert(buf_.end(), p, p + sizeof v);
}
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void ByteWriter::bytes(std::span<const std::uint8_t> data) {
  buf_.insert(buf_.end(), data.begin(), data.end());
}
void ByteWriter::str(std::string_view s) {
  u64(s.size());
  bytes(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw Error(Errc::corruption, "unexpected end of data at offset " + std::to_string(pos_));
  }
}
std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return v;
}
std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, data_.data() + pos_, 8);
  pos_ += 8;
  return v;
}
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}
std::string ByteReader::str() {
  auto n = u64();
  auto b = bytes(n);
  return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::io, "write failed for " + path);
}

namespace {
template <typename T>
std::string format_impl(T v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error(Errc::invalid_argument, "unformattable value");
  return std::string(buf, end);
}
}  // namespace

std::string format_real(double v) { return format_impl(v); }
std::string format_real(float v) { return format_impl(v); }

}  // namespace semg
