#include "semg/dataset_io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace semg::signal {

namespace fs = std::filesystem;

namespace {

std::string sidecar_path(const std::string& csv_path) {
  return fs::path(csv_path).replace_extension(".json").string();
}

float parse_float(std::string_view tok, const std::string& where) {
  float v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw Error(Errc::io, "bad number '" + std::string(tok) + "' in " + where);
  }
  return v;
}

}  // namespace

std::string recording_stem(const Recording& rec) {
  return rec.subject_id + "_g" + std::to_string(rec.gesture_label) + "_r" +
         std::to_string(rec.repetition_index);
}

void write_recording_csv(const Recording& rec, const std::string& csv_path) {
  validate(rec);
  std::string text = "t,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8\n";
  text.reserve(rec.length() * 8 * 14);
  for (std::size_t i = 0; i < rec.length(); ++i) {
    text += format_real(static_cast<double>(i) / rec.sample_rate_hz);
    for (const auto& ch : rec.channels) {
      text += ',';
      text += format_real(ch[i]);
    }
    text += '\n';
  }
  std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + csv_path);
  out << text;

  nlohmann::ordered_json meta;
  meta["sample_rate_hz"] = rec.sample_rate_hz;
  meta["gesture_label"] = rec.gesture_label;
  meta["subject_id"] = rec.subject_id;
  meta["repetition_index"] = rec.repetition_index;
  std::ofstream side(sidecar_path(csv_path), std::ios::binary | std::ios::trunc);
  if (!side) throw Error(Errc::io, "cannot write sidecar for " + csv_path);
  side << meta.dump(2) << '\n';
}

Recording read_recording_csv(const std::string& csv_path) {
  std::ifstream side(sidecar_path(csv_path));
  if (!side) throw Error(Errc::io, "missing sidecar for " + csv_path);
  Recording rec;
  try {
    const auto meta = nlohmann::json::parse(side);
    rec.sample_rate_hz = meta.at("sample_rate_hz").get<int>();
    rec.gesture_label = meta.at("gesture_label").get<int>();
    rec.subject_id = meta.at("subject_id").get<std::string>();
    rec.repetition_index = meta.at("repetition_index").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::io, "bad sidecar for " + csv_path + ": " + e.what());
  }

  std::ifstream in(csv_path);
  if (!in) throw Error(Errc::io, "cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,ch1", 0) != 0) {
    throw Error(Errc::io, "missing header in " + csv_path);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string_view rest(line);
    std::size_t col = 0;
    while (true) {
      const auto comma = rest.find(',');
      const auto tok = rest.substr(0, comma);
      if (col > 0) {
        if (col > kChannels) throw Error(Errc::io, "too many columns in " + csv_path);
        rec.channels[col - 1].push_back(parse_float(tok, csv_path));
      }
      ++col;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (col != kChannels + 1) throw Error(Errc::io, "short row in " + csv_path);
  }
  validate(rec);
  return rec;
}

void write_dataset(const std::vector<Recording>& recs, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  for (const auto& r : recs) {
    const auto name = recording_stem(r) + ".csv";
    write_recording_csv(r, (fs::path(dir) / name).string());
    manifest << name << '\n';
  }
  std::ofstream out(fs::path(dir) / kManifestName, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write manifest in " + dir);
  out << manifest.str();
}

std::vector<Recording> read_dataset(const std::string& dir) {
  std::ifstream in(fs::path(dir) / kManifestName);
  if (!in) throw Error(Errc::io, "no manifest in " + dir);
  std::vector<Recording> recs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    recs.push_back(read_recording_csv((fs::path(dir) / line).string()));
  }
  if (recs.empty()) throw Error(Errc::empty_dataset, "manifest in " + dir + " lists nothing");
  return recs;
}

}  // namespace semg::signal
