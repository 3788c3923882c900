#pragma once

#include <string>
#include <vector>

#include "semg/signal.hpp"

namespace semg::signal {

// Dataset layout: <dir>/manifest.txt lists one relative CSV path per line;
// each CSV (header t,ch1..ch8) has a JSON sidecar with the same stem.
inline constexpr const char* kManifestName = "manifest.txt";

void write_recording_csv(const Recording& rec, const std::string& csv_path);
Recording read_recording_csv(const std::string& csv_path);

void write_dataset(const std::vector<Recording>& recs, const std::string& dir);
std::vector<Recording> read_dataset(const std::string& dir);

std::string recording_stem(const Recording& rec);

}  // namespace semg::signal
