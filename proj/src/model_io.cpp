#include <json.hpp>

#include "semg/sedcnn.hpp"

namespace semg::sedcnn {

namespace {

constexpr std::uint32_t kMagic = 0x4d434453;  // "SDCM"

nlohmann::json history_json(const TrainingHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy});
  }
  return {{"epochs", epochs},
          {"best_epoch", h.best_epoch},
          {"best_val_accuracy", h.best_val_accuracy},
          {"early_stopped", h.early_stopped}};
}

TrainingHistory history_from(const nlohmann::json& j) {
  TrainingHistory h;
  for (const auto& e : j.at("epochs")) {
    h.epochs.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>(),
                        e.at(3).get<double>()});
  }
  h.best_epoch = j.at("best_epoch").get<std::size_t>();
  h.best_val_accuracy = j.at("best_val_accuracy").get<double>();
  h.early_stopped = j.at("early_stopped").get<bool>();
  return h;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const SedcnnModel& model) {
  ByteWriter w;
  w.u32(kMagic);
  w.u32(kModelFormatVersion);
  nlohmann::json header;
  header["config"] = nlohmann::json::parse(config_to_json(model.config()));
  header["history"] = history_json(model.history);
  w.str(header.dump());
  const auto params = model.net.parameters();
  w.u64(params.size());
  for (const auto* p : params) {
    w.str(p->name);
    w.u64(p->value.size());
    for (float v : p->value.storage()) w.f32(v);
  }
  w.u64(fnv1a64(w.buffer()));
  return std::move(w.buffer());
}

SedcnnModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 8 || r.u32() != kMagic) {
    throw Error(Errc::corruption, "not a SEDCNN model file");
  }
  const auto version = r.u32();
  if (version != kModelFormatVersion) {
    throw Error(Errc::format_version, "model format version " + std::to_string(version) +
                                          " found, expected " +
                                          std::to_string(kModelFormatVersion));
  }
  if (bytes.size() < 16) throw Error(Errc::corruption, "model file truncated");
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.last(8));
  if (fnv1a64(body) != tail.u64()) throw Error(Errc::corruption, "model checksum mismatch");

  SedcnnConfig cfg;
  TrainingHistory history;
  try {
    const auto header = nlohmann::json::parse(r.str());
    cfg = config_from_json(header.at("config").dump());
    history = history_from(header.at("history"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corruption, std::string("bad model header: ") + e.what());
  }
  SedcnnModel model(cfg);
  model.history = std::move(history);
  auto params = model.net.parameters();
  if (r.u64() != params.size()) throw Error(Errc::corruption, "parameter block count mismatch");
  for (auto* p : params) {
    const auto name = r.str();
    const auto n = r.u64();
    if (name != p->name || n != p->value.size()) {
      throw Error(Errc::corruption, "unexpected parameter block " + name);
    }
    for (auto& v : p->value.storage()) v = r.f32();
  }
  if (r.remaining() != 8) throw Error(Errc::corruption, "trailing bytes in model file");
  return model;
}

void save_model(const SedcnnModel& model, const std::string& path) {
  write_file_bytes(path, serialize_model(model));
}

SedcnnModel load_model(const std::string& path) { return deserialize_model(read_file_bytes(path)); }

}  // namespace semg::sedcnn
