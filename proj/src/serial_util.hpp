#pragma once

// JSON helpers shared by the model files of the trainer and the attackers.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <vector>

#include "gengan/error.hpp"
#include "gengan/frontend.hpp"
#include "json.hpp"

namespace gengan::detail {

inline nlohmann::json frontend_json(const FrontendConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"fft_size", c.fft_size},   {"hop", c.hop},
          {"n_bands", c.n_bands},         {"f_min", c.f_min},         {"f_max", c.f_max},
          {"padding", c.padding == PaddingMode::reflect ? "reflect" : "none"},
          {"ceiling_db", c.ceiling_db},   {"dynamic_range_db", c.dynamic_range_db}};
}

inline FrontendConfig frontend_from_json(const nlohmann::json& j) {
  FrontendConfig c;
  c.sample_rate = j.at("sample_rate").get<int>();
  c.fft_size = j.at("fft_size").get<int>();
  c.hop = j.at("hop").get<int>();
  c.n_bands = j.at("n_bands").get<int>();
  c.f_min = j.at("f_min").get<double>();
  c.f_max = j.at("f_max").get<double>();
  c.padding = j.at("padding").get<std::string>() == "none" ? PaddingMode::none : PaddingMode::reflect;
  c.ceiling_db = j.at("ceiling_db").get<double>();
  c.dynamic_range_db = j.at("dynamic_range_db").get<double>();
  return c;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json parse_metadata(const std::string& text, const std::string& kind,
                                     const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": unreadable metadata: " + e.what());
  }
  if (!j.is_object() || j.value("kind", std::string()) != kind)
    throw CheckpointError(path.string() + ": not a " + kind + " file");
  return j;
}

}  // namespace gengan::detail
