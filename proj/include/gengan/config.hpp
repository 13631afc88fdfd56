#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gengan {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat `key = value` document. Blank lines and '#' comments are skipped;
/// a line without '=' or with an empty key raises ParseError(line), as does
/// a repeated key.
std::vector<KeyValue> parse_key_values(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);  // MissingAsset if absent

// Typed conversions; ParseError(kv.line) on malformed values.
int to_int(const KeyValue& kv);
std::uint64_t to_u64(const KeyValue& kv);
double to_double(const KeyValue& kv);

/// Output root for relative CLI paths: $GENGAN_OUTPUT_ROOT or the current
/// directory.
std::filesystem::path output_root();
std::filesystem::path resolve_output(const std::filesystem::path& p);

}  // namespace gengan
