#include "gengan/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gengan/error.hpp"

namespace gengan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const KeyValue& kv, const char* kind) {
  T v{};
  const char* first = kv.value.data();
  const char* last = first + kv.value.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last)
    throw ParseError(kv.line, "'" + kv.key + "' expects " + kind + ", got '" + kv.value + "'");
  return v;
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected key=value");
    KeyValue kv{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (kv.key.empty()) throw ParseError(line, "empty key");
    if (!seen.insert(kv.key).second) throw ParseError(line, "duplicate key '" + kv.key + "'");
    out.push_back(std::move(kv));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAsset(path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int to_int(const KeyValue& kv) { return parse_number<int>(kv, "an integer"); }
std::uint64_t to_u64(const KeyValue& kv) { return parse_number<std::uint64_t>(kv, "a non-negative integer"); }
double to_double(const KeyValue& kv) { return parse_number<double>(kv, "a number"); }

std::filesystem::path output_root() {
  if (const char* env = std::getenv("GENGAN_OUTPUT_ROOT"); env && *env) return env;
  return std::filesystem::current_path();
}

std::filesystem::path resolve_output(const std::filesystem::path& p) {
  return p.is_absolute() ? p : output_root() / p;
}

}  // namespace gengan
