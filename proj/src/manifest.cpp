#include "clt/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "clt/common.hpp"
#include "clt/rng.hpp"

namespace clt {

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("hash_file: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

void write_manifest(const std::string& out_path, const std::string& command,
                    const nlohmann::ordered_json& config,
                    const std::vector<std::string>& input_files) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config"] = config;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& path : input_files) {
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << hash_file(path);
    j["inputs"].push_back(
        nlohmann::ordered_json{{"path", path}, {"fnv1a64", hex.str()}});
  }
  std::ofstream out(out_path);
  if (!out) throw DataError("write_manifest: cannot open " + out_path);
  out << j.dump(2) << "\n";
}

}  // namespace clt
