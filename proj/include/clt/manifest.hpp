#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace clt {

std::uint64_t hash_file(const std::string& path);

// Reproducibility record: the subcommand, the fully resolved configuration,
// and a content hash per input file. Contains no timestamps, so identical
// runs write identical manifests.
void write_manifest(const std::string& out_path, const std::string& command,
                    const nlohmann::ordered_json& config,
                    const std::vector<std::string>& input_files);

}  // namespace clt
