#pragma once

#include "spidl/mlp.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace spidl {

/// Named networks in one textual checkpoint. Parameters are written as hex
/// floats so a load reproduces them bit for bit.
using NetworkBundle = std::map<std::string, Network>;

void save_checkpoint(const NetworkBundle& networks, const std::filesystem::path& path);
NetworkBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace spidl
