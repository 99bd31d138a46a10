#pragma once

#include <filesystem>
#include <string>

#include "tadfkd/network.hpp"

namespace tadfkd {

// Checkpoint schema: JSON {schema_version, kind, layer_spec, params,
// bn_running, crc32}. Floats are written in shortest round-trip decimal
// form; save -> load -> save is byte-identical. The crc32 covers the
// canonical serialization of everything except the crc32 field itself.

inline constexpr int kCheckpointSchemaVersion = 1;

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

// Canonical JSON text of the checkpoint without the crc32 field.
std::string canonical_network_json(const Network& net);

} // namespace tadfkd
