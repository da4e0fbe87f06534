#pragma once

#include <filesystem>
#include <string>

#include "wsol/json.hpp"
#include "wsol/model.hpp"

namespace wsol {

inline constexpr char kCheckpointMagic[] = "WSOL-CKPT-v1\n";

struct Checkpoint {
  Network net;
  /// Seeds that produced the weights: init, train, data, plus epochs run.
  Json lineage = Json::object();
};

/// Layout: magic, u64 header length, JSON header (model config, lineage,
/// tensor directory), then every parameter and buffer as little-endian f64
/// in directory order.
std::string encode_checkpoint(const Network& net, const Json& lineage);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Network& net, const Json& lineage, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wsol
