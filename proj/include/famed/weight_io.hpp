#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "famed/file_util.hpp"
#include "famed/network.hpp"

namespace famed {

/// Weight file layout (all integers little-endian):
///
///   "FMDN"  u32 version  u32 config_len  config text (NetConfig::serialize)
///   u32 tensor_count
///   per tensor: u32 name_len, name, u8 kind, u32 dims[4], u64 byte_offset
///   data: IEEE-754 binary32 little-endian values in directory order
///
/// Offsets are absolute, strictly increasing and must exactly tile the
/// data section up to the end of the file.
inline constexpr char kWeightMagic[4] = {'F', 'M', 'D', 'N'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct WeightFile {
  NetConfig config;
  WeightStore store;
};

std::string encode_weights(const NetConfig& config, const WeightStore& store);
WeightFile decode_weights(const std::vector<std::uint8_t>& bytes,
                          const std::string& origin = "<memory>");

void save_weights(const NetConfig& config, const WeightStore& store, const std::string& path);
inline void save_weights(const Network& net, const std::string& path) {
  save_weights(net.config(), net.weights(), path);
}

WeightFile load_weights(const std::string& path);

/// Builds the architecture the file describes and loads its tensors.
Network load_network(const std::string& path);

}  // namespace famed
