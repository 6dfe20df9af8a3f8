#pragma once

// Binary parameter checkpoint, format version 1. All integers are little-endian
// uint32, all reals little-endian IEEE-754 binary64:
//
//   magic     8 bytes  "TNCDCKPT"
//   version   u32      1
//   count     u32      number of named networks
//   per network:
//     name_len u32, name bytes (UTF-8, no terminator)
//     layers   u32
//     per layer:
//       activation u32  (0 identity, 1 relu, 2 sigmoid, 3 softmax)
//       out, in    u32
//       weight     out*in f64, row-major
//       bias       out f64
//
// Values are written bit-for-bit, so save/load round-trips exactly.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tabncd/nn.hpp"

namespace tabncd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedNetworks = std::map<std::string, DenseNet>;

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, const DenseNet*>>& nets);
NamedNetworks load_checkpoint(const std::filesystem::path& path);

}  // namespace tabncd
