#pragma once

#include <cstdint>
#include <string>

#include "nn/params.hpp"

namespace sfd {

struct CheckpointMeta {
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;
};

// Binary checkpoint, little-endian throughout.
// Layout: "SFCK" | u32 version | u64 config_hash | u64 step | u32 scalar_size
//         | u32 param_count | per param: u32 name_len, name bytes, u32 rank,
//         u64 extents[rank], raw scalar data.
template <class T>
void save_checkpoint(const std::string& path, const ParamMap<T>& pm, const CheckpointMeta& meta);

// Loads values into an already-constructed parameter map; every stored name,
// order, shape, and scalar width must match. Returns the stored metadata.
template <class T>
CheckpointMeta load_checkpoint(const std::string& path, const ParamMap<T>& pm);

}  // namespace sfd
