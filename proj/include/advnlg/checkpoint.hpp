#pragma once

#include "advnlg/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace advnlg {

// Single-file binary checkpoint: magic, format version, then named entries
// (name, shape, raw little-endian float64 values). Parameters are stored
// under "<store prefix>.<name>", RMSprop accumulators under "rms/" and
// batch-norm running stats under "stat/". Round-trips are bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path,
                     std::span<const ParamStore* const> stores);

// Fills existing stores; every entry must match a registered parameter,
// accumulator, or running stat of identical shape.
void load_checkpoint(const std::string& path, std::span<ParamStore* const> stores);

}  // namespace advnlg
