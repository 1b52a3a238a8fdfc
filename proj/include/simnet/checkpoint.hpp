#pragma once

#include <cstddef>
#include <string>

#include "simnet/network.hpp"

namespace simnet {

// Binary checkpoint: magic "SIMN", a one-byte format version, then a
// length-prefixed stage list. Each stage carries a role tag, its dims, and
// raw little-endian 64-bit float parameter blocks in declaration order.
// Round trips are bit-exact.

inline constexpr unsigned char kCheckpointVersion = 1;

void save_checkpoint(const NetworkSpec& spec, const std::string& path);
NetworkSpec load_checkpoint(const std::string& path);

// Bytes of the f64 blocks holding counted parameters (8 * param count).
std::size_t checkpoint_param_bytes(const NetworkSpec& spec);
// Everything else: magic, version, tags, dims, scalar knobs, channel means.
std::size_t checkpoint_overhead_bytes(const NetworkSpec& spec);

}  // namespace simnet
