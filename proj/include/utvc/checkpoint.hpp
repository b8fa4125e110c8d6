#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "utvc/tensor.hpp"

namespace utvc {

// Versioned binary container for named tensors: magic "UTVC", format
// version u16, record count u32, then per record a length-prefixed name,
// a rank byte with u32 extents, and the row-major float32 payload.
// Little-endian throughout, independent of host byte order.

constexpr uint16_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// rejects duplicate names; parse also rejects trailing bytes, bad magic,
// unknown versions, and truncation, naming the offending record
std::vector<uint8_t> serialize_checkpoint(const NamedTensors& records);
NamedTensors parse_checkpoint(const uint8_t* bytes, size_t n);

void save_checkpoint(const std::string& path, const NamedTensors& records);
NamedTensors load_checkpoint(const std::string& path);

// FNV-1a 64-bit; applied to the serialized container it binds bitstreams to
// the exact parameter bytes that produced them
uint64_t fnv1a64(const uint8_t* bytes, size_t n);
uint64_t checkpoint_hash(const NamedTensors& records);

// whole-file byte IO; throws on open/short IO failure
std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace utvc
