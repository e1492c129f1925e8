#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raincycle/tensor.hpp"

namespace raincycle {

// Named-tensor archive. Layout: magic "RCTA", u32 format version, u64 config
// hash, u32 header length, JSON header (array of {name, dtype, shape, offset}
// records, offsets relative to payload start), then raw little-endian f64
// payloads in record order.
constexpr uint32_t kArchiveVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Archive {
  uint32_t version = kArchiveVersion;
  uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;

  const Tensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::vector<uint8_t> archive_to_bytes(const Archive& a);
Archive archive_from_bytes(const std::vector<uint8_t>& bytes);

void save_archive(const std::string& path, const Archive& a);
Archive load_archive(const std::string& path);

}  // namespace raincycle
