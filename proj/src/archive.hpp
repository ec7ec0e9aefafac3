#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace tsdn {

// Binary tensor archive, version 1. Layout (all integers in the writer's byte order):
//   magic "TSDNARC\0" | u32 version | u8 endian tag (1 little, 2 big) | 3 pad bytes | u64 count
//   count x { u32 name_len | name | u8 dtype (1 = float64) | 3 pad | u32 rank | u64 dims[rank] | raw data }
//   u64 FNV-1a checksum of every preceding byte
inline constexpr std::uint32_t kArchiveVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_archive(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_archive(const std::filesystem::path& path);

}  // namespace tsdn
