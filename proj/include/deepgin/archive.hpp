#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "deepgin/tensor.hpp"

namespace deepgin {

// Single-file container of named tensor groups. Layout, little-endian:
//   "DEEPGIN\0"  u32 version  u64 fingerprint
//   u32 n + n bytes of metadata text (key=value lines)
//   u32 group count, then per group:
//     u32 n + name, u32 tensor count, then per tensor:
//       u32 n + name, u32 ndim, ndim × i64 dims, numel × f64 values
//   u64 FNV-1a over every preceding byte
struct ArchiveTensor {
  std::string name;
  nn::Shape shape;
  std::vector<double> values;
};

struct ArchiveGroup {
  std::string name;
  std::vector<ArchiveTensor> tensors;

  const ArchiveTensor* find(const std::string& tensor) const;
};

struct Archive {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t fingerprint = 0;
  std::map<std::string, std::string> metadata;
  std::vector<ArchiveGroup> groups;

  const ArchiveGroup* find(const std::string& group) const;
  ArchiveGroup& group(const std::string& name);  // created on first use
};

std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t seed = 1469598103934665603ull);
std::uint64_t fnv1a(const std::string& s);

std::string serialize_archive(const Archive& a);
// FormatError on bad magic, version, truncation or checksum mismatch.
Archive parse_archive(const std::string& bytes);

// Atomic write: temp file in the same directory, then rename.
void save_archive(const Archive& a, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

}  // namespace deepgin
