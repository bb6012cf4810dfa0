#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gsamia {

/// Binary checkpoint container shared by denoiser, attack-model and dataset
/// files. Layout, all integers and floats little-endian:
///
///   magic          8 bytes (e.g. "GSAMIA01")
///   version        u32
///   header_count   u32
///   header         u32 x header_count
///   payload_count  u64
///   payload        f64 x payload_count
struct Container {
  std::string magic;
  std::uint32_t version = 1;
  std::vector<std::uint32_t> header;
  std::vector<double> payload;
};

void write_container(const std::filesystem::path& path, const Container& c);
/// Throws std::runtime_error on I/O failure, magic mismatch or truncation.
Container read_container(const std::filesystem::path& path, const std::string& expected_magic);

}  // namespace gsamia
