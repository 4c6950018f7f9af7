#pragma once

#include "biomoe/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace biomoe {

/// Layout, little-endian throughout:
///   "TBME" | u32 version = 1 | u32 tensor_count |
///   per tensor: u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 rank | u32 dims[rank] | data |
///   u32 CRC-32 of every preceding byte.
inline constexpr std::uint32_t kContainerVersion = 1;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) noexcept;

std::vector<std::uint8_t> encode_container(const WeightStore& weights);

/// Rejects bad magic or version, truncation, trailing bytes, unknown dtypes, duplicate names
/// and checksum mismatches with IntegrityError.
WeightStore decode_container(std::span<const std::uint8_t> bytes);

void save_container(const std::filesystem::path& path, const WeightStore& weights);
WeightStore load_container(const std::filesystem::path& path);

}  // namespace biomoe
