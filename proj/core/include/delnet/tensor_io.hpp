#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "delnet/tensor.hpp"

namespace delnet {

// ".dlt" layout: "DLT1", u32 LE rank, rank × u32 LE extents, then the
// row-major payload as IEEE-754 binary64 little-endian.

std::vector<std::uint8_t> encode_dlt(const Tensor& tensor);
/// Throws FormatError on bad magic, truncation or trailing bytes.
Tensor decode_dlt(const std::vector<std::uint8_t>& bytes);

void write_dlt(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_dlt(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// 64-bit FNV-1a over shapes and IEEE bit patterns of the tensors, in order.
std::uint64_t tensor_digest(const std::vector<Tensor>& tensors);
std::string digest_hex(std::uint64_t digest);

}  // namespace delnet
