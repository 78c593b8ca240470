#pragma once

// Tensor container format shared by every artifact in the repo:
//
//   MVTENSOR <version> <dtype> <rank> <extent_0> ... <extent_{rank-1}>\n
//   <raw little-endian payload, row-major>
//
// dtype is "f64" or "f32". f64 files round-trip bit-exactly.

#include <filesystem>
#include <string>
#include <string_view>

#include "mvc/tensor.hpp"

namespace mvc {

enum class Dtype { F64, F32 };

inline constexpr std::string_view kTensorMagic = "MVTENSOR";
inline constexpr int kTensorFormatVersion = 1;

std::string encode_tensor(const Tensor& t, Dtype dtype = Dtype::F64);
Tensor decode_tensor(std::string_view bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype = Dtype::F64);
Tensor read_tensor(const std::filesystem::path& path);

// Whole-file helpers used by the container writers.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace mvc
