#pragma once

// LDTN binary tensors plus JSON sidecars.
//
// Layout: "LDTN" magic, version byte (1), dtype byte (0 = f32, 1 = f64), ndim
// byte, one reserved byte, ndim little-endian u64 dims, then the row-major
// little-endian payload.

#include "langdaug/numerics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace langdaug {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::uint8_t kLdtnVersion = 1;

struct Tensor {
    std::vector<std::uint64_t> dims;
    Vector data;
    Dtype dtype = Dtype::f64;

    std::uint64_t element_count() const;
};

void write_ldtn(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_ldtn(const std::filesystem::path& path);

/// "dir/name.ldtn" -> "dir/name.meta.json".
std::filesystem::path meta_path_for(const std::filesystem::path& tensor_path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// FNV-1a checksum of a file's bytes, as 16 lowercase hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace langdaug
