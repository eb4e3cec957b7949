#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace udkit::checkpoint {

// Binary layout, all little-endian:
//   "UDK1"  u32 count
//   per array: u32 name_len, name bytes, u32 rank, rank x u64 dims,
//              product(dims) x f32 payload
struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> deserialize(const std::string& bytes);

// Writes to a sibling temporary file, then renames over `path`.
void write(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read(const std::filesystem::path& path);

}  // namespace udkit::checkpoint

#include <span>

#include "udkit/tensor.hpp"

namespace udkit::checkpoint {

std::vector<NamedArray> export_parameters(std::span<Parameter* const> params);

// Copies arrays into same-named parameters. Throws std::invalid_argument
// naming the array when one is missing or its shape differs (both shapes
// are given). Arrays with no matching parameter are an error unless
// `allow_extra` is set.
void import_parameters(std::span<Parameter* const> params, const std::vector<NamedArray>& arrays,
                       bool allow_extra = false);

}  // namespace udkit::checkpoint
