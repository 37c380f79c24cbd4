#pragma once

#include <map>
#include <string>

#include "wahnerf/field.hpp"

namespace wah {

/// Flat, versioned key/value container used for every checkpoint.
///
/// Byte layout (all integers little-endian):
///   "WAHCKPT\0"            8-byte magic
///   u32 version            currently 1
///   u32 entry_count
///   entry_count entries, sorted by name, each:
///     u8  kind             0 = f64 tensor, 1 = UTF-8 string
///     u32 name_length, name bytes
///     kind 0: u32 ndim, ndim x u64 dims, prod(dims) x f64 (IEEE-754, row-major)
///     kind 1: u64 length, bytes
struct Container {
  std::map<std::string, ParamTensor> tensors;
  std::map<std::string, std::string> strings;
};

inline constexpr unsigned kContainerVersion = 1;

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

std::string to_string(const LayerSpec& spec);
LayerSpec layer_spec_from_string(const std::string& text);

/// Stores the field as "field.<tensor>" tensors plus a "field.spec" string.
void put_field(Container& c, const FieldParams& params);
FieldParams get_field(const Container& c);

void save_field(const std::string& path, const FieldParams& params);
FieldParams load_field(const std::string& path);

}  // namespace wah
