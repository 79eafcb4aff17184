#pragma once

#include <map>
#include <string>

#include "centeratt/tensor.hpp"

namespace centeratt {

using WeightStore = std::map<std::string, Tensor>;

// Lookup that names the missing tensor on failure.
const Tensor& fetch_weight(const WeightStore& store, const std::string& name);
bool has_weight(const WeightStore& store, const std::string& name);

// Binary weight file: magic "CATW", version u32, entry count u32; per entry
// name length u16 + bytes, rank u8, dims u32 each, precision u8, then values
// (f32, or u16 binary16 bits when precision marks half). Little endian.
void save_weights(const std::string& path, const WeightStore& store);
WeightStore load_weights(const std::string& path);

}  // namespace centeratt
