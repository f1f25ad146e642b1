#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scope/tensor.hpp"

namespace scope {

// Weight snapshot container. Layout (little-endian, normative for
// cross-run reproducibility):
//   magic "SCWT", format version u32,
//   then per parameter: name length u32, UTF-8 name bytes,
//   rank u32, dims u64[rank], values f64[prod(dims)].
inline constexpr std::uint32_t kWeightFormatVersion = 1;

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

std::vector<std::uint8_t> serialize_weights(const NamedParams& params);
void save_weights(const std::string& path, const NamedParams& params);
// Assigns values into the given tensors by name; throws IoError on a
// malformed stream, a missing parameter or a shape mismatch.
void load_weights(const std::string& path, const NamedParams& params);

std::uint64_t weights_hash(const NamedParams& params);

}  // namespace scope
