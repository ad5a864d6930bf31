// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint archive. All integers and floats are little-endian.
//
//   magic "WSED" | u32 version
//   u32 n_config  { str key, str value }          configuration echo
//   u32 n_bins    f64 mean[n_bins] f64 std[n_bins] feature normalization
//   u32 n_tensors { record }                       model parameters + buffers
//   u64 adam_step f64 lr f64 beta1 f64 beta2 f64 eps
//   u32 n_moments { record }                       "adam.m.<param>", "adam.v.<param>"
//   u64 epoch     str rng_state
//
//   str    = u32 byte length, UTF-8 bytes
//   record = str name, u8 dtype (1 = f64), u32 rank, u64 extents[rank],
//            f64 payload[prod(extents)]
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wsed/adam.hpp"
#include "wsed/model.hpp"

namespace wsed {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<double> norm_mean;
  std::vector<double> norm_std;
  std::vector<NamedArray> tensors;
  std::uint64_t adam_step = 0;
  AdamConfig adam;
  std::vector<NamedArray> adam_moments;
  std::uint64_t epoch = 0;
  std::string rng_state;

  /// Value of a configuration key; throws DataError when absent.
  const std::string& config_value(const std::string& key) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on bad magic, unknown version, truncation or trailing bytes.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wsed
