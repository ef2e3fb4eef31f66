#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ipg/params.hpp"

namespace ipg {

// Binary layout (little-endian):
//   "IPGN" | u32 version | u64 config digest | u32 epoch | u64 iteration |
//   u32 len + rng bytes | u32 count + parameter records |
//   u32 count + momentum records
// record: u32 name length | name | u32 x4 shape (n, c, h, w) | f64 data
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, Tensor> parameters;  // includes norm running stats
  std::map<std::string, Tensor> momentum;
  std::uint32_t epoch = 0;
  std::uint64_t iteration = 0;
  std::vector<std::uint8_t> rng_state;
  std::uint64_t config_digest = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot of every parameter in `store` (values copied).
std::map<std::string, Tensor> snapshot(const ParamStore& store);

// Copies checkpoint values into `store`. Throws ConfigError when the digest
// differs from `expected_digest` or when names / shapes disagree.
void restore(const Checkpoint& ckpt, ParamStore& store, std::uint64_t expected_digest);

}  // namespace ipg
