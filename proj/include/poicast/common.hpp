#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace poicast {

// Error taxonomy, mapped to CLI exit codes (config=1, data=2, training=3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64. Used to derive independent stream seeds from the single run
// seed so that e.g. split assignment and weight init do not share a stream.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t seed, const std::string& stream) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix_seed(seed, h);
}

}  // namespace poicast
