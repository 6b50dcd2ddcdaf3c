#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrx {

// Base error for everything this library throws on contract violations.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension disagreement between operands.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed serialized input (JSON schema violations, bad containers).
struct SchemaError : Error {
  explicit SchemaError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration or world specification.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// splitmix64: used to derive independent per-stage / per-item seeds from one
// master seed so that parallel order never affects the random stream.
std::uint64_t splitmix64(std::uint64_t x);

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
}

// Deterministic RNG. std::mt19937_64 is pinned by the standard but the
// std distributions are not, so the transforms live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0xa076bc9d8fed3a12ULL)) {
    if (state_ == 0) state_ = 0x2545f4914f6cdd1dULL;
  }

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  // Standard normal via Box-Muller (both draws consumed every call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates over indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t state_;
};

// FNV-1a, used for report/rerun determinism checks and config hashes.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t v);

std::string base64_encode(const void* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Static-partition parallel for. Tasks must write disjoint outputs; the
// partition depends only on (n, thread count), so results are deterministic
// for a fixed VRX_THREADS.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);
std::size_t worker_count();

}  // namespace vrx
