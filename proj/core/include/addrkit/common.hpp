// Shared plumbing: error taxonomy, deterministic RNG, hashing, small file helpers.
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace addrkit {

enum class ErrorCategory { config, domain, io, internal };

const char* to_string(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorCategory::config, msg) {}
};
struct DomainFailure : Error {
  explicit DomainFailure(const std::string& msg) : Error(ErrorCategory::domain, msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorCategory::io, msg) {}
};

// FNV-1a, 64 bit. Stable across platforms; used for stage hashes and seed derivation.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = kFnvOffset);
std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset);

std::string hex64(std::uint64_t v);

// Deterministic seed for a named sub-stream of a master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& tag);

// Thin wrapper over mt19937_64 with our own draw logic so every sampled value
// is reproducible from the seed alone, independent of libstdc++ distribution
// internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller (no cached spare; two draws per call).
  double gaussian();

  // Index into a non-negative weight vector; weights are normalized internally.
  std::size_t categorical(const std::vector<double>& weights);

  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const void* data, std::size_t n);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

// Fixed-format float used everywhere we print fractions into reports.
std::string format_fixed(double v, int decimals);

}  // namespace addrkit
