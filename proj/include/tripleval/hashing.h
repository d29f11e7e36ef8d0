#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tripleval {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// SHA-256 of a sequence of fields. Each field is length-prefixed so that
// ("ab", "c") and ("a", "bc") hash differently.
std::string sha256_fields(std::initializer_list<std::string_view> fields);

std::string sha256_file(const std::string& path);

// First 8 bytes of the SHA-256 over the fields, big-endian.
uint64_t stable_seed(std::initializer_list<std::string_view> fields);

// mt19937_64 with bounded draws and shuffles that do not depend on the
// standard library's distribution implementations, so sampled outputs are
// byte-stable across toolchains.
class DeterministicRng {
 public:
  explicit DeterministicRng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform in [0, bound). bound must be > 0.
  uint64_t uniform_below(uint64_t bound);

  // Uniform in [lo, hi].
  uint64_t uniform_between(uint64_t lo, uint64_t hi) {
    return lo + uniform_below(hi - lo + 1);
  }

  bool coin() { return (next() >> 63) != 0; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices from [0, n), in draw order. Requires k <= n.
  std::vector<size_t> sample_indices(size_t n, size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace tripleval
