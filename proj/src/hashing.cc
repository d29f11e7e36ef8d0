#include "tripleval/hashing.h"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "tripleval/errors.h"

namespace tripleval {
namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("sha256: digest init failed");
    }
  }

  void update(std::string_view data) {
    if (EVP_DigestUpdate(ctx_.get(), data.data(), data.size()) != 1) {
      throw std::runtime_error("sha256: digest update failed");
    }
  }

  std::array<unsigned char, 32> finish() {
    std::array<unsigned char, 32> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1 || len != 32) {
      throw std::runtime_error("sha256: digest final failed");
    }
    return out;
  }

 private:
  MdCtx ctx_;
};

std::string to_hex(const std::array<unsigned char, 32>& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

std::array<unsigned char, 32> digest_fields(
    std::initializer_list<std::string_view> fields) {
  Sha256 sha;
  for (std::string_view f : fields) {
    uint64_t n = f.size();
    unsigned char len[8];
    for (int i = 7; i >= 0; --i) {
      len[i] = static_cast<unsigned char>(n & 0xff);
      n >>= 8;
    }
    sha.update(std::string_view(reinterpret_cast<const char*>(len), 8));
    sha.update(f);
  }
  return sha.finish();
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 sha;
  sha.update(data);
  return to_hex(sha.finish());
}

std::string sha256_fields(std::initializer_list<std::string_view> fields) {
  return to_hex(digest_fields(fields));
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path + " for hashing");
  Sha256 sha;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    sha.update(std::string_view(buf.data(), static_cast<size_t>(in.gcount())));
  }
  return to_hex(sha.finish());
}

uint64_t stable_seed(std::initializer_list<std::string_view> fields) {
  auto digest = digest_fields(fields);
  uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed = (seed << 8) | digest[i];
  return seed;
}

uint64_t DeterministicRng::uniform_below(uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: bound must be > 0");
  // Rejection sampling on the largest multiple of bound.
  const uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % bound;
}

std::vector<size_t> DeterministicRng::sample_indices(size_t n, size_t k) {
  if (k > n) throw std::invalid_argument("sample_indices: k exceeds population");
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  // Partial Fisher-Yates from the front.
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(uniform_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace tripleval
