#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace pheno {

// Missing measurements are carried as quiet NaN so feature vectors keep a
// fixed width regardless of sensor consent or dropout.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

enum class ErrorKind { usage, data, training, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::data, msg);
}
[[noreturn]] inline void throw_training(const std::string& msg) {
  throw Error(ErrorKind::training, msg);
}
[[noreturn]] inline void throw_internal(const std::string& msg) {
  throw Error(ErrorKind::internal, msg);
}

// FNV-1a, used for registry hashes and input digests.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace pheno
