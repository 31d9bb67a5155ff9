// Copyright (c) 2026 the jenga authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jenga {

// Raised for invalid model configs, traces, and byte-arithmetic overflow.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised on allocator state-machine violations (double free, bad transition).
class InvariantError : public std::logic_error {
 public:
  explicit InvariantError(const std::string& msg) : std::logic_error(msg) {}
};

#define JENGA_CHECK(cond, msg)                                   \
  do {                                                           \
    if (!(cond)) {                                               \
      throw ::jenga::InvariantError(std::string(msg) + " [" +    \
                                    #cond + "]");                \
    }                                                            \
  } while (0)

inline uint64_t checked_mul(uint64_t a, uint64_t b, const char* what) {
  uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw ConfigError(std::string("byte arithmetic overflow in ") + what);
  }
  return out;
}

inline uint64_t checked_add(uint64_t a, uint64_t b, const char* what) {
  uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) {
    throw ConfigError(std::string("byte arithmetic overflow in ") + what);
  }
  return out;
}

// splitmix64 finalizer; the workhorse for token derivation and block hashing.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

inline uint64_t hash_str(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace jenga
