#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace argex {

// Error taxonomy shared by the C++ core and the C API layer.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    invalid_argument,
    config,
    io,
    missing_prerequisite,
    stage,
    locked,
    internal,
  };

  Error(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

[[noreturn]] void fail(Error::Kind kind, const std::string& message);

std::string lower_copy(std::string s);
std::string trim_copy(const std::string& s);
std::vector<std::string> split_whitespace(const std::string& s);
std::vector<std::string> split_on(const std::string& s, const std::string& sep);
std::string join_tokens(const std::vector<std::string>& tokens, const std::string& sep);

// Role identity is exact string equality after lowercasing and trimming.
std::string canonical_role(const std::string& role);

// First start index of `needle` as a contiguous token subsequence, or -1.
int find_token_subsequence(const std::vector<std::string>& haystack,
                           const std::vector<std::string>& needle, int from = 0);

uint64_t fnv1a64(const std::string& s);
uint64_t splitmix64(uint64_t x);

// Named sub-seed derivation. All stage randomness flows from the global seed
// through tags like "propose/seed=1/round=2", logged in the run manifest.
uint64_t derive_seed(uint64_t global_seed, const std::string& tag);

std::mt19937_64 make_rng(uint64_t seed);

}  // namespace argex
