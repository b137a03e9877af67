#include "flatff/rng.hpp"

#include <array>

namespace flatff {

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

}  // namespace

Rng make_stream(std::uint64_t root_seed, std::string_view name,
                std::uint64_t index) {
  const std::uint64_t tag = fnv1a(name);
  std::seed_seq seq{lo(root_seed), hi(root_seed), lo(tag),
                    hi(tag),       lo(index),     hi(index)};
  return Rng(seq);
}

}  // namespace flatff
