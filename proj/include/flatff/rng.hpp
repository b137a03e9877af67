#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace flatff {

using Rng = std::mt19937_64;

/// Independent generator derived from a root seed, a stream name
/// ("data", "init", "shuffle", "probe", ...) and an optional index.
/// The same triple always yields the same sequence.
Rng make_stream(std::uint64_t root_seed, std::string_view name,
                std::uint64_t index = 0);

}  // namespace flatff
