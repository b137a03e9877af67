#pragma once

#include <filesystem>
#include <iosfwd>

#include "flatff/oracle.hpp"

namespace flatff {

inline constexpr int kDatasetFormatVersion = 1;

/// Line-delimited JSON: a header line {"format", "version", "spec"} followed by
/// n_train training examples then n_val validation examples, one per line.
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace flatff
