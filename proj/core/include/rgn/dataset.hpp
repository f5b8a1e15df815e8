#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <span>
#include <vector>

#include "rgn/sequence.hpp"

namespace rgn {

/// Raised for malformed dataset files; the message names the offending line.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSONL, one sequence per line: {"id":..., "T":..., "events":[{"t":..., "y":...}]}.
/// Each sequence is validated; with num_types set, marks must be below it.
std::vector<EventSequence> read_dataset(std::istream& in,
                                        std::optional<std::size_t> num_types = std::nullopt);
std::vector<EventSequence> load_dataset(const std::filesystem::path& path,
                                        std::optional<std::size_t> num_types = std::nullopt);

void write_dataset(std::ostream& out, std::span<const EventSequence> sequences);
void save_dataset(const std::filesystem::path& path, std::span<const EventSequence> sequences);

/// 1 + the largest mark present (1 for a dataset without events).
[[nodiscard]] std::size_t infer_num_types(std::span<const EventSequence> sequences);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplits {
  std::vector<EventSequence> train;
  std::vector<EventSequence> validation;
  std::vector<EventSequence> test;
};

/// Seeded shuffle, then train = round(n * train), validation =
/// round(n * validation), test = the rest.
DatasetSplits split_dataset(std::vector<EventSequence> sequences, const SplitFractions& fractions,
                            std::uint64_t seed);

}  // namespace rgn
