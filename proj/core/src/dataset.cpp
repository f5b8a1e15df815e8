#include "rgn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace rgn {

using nlohmann::json;

void EventSequence::validate(std::size_t num_types) const {
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("sequence '" + id + "': horizon must be finite and >= 0");
  }
  double prev = 0.0;
  for (std::size_t j = 0; j < events.size(); ++j) {
    const Event& e = events[j];
    if (!std::isfinite(e.time) || !(e.time > prev)) {
      throw std::invalid_argument("sequence '" + id + "': non-monotone timestamp at event " +
                                  std::to_string(j) + " (t=" + std::to_string(e.time) + ")");
    }
    if (e.time > horizon) {
      throw std::invalid_argument("sequence '" + id + "': event " + std::to_string(j) +
                                  " lies beyond horizon " + std::to_string(horizon));
    }
    if (e.type >= num_types) {
      throw std::invalid_argument("sequence '" + id + "': event type " + std::to_string(e.type) +
                                  " >= number of types " + std::to_string(num_types));
    }
    prev = e.time;
  }
}

std::size_t total_events(const std::vector<EventSequence>& sequences) {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

namespace {

EventSequence parse_line(const std::string& line) {
  const json j = json::parse(line);
  EventSequence seq;
  const json& id = j.at("id");
  seq.id = id.is_string() ? id.get<std::string>() : id.dump();
  seq.horizon = j.at("T").get<double>();
  for (const json& e : j.at("events")) {
    const auto y = e.at("y").get<std::int64_t>();
    if (y < 0) throw std::invalid_argument("negative event type " + std::to_string(y));
    seq.events.push_back({e.at("t").get<double>(), static_cast<std::size_t>(y)});
  }
  return seq;
}

}  // namespace

std::vector<EventSequence> read_dataset(std::istream& in, std::optional<std::size_t> num_types) {
  std::vector<EventSequence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      EventSequence seq = parse_line(line);
      seq.validate(num_types.value_or(static_cast<std::size_t>(-1)));
      out.push_back(std::move(seq));
    } catch (const std::exception& e) {
      throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<EventSequence> load_dataset(const std::filesystem::path& path,
                                        std::optional<std::size_t> num_types) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file '" + path.string() + "'");
  try {
    return read_dataset(in, num_types);
  } catch (const DatasetError& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, std::span<const EventSequence> sequences) {
  for (const EventSequence& seq : sequences) {
    json events = json::array();
    for (const Event& e : seq.events) events.push_back({{"t", e.time}, {"y", e.type}});
    json j = {{"id", seq.id}, {"T", seq.horizon}, {"events", std::move(events)}};
    out << j.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, std::span<const EventSequence> sequences) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write dataset file '" + path.string() + "'");
  write_dataset(out, sequences);
}

std::size_t infer_num_types(std::span<const EventSequence> sequences) {
  std::size_t n = 0;
  for (const auto& s : sequences)
    for (const auto& e : s.events) n = std::max(n, e.type + 1);
  return std::max<std::size_t>(n, 1);
}

DatasetSplits split_dataset(std::vector<EventSequence> sequences, const SplitFractions& fractions,
                            std::uint64_t seed) {
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 ||
      fractions.train + fractions.validation + fractions.test > 1.0 + 1e-9) {
    throw std::invalid_argument("split fractions must be non-negative and sum to at most 1");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(sequences.begin(), sequences.end(), rng);
  const auto n = static_cast<double>(sequences.size());
  const auto n_train = std::min(sequences.size(), static_cast<std::size_t>(std::lround(n * fractions.train)));
  const auto n_val = std::min(sequences.size() - n_train,
                              static_cast<std::size_t>(std::lround(n * fractions.validation)));
  DatasetSplits splits;
  auto it = sequences.begin();
  splits.train.assign(std::make_move_iterator(it), std::make_move_iterator(it + n_train));
  it += n_train;
  splits.validation.assign(std::make_move_iterator(it), std::make_move_iterator(it + n_val));
  it += n_val;
  splits.test.assign(std::make_move_iterator(it), std::make_move_iterator(sequences.end()));
  return splits;
}

}  // namespace rgn
