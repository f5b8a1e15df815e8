#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace rgn {

struct Event {
  double time = 0.0;
  std::size_t type = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

/// A marked realization on [0, horizon].
struct EventSequence {
  std::string id;
  double horizon = 0.0;
  std::vector<Event> events;

  [[nodiscard]] std::size_t size() const { return events.size(); }
  [[nodiscard]] bool empty() const { return events.empty(); }

  /// Throws std::invalid_argument unless times are strictly increasing,
  /// 0 < t_1, t_L <= horizon, and every type is below num_types.
  void validate(std::size_t num_types) const;

  friend bool operator==(const EventSequence&, const EventSequence&) = default;
};

[[nodiscard]] std::size_t total_events(const std::vector<EventSequence>& sequences);

}  // namespace rgn
