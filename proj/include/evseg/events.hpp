#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace evseg {

using Micros = std::int64_t;

struct SensorGeometry {
  int width = 0;
  int height = 0;

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

struct Event {
  Micros t = 0;
  int x = 0;
  int y = 0;
  int p = 1;  // -1 or +1

  friend bool operator==(const Event&, const Event&) = default;
};

/// A capped, non-overlapping temporal slice [t_start, t_end) of a stream.
/// `source_index` maps each kept event back to its position in the stream.
struct EventWindow {
  std::vector<Event> events;
  std::vector<std::size_t> source_index;
  Micros t_start = 0;
  Micros t_end = 0;
  std::size_t n_max = 0;
};

/// Per-event ground truth or prediction: 0 background, 1 foreground.
/// `object_id` is 0 when unknown or for background events.
struct EventLabel {
  int label = 0;
  int object_id = 0;

  friend bool operator==(const EventLabel&, const EventLabel&) = default;
};

/// Parses "t,x,y,p" records (comma or whitespace separated). Blank lines and
/// lines starting with '#' are skipped, as is a single non-numeric header line
/// before the first record. Polarity {0,1} is remapped to {-1,+1}.
std::vector<Event> parse_events(std::istream& in, const SensorGeometry& geometry);
std::vector<Event> read_events_file(const std::string& path, const SensorGeometry& geometry);

/// Looks for a "# geometry W H" comment in an event file.
std::optional<SensorGeometry> read_geometry_hint(const std::string& path);

void write_events(std::ostream& out, const std::vector<Event>& events,
                  const std::optional<SensorGeometry>& geometry = std::nullopt);
void write_events_file(const std::string& path, const std::vector<Event>& events,
                       const std::optional<SensorGeometry>& geometry = std::nullopt);

/// Label file: one line per event, "label" or "label,object_id".
std::vector<EventLabel> parse_labels(std::istream& in);
std::vector<EventLabel> read_labels_file(const std::string& path);
void write_labels(std::ostream& out, const std::vector<EventLabel>& labels);
void write_labels_file(const std::string& path, const std::vector<EventLabel>& labels);

/// Tiles the stream into consecutive windows [j*duration, (j+1)*duration)
/// from t = 0 through the window holding the last event. Windows over the cap
/// keep the n_max latest events (ties resolved toward later input order).
std::vector<EventWindow> slice_windows(const std::vector<Event>& events, Micros duration,
                                       std::size_t n_max);

}  // namespace evseg
