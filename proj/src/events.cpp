#include "evseg/events.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "evseg/error.hpp"

namespace evseg {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r'; };
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool is_skippable(std::string_view line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string_view::npos || line[pos] == '#';
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace

std::vector<Event> parse_events(std::istream& in, const SensorGeometry& geometry) {
  if (geometry.width <= 0 || geometry.height <= 0) throw BoundsError("sensor geometry must be positive");
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    auto fields = split_fields(line);
    Event e;
    int p = 0;
    bool ok = fields.size() == 4 && parse_int(fields[0], e.t) && parse_int(fields[1], e.x) &&
              parse_int(fields[2], e.y) && parse_int(fields[3], p);
    if (!ok) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw ParseError(line_no, "expected 't,x,y,p', got '" + line + "'");
    }
    header_allowed = false;
    if (e.t < 0) throw ParseError(line_no, "negative timestamp");
    if (p == 0) p = -1;
    if (p != -1 && p != 1) throw ParseError(line_no, "polarity must be one of -1, 0, 1");
    e.p = p;
    if (!geometry.contains(e.x, e.y)) {
      throw BoundsError("line " + std::to_string(line_no) + ": pixel (" + std::to_string(e.x) +
                        "," + std::to_string(e.y) + ") outside " + std::to_string(geometry.width) +
                        "x" + std::to_string(geometry.height));
    }
    events.push_back(e);
  }
  return events;
}

std::vector<Event> read_events_file(const std::string& path, const SensorGeometry& geometry) {
  auto in = open_input(path);
  return parse_events(in, geometry);
}

std::optional<SensorGeometry> read_geometry_hint(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) != 0) {
      if (is_skippable(line)) continue;
      break;
    }
    std::istringstream ss(line.substr(1));
    std::string key;
    SensorGeometry g;
    if (ss >> key && key == "geometry" && ss >> g.width >> g.height) return g;
  }
  return std::nullopt;
}

void write_events(std::ostream& out, const std::vector<Event>& events,
                  const std::optional<SensorGeometry>& geometry) {
  if (geometry) out << "# geometry " << geometry->width << ' ' << geometry->height << '\n';
  for (const auto& e : events) out << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
}

void write_events_file(const std::string& path, const std::vector<Event>& events,
                       const std::optional<SensorGeometry>& geometry) {
  auto out = open_output(path);
  write_events(out, events, geometry);
}

std::vector<EventLabel> parse_labels(std::istream& in) {
  std::vector<EventLabel> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    auto fields = split_fields(line);
    EventLabel l;
    bool ok = (fields.size() == 1 || fields.size() == 2) && parse_int(fields[0], l.label);
    if (ok && fields.size() == 2) ok = parse_int(fields[1], l.object_id);
    if (!ok || (l.label != 0 && l.label != 1) || l.object_id < 0) {
      throw ParseError(line_no, "expected 'label[,object_id]', got '" + line + "'");
    }
    labels.push_back(l);
  }
  return labels;
}

std::vector<EventLabel> read_labels_file(const std::string& path) {
  auto in = open_input(path);
  return parse_labels(in);
}

void write_labels(std::ostream& out, const std::vector<EventLabel>& labels) {
  for (const auto& l : labels) {
    out << l.label;
    if (l.object_id > 0) out << ',' << l.object_id;
    out << '\n';
  }
}

void write_labels_file(const std::string& path, const std::vector<EventLabel>& labels) {
  auto out = open_output(path);
  write_labels(out, labels);
}

std::vector<EventWindow> slice_windows(const std::vector<Event>& events, Micros duration,
                                       std::size_t n_max) {
  if (duration <= 0) throw SizeError("window duration must be positive");
  if (n_max == 0) throw SizeError("n_max must be positive");
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t < events[i - 1].t) {
      throw OrderingError("events not sorted by timestamp at index " + std::to_string(i));
    }
  }
  std::vector<EventWindow> windows;
  if (events.empty()) return windows;

  const Micros count = events.back().t / duration + 1;
  windows.resize(static_cast<std::size_t>(count));
  for (Micros j = 0; j < count; ++j) {
    auto& w = windows[static_cast<std::size_t>(j)];
    w.t_start = j * duration;
    w.t_end = w.t_start + duration;
    w.n_max = n_max;
  }
  std::size_t begin = 0;
  while (begin < events.size()) {
    const Micros j = events[begin].t / duration;
    std::size_t end = begin;
    while (end < events.size() && events[end].t / duration == j) ++end;
    const std::size_t first = end - begin > n_max ? end - n_max : begin;
    auto& w = windows[static_cast<std::size_t>(j)];
    w.events.assign(events.begin() + static_cast<std::ptrdiff_t>(first),
                    events.begin() + static_cast<std::ptrdiff_t>(end));
    w.source_index.resize(end - first);
    for (std::size_t i = first; i < end; ++i) w.source_index[i - first] = i;
    begin = end;
  }
  return windows;
}

}  // namespace evseg
