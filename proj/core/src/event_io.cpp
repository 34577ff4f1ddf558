#include "evpr/event_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <string>

#include "evpr/binary_io.hpp"
#include "evpr/error.hpp"

namespace evpr {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_field(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

Event parse_event_line(std::string_view line, uint64_t line_no, SensorGeometry geometry) {
  std::array<std::string_view, 4> fields;
  size_t n = 0;
  while (true) {
    const auto comma = line.find(',');
    if (n == fields.size()) throw Error(ErrorCode::MalformedLine, "too many fields", line_no);
    fields[n++] = line.substr(0, comma);
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  if (n != fields.size()) throw Error(ErrorCode::MalformedLine, "expected t,x,y,p", line_no);

  uint64_t t = 0;
  uint32_t x = 0, y = 0, p = 0;
  if (!parse_field(fields[0], t) || !parse_field(fields[1], x) || !parse_field(fields[2], y) ||
      !parse_field(fields[3], p) || p > 1) {
    throw Error(ErrorCode::MalformedLine, "unparseable event fields", line_no);
  }
  if (!geometry.contains(x, y)) {
    throw Error(ErrorCode::CoordinateOutOfRange, "event outside sensor geometry", line_no);
  }
  return Event{t, static_cast<uint16_t>(x), static_cast<uint16_t>(y), static_cast<uint8_t>(p)};
}

}  // namespace

bool EventStream::is_sorted() const noexcept {
  return std::is_sorted(events.begin(), events.end(),
                        [](const Event& a, const Event& b) { return a.t < b.t; });
}

void sort_events(EventStream& stream) {
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
}

EventStream parse_text_buffer(std::string_view text, SensorGeometry geometry, const TextParseOptions& options) {
  EventStream stream{geometry, {}};
  bool header_pending = options.skip_header;
  uint64_t line_no = 0;
  bool sorted = true;

  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;

    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const Event e = parse_event_line(line, line_no, geometry);
    if (!stream.events.empty() && e.t < stream.events.back().t) {
      if (options.strict) throw Error(ErrorCode::NonMonotoneTimestamp, "timestamp decreases", line_no);
      sorted = false;
    }
    stream.events.push_back(e);
  }
  if (!sorted) sort_events(stream);
  return stream;
}

EventStream parse_text(const std::filesystem::path& path, SensorGeometry geometry, const TextParseOptions& options) {
  const auto bytes = io::read_file(path);
  return parse_text_buffer(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), geometry,
                           options);
}

std::vector<uint8_t> encode_binary(const EventStream& stream) {
  io::ByteWriter out;
  out.put_magic("EVPR");
  out.put<uint16_t>(kEventFileVersion);
  out.put<uint16_t>(stream.geometry.width);
  out.put<uint16_t>(stream.geometry.height);
  out.put<uint64_t>(stream.events.size());
  for (const Event& e : stream.events) {
    out.put<uint64_t>(e.t);
    out.put<uint16_t>(e.x);
    out.put<uint16_t>(e.y);
    out.put<uint8_t>(e.p);
    out.put<uint8_t>(0);
    out.put<uint16_t>(0);
  }
  return out.release();
}

EventStream decode_binary(std::span<const uint8_t> bytes, bool strict) {
  io::ByteReader in(bytes, ErrorCode::TruncatedRecord);
  if (!in.magic_matches("EVPR")) throw Error(ErrorCode::BadMagic, "missing EVPR magic");
  in.skip(4);
  const auto version = in.get<uint16_t>();
  if (version != kEventFileVersion) {
    throw Error(ErrorCode::VersionUnsupported, "event file version " + std::to_string(version));
  }
  EventStream stream;
  stream.geometry.width = in.get<uint16_t>();
  stream.geometry.height = in.get<uint16_t>();
  const auto count = in.get<uint64_t>();
  if (in.remaining() / kEventRecordBytes < count || in.remaining() != count * kEventRecordBytes) {
    throw Error(ErrorCode::TruncatedRecord, "payload size does not match record count");
  }
  stream.events.reserve(count);
  bool sorted = true;
  for (uint64_t i = 0; i < count; ++i) {
    Event e;
    e.t = in.get<uint64_t>();
    e.x = in.get<uint16_t>();
    e.y = in.get<uint16_t>();
    e.p = in.get<uint8_t>();
    in.skip(3);
    if (e.p > 1) throw Error(ErrorCode::MalformedLine, "polarity must be 0 or 1", i);
    if (!stream.geometry.contains(e.x, e.y)) {
      throw Error(ErrorCode::CoordinateOutOfRange, "event outside sensor geometry", i);
    }
    if (!stream.events.empty() && e.t < stream.events.back().t) {
      if (strict) throw Error(ErrorCode::NonMonotoneTimestamp, "timestamp decreases", i);
      sorted = false;
    }
    stream.events.push_back(e);
  }
  if (!sorted) sort_events(stream);
  return stream;
}

EventStream parse_binary(const std::filesystem::path& path, bool strict) {
  return decode_binary(io::read_file(path), strict);
}

void write_binary(const EventStream& stream, const std::filesystem::path& path) {
  io::write_file(path, encode_binary(stream));
}

EventStream load_events(const std::filesystem::path& path, SensorGeometry text_geometry,
                        const TextParseOptions& options) {
  const auto bytes = io::read_file(path);
  if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "EVPR")) {
    return decode_binary(bytes, options.strict);
  }
  return parse_text_buffer(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                           text_geometry, options);
}

void validate(const WindowingPolicy& policy) {
  std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FixedTime>) {
          if (p.length_us == 0) throw Error(ErrorCode::ConfigError, "window length must be positive");
        } else {
          if (p.events == 0) throw Error(ErrorCode::ConfigError, "window event count must be positive");
        }
      },
      policy);
}

std::vector<EventWindow> window_stream(const EventStream& stream, const WindowingPolicy& policy) {
  validate(policy);
  if (!stream.is_sorted()) {
    throw Error(ErrorCode::NonMonotoneTimestamp, "window_stream requires a time-sorted stream");
  }
  std::vector<EventWindow> windows;
  const auto& ev = stream.events;
  if (ev.empty()) return windows;
  const std::span<const Event> all(ev);

  if (const auto* ft = std::get_if<FixedTime>(&policy)) {
    const uint64_t length = ft->length_us;
    const uint64_t stride = ft->stride_us == 0 ? length : ft->stride_us;
    const uint64_t t0 = ev.front().t;
    const uint64_t count = (ev.back().t - t0) / stride + 1;
    windows.reserve(count);
    auto by_time = [](const Event& e, uint64_t t) { return e.t < t; };
    auto lo = ev.begin();
    for (uint64_t i = 0; i < count; ++i) {
      const uint64_t start = t0 + i * stride;
      const uint64_t end = start + length;
      lo = std::lower_bound(lo, ev.end(), start, by_time);
      const auto hi = std::lower_bound(lo, ev.end(), end, by_time);
      windows.push_back(EventWindow{start, end,
                                    all.subspan(static_cast<size_t>(lo - ev.begin()), static_cast<size_t>(hi - lo)),
                                    i});
    }
  } else {
    const auto& fc = std::get<FixedCount>(policy);
    const uint64_t n = fc.events;
    const uint64_t stride = fc.stride == 0 ? n : fc.stride;
    uint64_t index = 0;
    for (uint64_t begin = 0; begin < ev.size(); begin += stride) {
      const uint64_t len = std::min<uint64_t>(n, ev.size() - begin);
      auto s = all.subspan(begin, len);
      windows.push_back(EventWindow{s.front().t, s.back().t, s, index++});
    }
  }
  return windows;
}

}  // namespace evpr
