#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace evpr {

struct SensorGeometry {
  uint16_t width = 0;
  uint16_t height = 0;

  bool contains(uint32_t x, uint32_t y) const noexcept { return x < width && y < height; }
  bool operator==(const SensorGeometry&) const = default;
};

/// One DVS activation. `t` is in microseconds; `p` is 0 (OFF) or 1 (ON).
struct Event {
  uint64_t t = 0;
  uint16_t x = 0;
  uint16_t y = 0;
  uint8_t p = 0;

  bool operator==(const Event&) const = default;
};

struct EventStream {
  SensorGeometry geometry;
  std::vector<Event> events;

  bool is_sorted() const noexcept;
};

struct TextParseOptions {
  bool strict = false;       // reject out-of-order timestamps instead of sorting
  bool skip_header = false;  // first non-comment line is a column header
};

/// Parses `t,x,y,p` lines. `#` starts a comment line; blank lines are ignored.
/// In non-strict mode the result is stably sorted by timestamp.
EventStream parse_text(const std::filesystem::path& path, SensorGeometry geometry,
                       const TextParseOptions& options = {});
EventStream parse_text_buffer(std::string_view text, SensorGeometry geometry,
                              const TextParseOptions& options = {});

inline constexpr uint16_t kEventFileVersion = 1;
inline constexpr size_t kEventFileHeaderBytes = 18;
inline constexpr size_t kEventRecordBytes = 16;

EventStream parse_binary(const std::filesystem::path& path, bool strict = false);
EventStream decode_binary(std::span<const uint8_t> bytes, bool strict = false);
std::vector<uint8_t> encode_binary(const EventStream& stream);
void write_binary(const EventStream& stream, const std::filesystem::path& path);

/// Picks the parser from the file magic: `EVPR` files are binary, anything else is text.
EventStream load_events(const std::filesystem::path& path, SensorGeometry text_geometry,
                        const TextParseOptions& options = {});

void sort_events(EventStream& stream);

struct FixedTime {
  uint64_t length_us = 50'000;
  uint64_t stride_us = 0;  // 0 means stride == length
};

struct FixedCount {
  uint64_t events = 0;
  uint64_t stride = 0;  // 0 means stride == events
};

using WindowingPolicy = std::variant<FixedTime, FixedCount>;

/// A view into a stream. Under FixedTime the window covers [t_min, t_max);
/// under FixedCount t_min/t_max are the first and last event timestamps.
struct EventWindow {
  uint64_t t_min = 0;
  uint64_t t_max = 0;
  std::span<const Event> events;
  uint64_t index = 0;
};

void validate(const WindowingPolicy& policy);

/// Splits a time-sorted stream into windows. The first event defines t0; the
/// trailing partial window is emitted, as are empty windows in event gaps.
/// The returned windows reference `stream` and must not outlive it.
std::vector<EventWindow> window_stream(const EventStream& stream, const WindowingPolicy& policy);

}  // namespace evpr
