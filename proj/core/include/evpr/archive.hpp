#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "evpr/features.hpp"

namespace evpr {

enum class ArchiveEntryKind : uint8_t { GlobalMap = 0, Keypoints = 1, Depth = 2 };

inline constexpr uint16_t kArchiveVersion = 1;

/// Feature archive (`EVPA`): precomputed provider outputs keyed by frame id.
///
/// Layout: magic, version u16, entry count u64, then an index table of
/// (frame id u64, offset u64, kind u8) and the payloads. Global-map and depth
/// payloads use the tensor dump format; keypoint payloads are
/// count u32, (u, v, score) f32 x count, D u32, descriptors f32.
///
/// Loaded archives are immutable and safe for concurrent reads.
class FeatureArchive {
 public:
  FeatureArchive() = default;

  static FeatureArchive load(const std::filesystem::path& path);
  static FeatureArchive decode(std::vector<uint8_t> bytes);

  bool contains(uint64_t frame_id, ArchiveEntryKind kind) const noexcept;
  size_t size() const noexcept { return index_.size(); }
  size_t count(ArchiveEntryKind kind) const noexcept;

  GlobalFeatureMap global_map(uint64_t frame_id) const;
  KeypointSet keypoints(uint64_t frame_id) const;
  DepthMap depth(uint64_t frame_id) const;

  /// Index key: frame id in the high bits, entry kind in the low two.
  static uint64_t key(uint64_t frame_id, ArchiveEntryKind kind) noexcept {
    return (frame_id << 2) | static_cast<uint64_t>(kind);
  }

 private:
  std::span<const uint8_t> payload(uint64_t frame_id, ArchiveEntryKind kind) const;

  std::shared_ptr<const std::vector<uint8_t>> bytes_;
  std::unordered_map<uint64_t, uint64_t> index_;  // key -> payload offset
};

class FeatureArchiveWriter {
 public:
  void add_global_map(uint64_t frame_id, const GlobalFeatureMap& map);
  void add_keypoints(uint64_t frame_id, const KeypointSet& keypoints);
  void add_depth(uint64_t frame_id, const DepthMap& depth);

  size_t size() const noexcept { return entries_.size(); }
  std::vector<uint8_t> encode() const;
  void write(const std::filesystem::path& path) const;

 private:
  struct Entry {
    uint64_t frame_id;
    ArchiveEntryKind kind;
    std::vector<uint8_t> payload;
  };
  void add(uint64_t frame_id, ArchiveEntryKind kind, std::vector<uint8_t> payload);

  std::vector<Entry> entries_;
  std::unordered_set<uint64_t> keys_;
};

std::vector<uint8_t> encode_keypoints(const KeypointSet& keypoints);
KeypointSet decode_keypoints(io::ByteReader& in);

}  // namespace evpr
