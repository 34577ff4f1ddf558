#include "evpr/archive.hpp"

#include <string>

namespace evpr {
namespace {

constexpr size_t kIndexEntryBytes = 17;
constexpr size_t kHeaderBytes = 4 + 2 + 8;

}  // namespace

std::vector<uint8_t> encode_keypoints(const KeypointSet& keypoints) {
  keypoints.check();
  io::ByteWriter out;
  out.put<uint32_t>(static_cast<uint32_t>(keypoints.points.size()));
  for (const Keypoint& kp : keypoints.points) {
    out.put(kp.u);
    out.put(kp.v);
    out.put(kp.score);
  }
  out.put<uint32_t>(keypoints.descriptor_dim);
  out.put_array(std::span<const float>(keypoints.descriptors));
  return out.release();
}

KeypointSet decode_keypoints(io::ByteReader& in) {
  KeypointSet kps;
  const auto count = in.get<uint32_t>();
  if (in.remaining() / 12 < count) throw Error(ErrorCode::TruncatedRecord, "keypoint payload truncated");
  kps.points.resize(count);
  for (auto& kp : kps.points) {
    kp.u = in.get<float>();
    kp.v = in.get<float>();
    kp.score = in.get<float>();
  }
  kps.descriptor_dim = in.get<uint32_t>();
  const uint64_t n = static_cast<uint64_t>(count) * kps.descriptor_dim;
  if (in.remaining() / sizeof(float) < n) throw Error(ErrorCode::TruncatedRecord, "descriptor payload truncated");
  kps.descriptors.resize(n);
  in.get_array(std::span<float>(kps.descriptors));
  return kps;
}

FeatureArchive FeatureArchive::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::MissingArtifact, "feature archive not found: " + path.string());
  }
  return decode(io::read_file(path));
}

FeatureArchive FeatureArchive::decode(std::vector<uint8_t> bytes) {
  FeatureArchive archive;
  archive.bytes_ = std::make_shared<const std::vector<uint8_t>>(std::move(bytes));
  const auto& data = *archive.bytes_;
  io::ByteReader in(data, ErrorCode::BadArchiveHeader);
  if (!in.magic_matches("EVPA")) throw Error(ErrorCode::BadArchiveHeader, "missing EVPA magic");
  in.skip(4);
  const auto version = in.get<uint16_t>();
  if (version != kArchiveVersion) {
    throw Error(ErrorCode::BadArchiveHeader, "unsupported archive version " + std::to_string(version));
  }
  const auto entries = in.get<uint64_t>();
  if (in.remaining() / kIndexEntryBytes < entries) throw Error(ErrorCode::BadArchiveHeader, "index table truncated");
  const uint64_t payload_start = kHeaderBytes + entries * kIndexEntryBytes;
  archive.index_.reserve(entries);
  for (uint64_t i = 0; i < entries; ++i) {
    const auto frame_id = in.get<uint64_t>();
    const auto offset = in.get<uint64_t>();
    const auto kind = in.get<uint8_t>();
    if (kind > static_cast<uint8_t>(ArchiveEntryKind::Depth)) {
      throw Error(ErrorCode::BadArchiveHeader, "unknown entry kind", i);
    }
    if (offset < payload_start || offset >= data.size()) {
      throw Error(ErrorCode::BadArchiveHeader, "entry offset outside payload region", i);
    }
    if (frame_id >> 62) throw Error(ErrorCode::BadArchiveHeader, "frame id out of range", i);
    if (!archive.index_.emplace(key(frame_id, static_cast<ArchiveEntryKind>(kind)), offset).second) {
      throw Error(ErrorCode::BadArchiveHeader, "duplicate archive entry", frame_id);
    }
  }
  return archive;
}

bool FeatureArchive::contains(uint64_t frame_id, ArchiveEntryKind kind) const noexcept {
  return index_.contains(key(frame_id, kind));
}

size_t FeatureArchive::count(ArchiveEntryKind kind) const noexcept {
  size_t n = 0;
  for (const auto& [k, offset] : index_) n += (k & 3u) == static_cast<uint64_t>(kind);
  return n;
}

std::span<const uint8_t> FeatureArchive::payload(uint64_t frame_id, ArchiveEntryKind kind) const {
  const auto it = index_.find(key(frame_id, kind));
  if (it == index_.end()) {
    throw Error(ErrorCode::MissingFrameId, "frame " + std::to_string(frame_id) + " not in archive", frame_id);
  }
  return std::span<const uint8_t>(*bytes_).subspan(it->second);
}

GlobalFeatureMap FeatureArchive::global_map(uint64_t frame_id) const {
  io::ByteReader in(payload(frame_id, ArchiveEntryKind::GlobalMap));
  return GlobalFeatureMap{read_tensor<float>(in)};
}

KeypointSet FeatureArchive::keypoints(uint64_t frame_id) const {
  io::ByteReader in(payload(frame_id, ArchiveEntryKind::Keypoints));
  return decode_keypoints(in);
}

DepthMap FeatureArchive::depth(uint64_t frame_id) const {
  io::ByteReader in(payload(frame_id, ArchiveEntryKind::Depth));
  return DepthMap{read_tensor<float>(in)};
}

void FeatureArchiveWriter::add(uint64_t frame_id, ArchiveEntryKind kind, std::vector<uint8_t> payload) {
  if (frame_id > (~uint64_t{0} >> 2)) throw Error(ErrorCode::InvalidArgument, "frame id too large for an archive");
  if (!keys_.insert(FeatureArchive::key(frame_id, kind)).second) {
    throw Error(ErrorCode::InvalidArgument, "duplicate archive entry for frame " + std::to_string(frame_id), frame_id);
  }
  entries_.push_back(Entry{frame_id, kind, std::move(payload)});
}

void FeatureArchiveWriter::add_global_map(uint64_t frame_id, const GlobalFeatureMap& map) {
  add(frame_id, ArchiveEntryKind::GlobalMap, encode_tensor(map.data));
}

void FeatureArchiveWriter::add_keypoints(uint64_t frame_id, const KeypointSet& keypoints) {
  add(frame_id, ArchiveEntryKind::Keypoints, encode_keypoints(keypoints));
}

void FeatureArchiveWriter::add_depth(uint64_t frame_id, const DepthMap& depth) {
  add(frame_id, ArchiveEntryKind::Depth, encode_tensor(depth.data));
}

std::vector<uint8_t> FeatureArchiveWriter::encode() const {
  io::ByteWriter out;
  out.put_magic("EVPA");
  out.put<uint16_t>(kArchiveVersion);
  out.put<uint64_t>(entries_.size());
  uint64_t offset = kHeaderBytes + entries_.size() * kIndexEntryBytes;
  for (const Entry& e : entries_) {
    out.put<uint64_t>(e.frame_id);
    out.put<uint64_t>(offset);
    out.put<uint8_t>(static_cast<uint8_t>(e.kind));
    offset += e.payload.size();
  }
  for (const Entry& e : entries_) out.put_bytes(e.payload);
  return out.release();
}

void FeatureArchiveWriter::write(const std::filesystem::path& path) const { io::write_file(path, encode()); }

}  // namespace evpr
