#include "evpr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evpr/binary_io.hpp"
#include "evpr/parallel.hpp"

namespace evpr {

DescriptorMatrix::DescriptorMatrix(Side side, uint32_t dims, std::vector<float> data)
    : side_(side), dims_(dims), data_(std::move(data)) {
  if (dims_ == 0 ? !data_.empty() : data_.size() % dims_ != 0) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor payload is not a whole number of rows");
  }
}

void DescriptorMatrix::append(const GlobalDescriptor& descriptor) {
  if (descriptor.values.size() != dims_) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor has " + std::to_string(descriptor.values.size()) +
                                                  " dims, matrix expects " + std::to_string(dims_));
  }
  const bool zero = std::all_of(descriptor.values.begin(), descriptor.values.end(), [](double v) { return v == 0.0; });
  if (zero) {
    append_zero();
    return;
  }
  const GlobalDescriptor unit = descriptor.normalized ? descriptor : l2_normalize(descriptor);
  for (double v : unit.values) data_.push_back(static_cast<float>(v));
}

void DescriptorMatrix::append_zero() { data_.insert(data_.end(), dims_, 0.0f); }

double dot(std::span<const float> a, std::span<const float> b) noexcept {
  const size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

SimilarityMatrix build_similarity(const DescriptorMatrix& refs, const DescriptorMatrix& queries,
                                  const SimilarityOptions& options) {
  if (refs.cols() != queries.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "reference and query descriptors differ in dimension");
  }
  SimilarityMatrix sim;
  sim.n_ref = refs.rows();
  sim.n_query = queries.rows();
  sim.data.assign(sim.n_ref * sim.n_query, 0.0f);
  const size_t tile = std::max<size_t>(1, options.tile);
  const size_t query_tiles = (sim.n_query + tile - 1) / tile;

  parallel_for(query_tiles, options.threads, [&](size_t qt) {
    const size_t q0 = qt * tile, q1 = std::min(sim.n_query, q0 + tile);
    for (size_t r0 = 0; r0 < sim.n_ref; r0 += tile) {
      const size_t r1 = std::min(sim.n_ref, r0 + tile);
      for (size_t q = q0; q < q1; ++q) {
        const auto qrow = queries.row(q);
        float* out = sim.data.data() + q * sim.n_ref;
        for (size_t r = r0; r < r1; ++r) out[r] = static_cast<float>(dot(refs.row(r), qrow));
      }
    }
  });
  return sim;
}

std::vector<float> similarity_column(const DescriptorMatrix& refs, std::span<const float> query) {
  if (query.size() != refs.cols()) throw Error(ErrorCode::DimensionMismatch, "query descriptor dimension mismatch");
  std::vector<float> column(refs.rows());
  for (size_t r = 0; r < column.size(); ++r) column[r] = static_cast<float>(dot(refs.row(r), query));
  return column;
}

Shortlist top_k(std::span<const float> column, uint64_t query_id, size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  k = std::min(k, column.size());
  std::vector<uint32_t> ids(column.size());
  for (uint32_t i = 0; i < ids.size(); ++i) ids[i] = i;
  auto better = [&](uint32_t a, uint32_t b) { return column[a] > column[b] || (column[a] == column[b] && a < b); };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);

  Shortlist out{query_id, {}};
  out.candidates.reserve(k);
  for (size_t i = 0; i < k; ++i) out.candidates.push_back({ids[i], column[ids[i]]});
  return out;
}

Shortlist top_k(const SimilarityMatrix& similarity, uint64_t query_id, size_t k) {
  if (query_id >= similarity.n_query) {
    throw Error(ErrorCode::QueryOutOfRange, "query " + std::to_string(query_id) + " out of range", query_id);
  }
  return top_k(similarity.column(query_id), query_id, k);
}

std::vector<uint8_t> encode_database(const DescriptorDatabase& db) {
  io::ByteWriter out;
  out.put_magic("EVPD");
  out.put<uint16_t>(kDatabaseVersion);
  out.put<uint64_t>(db.matrix.rows());
  out.put<uint32_t>(db.matrix.cols());
  out.put<float>(db.gamma);
  out.put_bytes(db.provider_fingerprint);
  out.put_array(db.matrix.data());
  return out.release();
}

DescriptorDatabase decode_database(std::span<const uint8_t> bytes) {
  io::ByteReader in(bytes, ErrorCode::TruncatedRecord);
  if (!in.magic_matches("EVPD")) throw Error(ErrorCode::BadMagic, "missing EVPD magic");
  in.skip(4);
  const auto version = in.get<uint16_t>();
  if (version != kDatabaseVersion) {
    throw Error(ErrorCode::VersionUnsupported, "descriptor database version " + std::to_string(version));
  }
  const auto n = in.get<uint64_t>();
  const auto c = in.get<uint32_t>();
  DescriptorDatabase db;
  db.gamma = in.get<float>();
  const auto fp = in.get_bytes(db.provider_fingerprint.size());
  std::copy(fp.begin(), fp.end(), db.provider_fingerprint.begin());
  if (c == 0 ? n != 0 || in.remaining() != 0 : in.remaining() / (sizeof(float) * c) != n ||
                                                    in.remaining() % (sizeof(float) * c) != 0) {
    throw Error(ErrorCode::TruncatedRecord, "descriptor payload does not match N x C");
  }
  std::vector<float> rows(static_cast<size_t>(n) * c);
  in.get_array(std::span<float>(rows));
  db.matrix = DescriptorMatrix(Side::Reference, c, std::move(rows));
  return db;
}

void write_database(const DescriptorDatabase& db, const std::filesystem::path& path) {
  io::write_file(path, encode_database(db));
}

DescriptorDatabase load_database(const std::filesystem::path& path, std::optional<Digest256> expected_fingerprint,
                                 bool allow_mismatch) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingArtifact, "descriptor database not found: " + path.string());
  auto db = decode_database(io::read_file(path));
  if (expected_fingerprint && *expected_fingerprint != db.provider_fingerprint && !allow_mismatch) {
    throw Error(ErrorCode::ManifestMismatch, "descriptor database was built with a different global provider");
  }
  return db;
}

}  // namespace evpr
