#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "evpr/rerank.hpp"

namespace evpr {
namespace {

/// Hartley normalization: centroid to the origin, mean distance sqrt(2).
template <class Points>
Eigen::Matrix3d normalizing_transform(const Points& pts, size_t n) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (size_t i = 0; i < n; ++i) centroid += pts[i];
  centroid /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (size_t i = 0; i < n; ++i) mean_dist += (pts[i] - centroid).norm();
  mean_dist /= static_cast<double>(n);
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

Eigen::Vector2d apply(const Eigen::Matrix3d& t, const Eigen::Vector2d& p) {
  return {t(0, 0) * p.x() + t(0, 2), t(1, 1) * p.y() + t(1, 2)};
}

std::optional<Homography> finish(const Eigen::Matrix3d& hn, const Eigen::Matrix3d& tq, const Eigen::Matrix3d& tr) {
  Eigen::Matrix3d h = tr.inverse() * hn * tq;
  if (!h.allFinite()) return std::nullopt;
  if (std::abs(h(2, 2)) > 1e-15) h /= h(2, 2);
  if (std::abs(h.determinant()) <= 1e-12) return std::nullopt;
  return Homography{h};
}

bool collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d u = b - a, v = c - a;
  return std::abs(u.x() * v.y() - u.y() * v.x()) < 1e-8;
}

bool degenerate_quad(const std::array<Eigen::Vector2d, 4>& p) {
  return collinear(p[0], p[1], p[2]) || collinear(p[0], p[1], p[3]) || collinear(p[0], p[2], p[3]) ||
         collinear(p[1], p[2], p[3]);
}

/// Exact four-point solve with h33 = 1 in normalized coordinates.
std::optional<Homography> fit_minimal(const std::array<Eigen::Vector2d, 4>& query,
                                      const std::array<Eigen::Vector2d, 4>& ref) {
  const Eigen::Matrix3d tq = normalizing_transform(query, 4);
  const Eigen::Matrix3d tr = normalizing_transform(ref, 4);
  std::array<Eigen::Vector2d, 4> qn, rn;
  for (size_t i = 0; i < 4; ++i) {
    qn[i] = apply(tq, query[i]);
    rn[i] = apply(tr, ref[i]);
  }
  if (degenerate_quad(qn) || degenerate_quad(rn)) return std::nullopt;

  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = qn[i].x(), y = qn[i].y(), u = rn[i].x(), v = rn[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::PartialPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (std::abs(lu.determinant()) < 1e-10) return std::nullopt;
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return finish(hn, tq, tr);
}

}  // namespace

Eigen::Vector2d Homography::project(const Eigen::Vector2d& p) const {
  const Eigen::Vector3d q = H * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return q.head<2>() / q.z();
}

double Homography::transfer_error_sq(const Eigen::Vector2d& query, const Eigen::Vector2d& ref) const {
  const double w = H(2, 0) * query.x() + H(2, 1) * query.y() + H(2, 2);
  if (std::abs(w) < 1e-12) return std::numeric_limits<double>::infinity();
  const double u = (H(0, 0) * query.x() + H(0, 1) * query.y() + H(0, 2)) / w;
  const double v = (H(1, 0) * query.x() + H(1, 1) * query.y() + H(1, 2)) / w;
  return (u - ref.x()) * (u - ref.x()) + (v - ref.y()) * (v - ref.y());
}

std::optional<Homography> fit_homography(const std::vector<Eigen::Vector2d>& query,
                                         const std::vector<Eigen::Vector2d>& ref) {
  const size_t n = query.size();
  if (n < 4 || ref.size() != n) return std::nullopt;
  const Eigen::Matrix3d tq = normalizing_transform(query, n);
  const Eigen::Matrix3d tr = normalizing_transform(ref, n);

  Eigen::MatrixXd a(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d q = apply(tq, query[i]), r = apply(tr, ref[i]);
    const double x = q.x(), y = q.y(), u = r.x(), v = r.y();
    const auto row = static_cast<Eigen::Index>(2 * i);
    a.row(row) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
    a.row(row + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y, -v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A unique solution needs rank 8: the second-smallest singular value must be non-zero.
  if (sv.size() < 8 || sv(7) <= 1e-9 * sv(0)) return std::nullopt;
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return finish(hn, tq, tr);
}

InlierSet ransac_homography(const MatchSet& matches, const KeypointSet& query, const KeypointSet& ref,
                            const RansacParams& params) {
  if (!(params.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "RANSAC epsilon must be positive");
  InlierSet result;
  const size_t m = matches.pairs.size();
  if (m < 4) return result;

  std::vector<Eigen::Vector2d> qp(m), rp(m);
  for (size_t i = 0; i < m; ++i) {
    const Match& match = matches.pairs[i];
    if (match.query_idx >= query.size() || match.ref_idx >= ref.size()) {
      throw Error(ErrorCode::InvalidArgument, "match index outside keypoint set", i);
    }
    const Keypoint& a = query.points[match.query_idx];
    const Keypoint& b = ref.points[match.ref_idx];
    qp[i] = {a.u, a.v};
    rp[i] = {b.u, b.v};
  }

  const double eps_sq = params.epsilon * params.epsilon;
  auto count_inliers = [&](const Homography& h) {
    size_t count = 0;
    for (size_t i = 0; i < m; ++i) count += h.transfer_error_sq(qp[i], rp[i]) < eps_sq;
    return count;
  };

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<size_t> pick(0, m - 1);
  size_t best_count = 0;
  Homography best;
  std::array<size_t, 4> idx{};
  std::array<Eigen::Vector2d, 4> sq, sr;
  for (uint32_t it = 0; it < params.iterations; ++it) {
    for (size_t k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = pick(rng);
        fresh = true;
        for (size_t j = 0; j < k; ++j) fresh &= idx[j] != idx[k];
      } while (!fresh);
      sq[k] = qp[idx[k]];
      sr[k] = rp[idx[k]];
    }
    const auto model = fit_minimal(sq, sr);
    if (!model) continue;
    const size_t count = count_inliers(*model);
    if (count > best_count) {
      best_count = count;
      best = *model;
      if (static_cast<double>(count) > params.early_exit_ratio * static_cast<double>(m)) break;
    }
  }
  if (best_count == 0) return result;

  // Least-squares refit on the consensus set; kept only if it does not lose support.
  if (best_count >= 4) {
    std::vector<Eigen::Vector2d> iq, ir;
    iq.reserve(best_count);
    ir.reserve(best_count);
    for (size_t i = 0; i < m; ++i) {
      if (best.transfer_error_sq(qp[i], rp[i]) < eps_sq) {
        iq.push_back(qp[i]);
        ir.push_back(rp[i]);
      }
    }
    if (const auto refit = fit_homography(iq, ir); refit && count_inliers(*refit) >= best_count) best = *refit;
  }

  result.homography = best;
  for (size_t i = 0; i < m; ++i) {
    if (best.transfer_error_sq(qp[i], rp[i]) < eps_sq) result.pairs.push_back(matches.pairs[i]);
  }
  return result;
}

}  // namespace evpr
