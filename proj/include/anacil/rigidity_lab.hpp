// Copyright 2026 The anacil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ANACIL_RIGIDITY_LAB_HPP_
#define ANACIL_RIGIDITY_LAB_HPP_

// Subspace geometry for frozen feature extractors: projectors, projection
// residuals, principal angles, Grassmann distance, a drifting synthetic
// task-stream generator and the frozen-subspace error sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "anacil/analytic_core.hpp"
#include "anacil/class_partition.hpp"
#include "anacil/embedding_store.hpp"
#include "anacil/lambda_search.hpp"
#include "anacil/linalg.hpp"
#include "anacil/random.hpp"

namespace anacil {

inline constexpr double kOrthonormalTolerance = 1e-10;
inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kCoordinateFloor = 1e-12;

/// Orthonormal columns U (D x r) spanning a subspace.
class SubspaceBasis {
 public:
  /// Wraps `u` after checking U^T U = I within kOrthonormalTolerance.
  static SubspaceBasis from_orthonormal(Matrix u) {
    if (u.cols() == 0 || u.rows() < u.cols()) {
      throw Error(ErrorCode::kInvalidArgument, "basis must be D x r with 1 <= r <= D");
    }
    const Matrix gram = u.transpose() * u;
    const double err = (gram - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
    if (!(err <= kOrthonormalTolerance)) {
      throw Error(ErrorCode::kInvalidArgument, "basis is not orthonormal (max |U^T U - I| = " +
                                                   std::to_string(err) + ")");
    }
    return SubspaceBasis(std::move(u));
  }

  /// Orthonormal basis for span(columns of a). Column-pivoted Householder QR
  /// detects rank; a second QR pass re-orthogonalizes. Rank-deficient input
  /// (relative pivot below kRankTolerance) is rejected.
  static SubspaceBasis orthonormalize(const Matrix& a) {
    if (a.cols() == 0 || a.rows() < a.cols()) {
      throw Error(ErrorCode::kInvalidArgument, "cannot orthonormalize a " + std::to_string(a.rows()) + " x " +
                                                   std::to_string(a.cols()) + " matrix");
    }
    const Eigen::MatrixXd dense = a;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dense);
    qr.setThreshold(kRankTolerance);
    if (qr.rank() < a.cols()) {
      throw Error(ErrorCode::kInvalidArgument, "columns have rank " + std::to_string(qr.rank()) + " < " +
                                                   std::to_string(a.cols()));
    }
    const Eigen::MatrixXd q1 = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::HouseholderQR<Eigen::MatrixXd> again(q1);
    Eigen::MatrixXd q2 = again.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    return SubspaceBasis(Matrix(q2));
  }

  const Matrix& u() const noexcept { return u_; }
  std::size_t ambient_dim() const noexcept { return static_cast<std::size_t>(u_.rows()); }
  std::size_t rank() const noexcept { return static_cast<std::size_t>(u_.cols()); }

 private:
  explicit SubspaceBasis(Matrix u) : u_(std::move(u)) {}
  Matrix u_;
};

/// P = U U^T.
inline Matrix projector(const SubspaceBasis& basis) { return basis.u() * basis.u().transpose(); }

/// ||(I - U U^T) y||^2.
inline double projection_residual(const SubspaceBasis& basis, const Eigen::Ref<const Vector>& y) {
  if (static_cast<std::size_t>(y.size()) != basis.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "vector of length " + std::to_string(y.size()) +
                                                   " vs ambient dim " + std::to_string(basis.ambient_dim()));
  }
  const Vector coords = basis.u().transpose() * y;
  return (y - basis.u() * coords).squaredNorm();
}

namespace detail {
inline void check_same_ambient(const SubspaceBasis& a, const SubspaceBasis& b) {
  if (a.ambient_dim() != b.ambient_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "subspaces live in R^" + std::to_string(a.ambient_dim()) +
                                                   " and R^" + std::to_string(b.ambient_dim()));
  }
}
}  // namespace detail

/// Principal angles in ascending order: arccos of the singular values of
/// U1^T U2, clamped to [0, 1].
inline std::vector<double> principal_angles(const SubspaceBasis& a, const SubspaceBasis& b) {
  detail::check_same_ambient(a, b);
  const Eigen::MatrixXd cross = a.u().transpose() * b.u();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  const auto& s = svd.singularValues();
  std::vector<double> angles;
  for (Eigen::Index i = 0; i < s.size(); ++i) angles.push_back(std::acos(std::clamp(s[i], 0.0, 1.0)));
  std::sort(angles.begin(), angles.end());
  return angles;
}

/// ||sin Theta||_F over the principal angles.
///
/// Evaluated as ||U2 - U1 U1^T U2||_F with U2 the lower-rank basis, whose
/// singular values are the sines themselves; going through 1 - cos^2 loses
/// half the digits for nearly equal subspaces. Equal ranks average both
/// orderings so the result is exactly symmetric.
inline double grassmann_distance(const SubspaceBasis& a, const SubspaceBasis& b) {
  detail::check_same_ambient(a, b);
  auto one_way = [](const Matrix& big, const Matrix& small) {
    const Matrix coords = big.transpose() * small;
    return (small - big * coords).norm();
  };
  if (a.rank() > b.rank()) return one_way(a.u(), b.u());
  if (b.rank() > a.rank()) return one_way(b.u(), a.u());
  return 0.5 * (one_way(a.u(), b.u()) + one_way(b.u(), a.u()));
}

/// D x r orthonormal basis drawn from the Gaussian ensemble.
inline SubspaceBasis random_basis(Rng& rng, std::size_t dim, std::size_t rank) {
  Matrix g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rank));
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  return SubspaceBasis::orthonormalize(g);
}

/// cos(angle) * first + sin(angle) * second; orthonormal when the two bases
/// span mutually orthogonal subspaces.
inline Matrix rotate_towards(const Matrix& first, const Matrix& second, double angle) {
  return std::cos(angle) * first + std::sin(angle) * second;
}

// ---------------------------------------------------------------------------
// Synthetic task streams

/// Each class c has a latent code q_c; the codes of all classes are
/// orthonormal in R^rank. Task t places its class means at B_t q_c with
/// B_t = cos(t * drift) B_1 + sin(t * drift) B_perp. The adapter branch is
/// either the raw features or, when frozen, their projection onto span(B_1);
/// the clip branch always sees the un-rotated codes G q_c.
struct SyntheticStreamSpec {
  std::size_t class_count = 20;
  std::size_t classes_per_task = 5;
  std::size_t adapter_dim = 64;
  std::size_t clip_dim = 32;
  std::size_t rank = 0;  // 0 = class_count
  double noise = 0.05;
  double clip_noise = -1.0;  // < 0 = same as noise
  double drift = 0.0;        // radians per task, in [0, pi/2]
  double adapter_scale = 1.0;
  bool frozen_adapter = true;
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 10;
  std::size_t template_count = 3;
  double template_jitter = 0.1;
  std::uint64_t seed = 1993;

  std::size_t latent_rank() const noexcept { return rank == 0 ? class_count : rank; }
  std::size_t task_count() const noexcept {
    return classes_per_task == 0 ? 0 : (class_count + classes_per_task - 1) / classes_per_task;
  }
};

struct SyntheticStream {
  Dataset train;
  Dataset test;
  PrototypeBankFile bank;  // empty when clip_dim == 0
  std::vector<std::vector<std::uint32_t>> task_classes;
  std::vector<Matrix> task_bases;  // B_t, adapter_dim x rank

  SubspaceBasis task_subspace(std::size_t t) const { return SubspaceBasis::from_orthonormal(task_bases.at(t)); }
};

inline void validate(const SyntheticStreamSpec& spec) {
  if (spec.class_count == 0 || spec.classes_per_task == 0) {
    throw Error(ErrorCode::kInvalidArgument, "class_count and classes_per_task must be >= 1");
  }
  if (spec.classes_per_task > spec.class_count) {
    throw Error(ErrorCode::kInvalidArgument, "classes_per_task exceeds class_count");
  }
  if (!(spec.noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise must be >= 0");
  if (!(spec.drift >= 0.0 && spec.drift <= std::numbers::pi / 2 + 1e-12)) {
    throw Error(ErrorCode::kInvalidArgument, "drift must lie in [0, pi/2]");
  }
  if (!(spec.adapter_scale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "adapter_scale must be > 0");
  const std::size_t r = spec.latent_rank();
  if (spec.class_count > r) {
    throw Error(ErrorCode::kInvalidArgument, std::to_string(spec.class_count) +
                                                 " orthogonal class means need rank >= class count, got " +
                                                 std::to_string(r));
  }
  const std::size_t needed = spec.drift > 0.0 ? 2 * r : r;
  if (spec.adapter_dim < needed) {
    throw Error(ErrorCode::kInvalidArgument, "adapter_dim " + std::to_string(spec.adapter_dim) + " < " +
                                                 std::to_string(needed) + " required for rank " +
                                                 std::to_string(r));
  }
  if (spec.clip_dim != 0 && spec.clip_dim < r) {
    throw Error(ErrorCode::kInvalidArgument, "clip_dim " + std::to_string(spec.clip_dim) + " < rank " +
                                                 std::to_string(r));
  }
  if (spec.train_per_class == 0) throw Error(ErrorCode::kInvalidArgument, "train_per_class must be >= 1");
}

inline SyntheticStream generate_stream(const SyntheticStreamSpec& spec) {
  validate(spec);
  const std::size_t r = spec.latent_rank();
  const auto D = static_cast<Eigen::Index>(spec.adapter_dim);
  const auto DC = static_cast<Eigen::Index>(spec.clip_dim);
  const double clip_noise = spec.clip_noise < 0.0 ? spec.noise : spec.clip_noise;

  Rng geometry(derive_seed(spec.seed, 0));
  const Matrix codes = random_basis(geometry, r, spec.class_count).u();  // r x C
  const bool drifting = spec.drift > 0.0;
  const Matrix adapter_frame = random_basis(geometry, spec.adapter_dim, drifting ? 2 * r : r).u();
  const Matrix base = adapter_frame.leftCols(static_cast<Eigen::Index>(r));
  const Matrix clip_frame = DC > 0 ? random_basis(geometry, spec.clip_dim, r).u() : Matrix();

  SyntheticStream out;
  std::vector<std::uint32_t> ids(spec.class_count);
  std::iota(ids.begin(), ids.end(), 0U);
  out.task_classes = partition_classes(ids, spec.task_count(), spec.seed);
  std::vector<std::uint32_t> task_of(spec.class_count, 0);
  for (std::size_t t = 0; t < out.task_classes.size(); ++t) {
    for (auto c : out.task_classes[t]) task_of[c] = static_cast<std::uint32_t>(t);
    out.task_bases.push_back(
        drifting ? rotate_towards(base, adapter_frame.rightCols(static_cast<Eigen::Index>(r)),
                                  static_cast<double>(t) * spec.drift)
                 : base);
  }
  const Matrix frozen_projector = base * base.transpose();

  auto make_split = [&](std::size_t per_class, std::uint64_t stream_id) {
    Dataset ds;
    ds.header.adapter_dim = static_cast<std::uint32_t>(spec.adapter_dim);
    ds.header.clip_dim = static_cast<std::uint32_t>(spec.clip_dim);
    ds.header.class_count = static_cast<std::uint32_t>(spec.class_count);
    Rng rng(derive_seed(spec.seed, stream_id));
    Vector x(D);
    Vector z(DC);
    for (std::size_t c = 0; c < spec.class_count; ++c) {
      const Vector mean = out.task_bases[task_of[c]] * codes.col(static_cast<Eigen::Index>(c));
      const Vector clip_mean = DC > 0 ? Vector(clip_frame * codes.col(static_cast<Eigen::Index>(c))) : Vector();
      for (std::size_t s = 0; s < per_class; ++s) {
        for (Eigen::Index i = 0; i < D; ++i) x[i] = mean[i] + spec.noise * rng.normal();
        if (spec.frozen_adapter) x = frozen_projector * x;
        x *= spec.adapter_scale;
        for (Eigen::Index i = 0; i < DC; ++i) z[i] = clip_mean[i] + clip_noise * rng.normal();
        FeatureRecord rec;
        rec.label = static_cast<std::uint32_t>(c);
        rec.task_id = task_of[c];
        rec.adapter_feature.resize(static_cast<std::size_t>(D));
        rec.clip_feature.resize(static_cast<std::size_t>(DC));
        for (Eigen::Index i = 0; i < D; ++i) rec.adapter_feature[static_cast<std::size_t>(i)] = static_cast<float>(x[i]);
        for (Eigen::Index i = 0; i < DC; ++i) rec.clip_feature[static_cast<std::size_t>(i)] = static_cast<float>(z[i]);
        ds.records.push_back(std::move(rec));
      }
    }
    ds.header.record_count = static_cast<std::uint32_t>(ds.records.size());
    return ds;
  };
  out.train = make_split(spec.train_per_class, 1);
  out.test = make_split(spec.test_per_class, 2);

  if (DC > 0 && spec.template_count > 0) {
    Rng rng(derive_seed(spec.seed, 3));
    auto& bank = out.bank;
    bank.class_count = static_cast<std::uint32_t>(spec.class_count);
    bank.template_count = static_cast<std::uint32_t>(spec.template_count);
    bank.dim = static_cast<std::uint32_t>(spec.clip_dim);
    for (std::size_t c = 0; c < spec.class_count; ++c) {
      const Vector proto = clip_frame * codes.col(static_cast<Eigen::Index>(c));
      for (std::size_t p = 0; p < spec.template_count; ++p)
        for (Eigen::Index i = 0; i < DC; ++i)
          bank.payload.push_back(static_cast<float>(proto[i] + spec.template_jitter * rng.normal()));
      bank.class_names.push_back("class_" + std::to_string(c));
    }
  }
  return out;
}

/// Writes train.vemb, test.vemb and (with a clip branch) bank.vtxt plus its
/// name manifest under `dir`.
inline void save_stream(const SyntheticStream& stream, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset(dir / "train.vemb", stream.train);
  save_dataset(dir / "test.vemb", stream.test);
  if (stream.bank.class_count > 0) save_prototype_bank(dir / "bank.vtxt", stream.bank);
}

// ---------------------------------------------------------------------------
// Frozen-subspace sweep

struct RigidityOptions {
  std::size_t dim = 64;
  std::size_t rank = 8;
  std::size_t classes = 0;  // 0 = rank
  double noise = 0.1;
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 50;
  double lambda = 1e-3;
  std::uint64_t seed = 1993;
};

struct RigidityRow {
  double theta = 0.0;          // radians
  double grassmann = 0.0;      // d_G(S_1, S_theta)
  double residual = 0.0;       // mean ||(I - P_S1) x||^2 over task-t samples
  double target_energy = 0.0;  // mean ||x||^2 over task-t samples
  double mse = 0.0;            // mean ||y - yhat||^2 of the frozen fit on task-t data
  double error_rate = 0.0;     // misclassification rate on task-t data
  double task1_mse = 0.0;      // same fit on fresh task-1 samples
  double task1_error_rate = 0.0;
};

/// For each angle: fit a ridge classifier on task-1 features seen through
/// the frozen extractor z = U1^T x, then evaluate it on task data whose
/// subspace is rotated by theta away from S_1. Trial t uses the same draws
/// for every angle, so the curve is compared on common random numbers.
inline std::vector<RigidityRow> rigidity_sweep(const std::vector<double>& angles, std::size_t trials,
                                               const RigidityOptions& opt = {}) {
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one trial");
  const std::size_t k = opt.classes == 0 ? opt.rank : opt.classes;
  if (opt.rank == 0 || 2 * opt.rank > opt.dim) {
    throw Error(ErrorCode::kInvalidArgument, "sweep needs 1 <= rank <= dim / 2");
  }
  if (k > opt.rank || k == 0) throw Error(ErrorCode::kInvalidArgument, "classes must lie in [1, rank]");
  for (double a : angles) {
    if (!(a >= 0.0 && a <= std::numbers::pi / 2 + 1e-12)) {
      throw Error(ErrorCode::kInvalidArgument, "angles must lie in [0, pi/2]");
    }
  }

  const auto r = static_cast<Eigen::Index>(opt.rank);
  std::vector<RigidityRow> rows(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) rows[i].theta = angles[i];

  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(opt.seed, trial));
    const Matrix frame = random_basis(rng, opt.dim, 2 * opt.rank).u();
    const Matrix u1 = frame.leftCols(r);
    const Matrix perp = frame.rightCols(r);
    const Matrix codes = random_basis(rng, opt.rank, k).u();  // rank x k
    const SubspaceBasis s1 = SubspaceBasis::from_orthonormal(u1);

    auto draw_noise = [&](std::size_t n) {
      Matrix e(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(opt.dim));
      for (Eigen::Index a = 0; a < e.rows(); ++a)
        for (Eigen::Index b = 0; b < e.cols(); ++b) e(a, b) = opt.noise * rng.normal();
      return e;
    };
    auto labels_for = [&](std::size_t per_class) {
      std::vector<std::uint32_t> y;
      for (std::size_t c = 0; c < k; ++c) y.insert(y.end(), per_class, static_cast<std::uint32_t>(c));
      return OneHotBatch(std::move(y), k);
    };
    auto samples = [&](const Matrix& basis, const OneHotBatch& y, const Matrix& noise) {
      Matrix x = noise;
      for (std::size_t i = 0; i < y.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) += (basis * codes.col(y.labels[i])).transpose();
      return x;
    };
    struct Eval {
      double mse, error_rate, residual, energy;
    };
    auto evaluate = [&](const Matrix& weights, const Matrix& x, const OneHotBatch& y) {
      // Coordinates at rounding level of the sample norm are exact zeros of
      // the frozen extractor; without the flush an orthogonal sample would be
      // classified by leftover 1e-17 terms instead of by the tie-break.
      Matrix z = x * u1;
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double floor = kCoordinateFloor * x.row(i).norm();
        for (Eigen::Index j = 0; j < z.cols(); ++j)
          if (std::abs(z(i, j)) <= floor) z(i, j) = 0.0;
      }
      const Matrix yhat = z * weights;
      const Matrix target = y.dense();
      Eval e{0.0, 0.0, 0.0, 0.0};
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        e.mse += (target.row(i) - yhat.row(i)).squaredNorm();
        if (argmax_lowest(yhat.row(i)) != y.labels[static_cast<std::size_t>(i)]) e.error_rate += 1.0;
        e.residual += projection_residual(s1, x.row(i).transpose());
        e.energy += x.row(i).squaredNorm();
      }
      const double n = static_cast<double>(x.rows());
      return Eval{e.mse / n, e.error_rate / n, e.residual / n, e.energy / n};
    };

    const OneHotBatch train_y = labels_for(opt.train_per_class);
    const OneHotBatch test_y = labels_for(opt.test_per_class);
    const Matrix train_x = samples(u1, train_y, draw_noise(train_y.size()));
    const Matrix weights = ridge_fit(Matrix(train_x * u1), train_y, opt.lambda);
    const Eval task1 = evaluate(weights, samples(u1, test_y, draw_noise(test_y.size())), test_y);
    const Matrix test_noise = draw_noise(test_y.size());

    for (std::size_t i = 0; i < angles.size(); ++i) {
      const Matrix rotated = rotate_towards(u1, perp, angles[i]);
      const Eval e = evaluate(weights, samples(rotated, test_y, test_noise), test_y);
      RigidityRow& row = rows[i];
      row.grassmann += grassmann_distance(s1, SubspaceBasis::from_orthonormal(rotated));
      row.residual += e.residual;
      row.target_energy += e.energy;
      row.mse += e.mse;
      row.error_rate += e.error_rate;
      row.task1_mse += task1.mse;
      row.task1_error_rate += task1.error_rate;
    }
  }
  const double t = static_cast<double>(trials);
  for (auto& row : rows) {
    row.grassmann /= t;
    row.residual /= t;
    row.target_energy /= t;
    row.mse /= t;
    row.error_rate /= t;
    row.task1_mse /= t;
    row.task1_error_rate /= t;
  }
  return rows;
}

/// Ranks starting at 1; ties receive their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = rank;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "spearman needs two equal-length series of length >= 2");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace anacil

#endif  // ANACIL_RIGIDITY_LAB_HPP_
