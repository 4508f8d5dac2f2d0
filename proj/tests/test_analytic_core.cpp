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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "anacil/analytic_core.hpp"
#include "oracles.hpp"

namespace anacil {
namespace {

struct Problem {
  Matrix features;
  std::vector<std::uint32_t> labels;
  std::size_t classes;
};

Problem random_problem(std::uint64_t seed, Eigen::Index n, Eigen::Index dim, std::size_t classes) {
  Rng rng(seed);
  return Problem{oracle::relu_features(rng, n, 12, dim), oracle::random_labels(rng, static_cast<std::size_t>(n), classes),
                 classes};
}

void absorb_in_chunks(AnalyticState& state, const Problem& p, const std::vector<std::size_t>& sizes) {
  std::size_t begin = 0;
  for (std::size_t len : sizes) {
    const Matrix block = p.features.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len));
    std::vector<std::uint32_t> y(p.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                 p.labels.begin() + static_cast<std::ptrdiff_t>(begin + len));
    rls_absorb(state, block, OneHotBatch(std::move(y), state.class_count));
    begin += len;
  }
}

TEST(RidgeFit, ScalarCase) {
  const Matrix f = Matrix::Constant(1, 1, 1.0);
  const Matrix w = ridge_fit(f, OneHotBatch({0}, 1), 1.0);
  EXPECT_DOUBLE_EQ(w(0, 0), 0.5);
}

TEST(RidgeFit, LargeLambdaShrinksToZero) {
  const auto p = random_problem(3, 40, 25, 4);
  const OneHotBatch y(p.labels, p.classes);
  const double base = ridge_fit(p.features, y, 1.0).norm();
  EXPECT_LT(ridge_fit(p.features, y, 1e6).norm(), 1e-3 * base);
  double previous = std::numeric_limits<double>::infinity();
  for (int e = -8; e <= 4; ++e) {
    const double norm = ridge_fit(p.features, y, std::pow(10.0, e)).norm();
    EXPECT_LE(norm, previous * (1 + 1e-12)) << "lambda 1e" << e;
    previous = norm;
  }
}

TEST(RidgeFit, MatchesDenseInverseOracle) {
  const auto p = random_problem(5, 50, 20, 3);
  const OneHotBatch y(p.labels, p.classes);
  for (double lambda : {1e-4, 1e-1, 1.0, 10.0}) {
    const Matrix w = ridge_fit(p.features, y, lambda);
    const oracle::Dense expect = oracle::ridge_by_inverse(p.features, oracle::one_hot(p.labels, p.classes), lambda);
    EXPECT_LT(relative_frobenius(Eigen::MatrixXd(w), expect), 1e-9) << lambda;
  }
}

TEST(RidgeFit, PrimalAndDualAgree) {
  for (auto [n, d] : {std::pair<Eigen::Index, Eigen::Index>{30, 45}, {60, 20}, {25, 25}}) {
    const auto p = random_problem(static_cast<std::uint64_t>(n * d), n, d, 5);
    const OneHotBatch y(p.labels, p.classes);
    for (double lambda : {1e-3, 1.0}) {
      EXPECT_LT(relative_frobenius(ridge_fit_primal(p.features, y, lambda), ridge_fit_dual(p.features, y, lambda)), 1e-8);
    }
  }
}

TEST(RidgeFit, Errors) {
  const Matrix f = Matrix::Ones(2, 2);
  const OneHotBatch y({0, 1}, 2);
  EXPECT_THROW(ridge_fit(f, y, 0.0), Error);
  EXPECT_THROW(ridge_fit(f, y, -1.0), Error);
  Matrix bad = f;
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ridge_fit(bad, y, 1.0), Error);
  EXPECT_THROW(ridge_fit(Matrix(0, 2), OneHotBatch({}, 2), 1.0), Error);
  EXPECT_THROW(OneHotBatch({0, 2}, 2), Error);
}

TEST(AnalyticState, FreshState) {
  const auto s = make_state(4, 0.25, 3);
  EXPECT_TRUE(s.R.isApprox(Matrix::Identity(4, 4) * 4.0));
  EXPECT_TRUE(s.W.isZero(0.0));
  EXPECT_EQ(s.W.cols(), 3);
  EXPECT_EQ(s.samples_seen, 0u);
  EXPECT_THROW(make_state(4, 0.0), Error);
}

TEST(RlsUpdate, ScalarCase) {
  auto s = make_state(1, 1.0, 1);
  s = rls_update(s, Matrix::Constant(1, 1, 1.0), OneHotBatch({0}, 1));
  EXPECT_DOUBLE_EQ(s.R(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.W(0, 0), 0.5);
  EXPECT_EQ(s.samples_seen, 1u);
  EXPECT_DOUBLE_EQ(predict(s, Matrix::Constant(1, 1, 2.0))(0, 0), 1.0);
}

TEST(RlsUpdate, TwoSinglesEqualOnePair) {
  const auto p = random_problem(17, 2, 6, 2);
  auto streamed = make_state(6, 0.5, 2);
  absorb_in_chunks(streamed, p, {1, 1});
  auto batched = make_state(6, 0.5, 2);
  absorb_in_chunks(batched, p, {2});
  EXPECT_LT((streamed.R - batched.R).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((streamed.W - batched.W).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RlsUpdate, StreamedBatchesMatchClosedForm) {
  const auto p = random_problem(23, 200, 64, 6);
  auto s = make_state(64, 1e-2, 6);
  UpdateDiagnostics diag;
  std::size_t begin = 0;
  Rng rng(1);
  for (int b = 0; b < 10; ++b) {
    const std::size_t len = b == 9 ? 200 - begin : 1 + static_cast<std::size_t>(rng.below(30));
    const Matrix block = p.features.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len));
    std::vector<std::uint32_t> y(p.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                 p.labels.begin() + static_cast<std::ptrdiff_t>(begin + len));
    rls_absorb(s, block, OneHotBatch(std::move(y), 6), kDefaultChunkRows, &diag);
    begin += len;
  }
  const Matrix expect = ridge_fit(p.features, OneHotBatch(p.labels, 6), 1e-2);
  EXPECT_LT(relative_frobenius(s.W, expect), 1e-6);
  const oracle::Dense r_expect = oracle::regularized_inverse(p.features, 1e-2);
  EXPECT_LT(relative_frobenius(Eigen::MatrixXd(s.R), r_expect), 1e-6);
  EXPECT_LT(diag.max_asymmetry, 1e-8);
  EXPECT_TRUE(s.R == s.R.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.R);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  EXPECT_EQ(s.samples_seen, 200u);
}

TEST(RlsUpdate, OrderInvariance) {
  const auto p = random_problem(29, 120, 48, 5);
  auto forward = make_state(48, 0.1, 5);
  absorb_in_chunks(forward, p, {40, 40, 40});
  Problem reversed = p;
  std::vector<std::size_t> order(120);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(2);
  rng.shuffle(order);
  for (std::size_t i = 0; i < order.size(); ++i) {
    reversed.features.row(static_cast<Eigen::Index>(i)) = p.features.row(static_cast<Eigen::Index>(order[i]));
    reversed.labels[i] = p.labels[order[i]];
  }
  auto shuffled = make_state(48, 0.1, 5);
  absorb_in_chunks(shuffled, reversed, {7, 50, 63});
  EXPECT_LT(relative_frobenius(shuffled.W, forward.W), 1e-8);
}

TEST(RlsUpdate, ChunkRowsDoNotMatter) {
  const auto p = random_problem(31, 90, 40, 4);
  const OneHotBatch y(p.labels, 4);
  const auto whole = rls_update(make_state(40, 0.3, 4), p.features, y, 0);
  for (std::size_t chunk : {1u, 7u, 64u}) {
    const auto chunked = rls_update(make_state(40, 0.3, 4), p.features, y, chunk);
    EXPECT_LT(relative_frobenius(chunked.W, whole.W), 1e-9) << chunk;
  }
}

TEST(RlsUpdate, Errors) {
  auto s = make_state(3, 1.0, 2);
  EXPECT_THROW(rls_absorb(s, Matrix::Ones(1, 3), OneHotBatch({2}, 3)), Error);  // class 2 of 2
  EXPECT_THROW(rls_absorb(s, Matrix::Ones(1, 4), OneHotBatch({0}, 2)), Error);
  EXPECT_THROW(rls_absorb(s, Matrix(0, 3), OneHotBatch({}, 2)), Error);
  Matrix bad = Matrix::Ones(1, 3);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(rls_absorb(s, bad, OneHotBatch({0}, 2)), Error);
  EXPECT_EQ(s.samples_seen, 0u);
}

TEST(RlsUpdate, SingularInnerSystemReportedAndStateKept) {
  auto s = make_state(1, 1.0, 1);
  s.R(0, 0) = -1.0;  // corrupted: I + F R F^T = 0 for F = [1]
  const AnalyticState before = s;
  try {
    rls_absorb(s, Matrix::Constant(1, 1, 1.0), OneHotBatch({0}, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularSystem);
  }
  EXPECT_TRUE(s == before);
}

TEST(ExpandClasses, ZeroColumnsAndUnchangedLogits) {
  const auto p = random_problem(37, 30, 10, 3);
  auto s = rls_update(make_state(10, 1.0, 3), p.features, OneHotBatch(p.labels, 3));
  const Matrix before = predict(s, p.features);
  const auto wider = expand_classes(s, 5);
  EXPECT_EQ(wider.W.cols(), 5);
  EXPECT_TRUE(wider.W.rightCols(2).isZero(0.0));
  EXPECT_TRUE(wider.R == s.R);
  const Matrix after = predict(wider, p.features);
  EXPECT_TRUE(after.leftCols(3) == before);
  EXPECT_TRUE(expand_classes(s, 3) == s);
  EXPECT_THROW(expand_classes(s, 2), Error);
}

TEST(Predict, FreshStateAndRowWise) {
  const auto p = random_problem(41, 3, 8, 4);
  EXPECT_TRUE(predict(make_state(8, 1.0, 4), p.features).isZero(0.0));
  Rng rng(3);
  auto s = make_state(8, 1.0, 4);
  s.W = oracle::gaussian(rng, 8, 4);
  const Matrix all = predict(s, p.features);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const Matrix one = predict(s, Matrix(p.features.row(i)));
    EXPECT_TRUE(one.row(0) == all.row(i));
    EXPECT_LT((all.row(i) - p.features.row(i) * s.W).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(predict(s, Matrix::Ones(1, 7)), Error);
}

TEST(StateSnapshot, RoundTripBitExact) {
  const auto p = random_problem(43, 20, 6, 3);
  auto s = rls_update(make_state(6, 0.01, 3), p.features, OneHotBatch(p.labels, 3));
  std::ostringstream out(std::ios::binary);
  write_state(s, out);
  EXPECT_EQ(out.str().size(), 8u + 4 + 4 + 8 + 8 + 8 * (36 + 18));
  std::istringstream in(out.str(), std::ios::binary);
  const auto back = read_state(in);
  EXPECT_TRUE(back == s);
  std::ostringstream again(std::ios::binary);
  write_state(back, again);
  EXPECT_EQ(again.str(), out.str());

  std::istringstream truncated(out.str().substr(0, 60), std::ios::binary);
  EXPECT_THROW(read_state(truncated), Error);
  std::istringstream wrong(std::string("VILAEMB1") + out.str().substr(8), std::ios::binary);
  EXPECT_THROW(read_state(wrong), Error);
}

}  // namespace
}  // namespace anacil
