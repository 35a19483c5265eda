#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "latentdur/seq_ops.hpp"

#include <random>

using namespace latentdur;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = unit(rng);
  return m;
}

DurationSequence random_durations(int u_count, int k_max,
                                  std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(1, k_max);
  DurationSequence l;
  l.durations.resize(u_count);
  for (int& d : l.durations) d = dist(rng);
  return l;
}

}  // namespace

TEST_CASE("aggregate averages the frames of each token") {
  Matrix frames(5, 2);
  frames << 1, 10, 3, 30, 5, 50, 7, 70, 9, 90;
  const Matrix xbar =
      aggregate(FrameSequence{frames}, DurationSequence{{2, 3}}, 1);
  REQUIRE(xbar.rows() == 2);
  CHECK(xbar(0, 0) == doctest::Approx(2.0));   // (1+3)/2
  CHECK(xbar(0, 1) == doctest::Approx(20.0));
  CHECK(xbar(1, 0) == doctest::Approx(7.0));   // (5+7+9)/3
  CHECK(xbar(1, 1) == doctest::Approx(70.0));
}

TEST_CASE("aggregate with unit durations is the identity") {
  std::mt19937_64 rng(1);
  const Matrix frames = random_matrix(4, 3, rng);
  const Matrix xbar =
      aggregate(FrameSequence{frames}, DurationSequence{{1, 1, 1, 1}}, 1);
  CHECK((xbar - frames).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("aggregate of constant frames returns the constant") {
  Matrix frames = Matrix::Constant(6, 2, 3.25);
  const Matrix xbar =
      aggregate(FrameSequence{frames}, DurationSequence{{1, 2}}, 2);
  CHECK((xbar.array() == 3.25).all());
}

TEST_CASE("aggregate rejects length mismatches") {
  Matrix frames = Matrix::Zero(5, 2);
  CHECK_THROWS_AS(
      aggregate(FrameSequence{frames}, DurationSequence{{2, 2}}, 1),
      std::invalid_argument);
  CHECK_THROWS_AS(
      aggregate(FrameSequence{frames}, DurationSequence{{2, 3}}, 2),
      std::invalid_argument);
}

TEST_CASE("upsample repeats each row for its duration") {
  Matrix v(2, 2);
  v << 1, 2, 3, 4;  // rows A, B
  const Matrix up = upsample(v, DurationSequence{{2, 3}}, 1);
  REQUIRE(up.rows() == 5);
  CHECK(up.row(0) == v.row(0));
  CHECK(up.row(1) == v.row(0));
  CHECK(up.row(2) == v.row(1));
  CHECK(up.row(3) == v.row(1));
  CHECK(up.row(4) == v.row(1));
}

TEST_CASE("upsample with unit durations is the identity") {
  std::mt19937_64 rng(2);
  const Matrix v = random_matrix(3, 4, rng);
  const Matrix up = upsample(v, DurationSequence{{1, 1, 1}}, 1);
  CHECK((up - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("aggregate of upsample is the identity") {
  std::mt19937_64 rng(3);
  // Bitwise on dyadic inputs (every intermediate sum and quotient is
  // exact there), within rounding for full-mantissa randoms.
  for (int trial = 0; trial < 20; ++trial) {
    const int u_count = 1 + static_cast<int>(rng() % 5);
    const int g = 1 + static_cast<int>(rng() % 3);
    const DurationSequence l = random_durations(u_count, 4, rng);

    Matrix dyadic = random_matrix(u_count, 3, rng);
    dyadic = (dyadic * 1024.0).array().round() / 1024.0;
    const Matrix exact =
        aggregate(FrameSequence{upsample(dyadic, l, g)}, l, g);
    CHECK((exact - dyadic).cwiseAbs().maxCoeff() == 0.0);

    const Matrix v = random_matrix(u_count, 3, rng);
    const Matrix round = aggregate(FrameSequence{upsample(v, l, g)}, l, g);
    CHECK((round - v).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("upsample preserves total mass") {
  std::mt19937_64 rng(4);
  const Matrix v = random_matrix(4, 3, rng);
  const DurationSequence l{{2, 1, 3, 2}};
  const Matrix up = upsample(v, l, 1);
  Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(3);
  for (int u = 0; u < 4; ++u) expected += l.durations[u] * v.row(u);
  CHECK((up.colwise().sum() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("group_frames with g=1 is the identity") {
  std::mt19937_64 rng(5);
  const Matrix frames = random_matrix(5, 3, rng);
  const GroupedFrames grouped = group_frames(FrameSequence{frames}, 1);
  CHECK(grouped.padding == 0);
  CHECK((grouped.super_frames - frames).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("group_frames stacks g frames per super-frame") {
  Matrix frames(6, 2);
  frames << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  const GroupedFrames grouped = group_frames(FrameSequence{frames}, 3);
  REQUIRE(grouped.super_frames.rows() == 2);
  REQUIRE(grouped.super_frames.cols() == 6);
  CHECK(grouped.padding == 0);
  Eigen::RowVectorXd first(6);
  first << 1, 2, 3, 4, 5, 6;
  CHECK(grouped.super_frames.row(0) == first);
}

TEST_CASE("group_frames pads the last group by repeating the final frame") {
  Matrix frames(7, 1);
  frames << 1, 2, 3, 4, 5, 6, 7;
  const GroupedFrames grouped = group_frames(FrameSequence{frames}, 3);
  REQUIRE(grouped.super_frames.rows() == 3);
  CHECK(grouped.padding == 2);
  Eigen::RowVectorXd last(3);
  last << 7, 7, 7;
  CHECK(grouped.super_frames.row(2) == last);
}
