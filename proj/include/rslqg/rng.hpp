#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace rslqg {

/// Seeded Gaussian source. Independent streams are obtained by seeding with
/// master_seed + trial_index; a given seed always produces the same sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }

  Eigen::VectorXd gaussian_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gaussian();
    return v;
  }

  // Row-major fill so the draw order matches the buffer/CSV layout.
  Eigen::MatrixXd gaussian_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = gaussian();
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rslqg
