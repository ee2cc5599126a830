#pragma once

#include <cmath>
#include <random>

#include "gridmc/gridmodel.hpp"
#include "gridmc/types.hpp"

namespace gridmc::test {

inline RMatrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RMatrix a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = normal(rng);
  return a;
}

inline RMatrix random_low_rank(Index rows, Index cols, Index rank, std::mt19937_64& rng) {
  const RMatrix left = random_matrix(rows, rank, rng);
  return left * random_matrix(rank, cols, rng);
}

inline CVector random_cvector(Index n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  CVector v(n);
  for (Index i = 0; i < n; ++i) v(i) = cplx(normal(rng), normal(rng));
  return v;
}

// Slack plus one load bus joined by a single line of impedance z.
inline NetworkModel two_bus(cplx z) {
  NetworkModel net;
  const cplx y = 1.0 / z;
  net.y_ll = CMatrix::Constant(1, 1, y);
  net.y_l0 = CMatrix::Constant(1, 1, -y);
  net.v0 = CVector::Constant(1, cplx(1.0, 0.0));
  net.index.entries = {{"2", 'a'}};
  return net;
}

// Three contiguous areas on a short generated feeder.
inline FeederSpec small_feeder(int buses = 13, Seed seed = 5) {
  FeederSpec spec;
  spec.n_buses = buses;
  spec.seed = seed;
  return spec;
}

}  // namespace gridmc::test
