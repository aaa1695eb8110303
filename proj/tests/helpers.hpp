#pragma once

#include <random>
#include <vector>

#include "battflow/sparse.hpp"
#include "battflow/types.hpp"

namespace battflow::testing {

// Symbolic LU fill oracle: boolean elimination without pivoting on a permuted
// pattern. order[k] = original index eliminated at step k. Returns the number
// of positions created beyond the original pattern.
inline long boolean_lu_fill(const Mat& pattern, const std::vector<Index>& order) {
  const Index n = static_cast<Index>(pattern.rows());
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> w(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) w(i, j) = pattern(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]) != 0;
  long fill = 0;
  for (Index k = 0; k < n; ++k)
    for (Index i = k + 1; i < n; ++i)
      if (w(i, k))
        for (Index j = k + 1; j < n; ++j)
          if (w(k, j) && !w(i, j)) {
            w(i, j) = true;
            ++fill;
          }
  return fill;
}

inline std::vector<Index> order_from_perm(const Permutation& p) {
  // p.forward[i] = new position of old i; elimination order = inverse
  std::vector<Index> order(p.forward.size());
  for (Index i = 0; i < p.size(); ++i) order[static_cast<size_t>(p.forward[static_cast<size_t>(i)])] = i;
  return order;
}

inline SpMat random_sparse(Index n, Real density, std::mt19937_64& rng, Real diag_boost = 0) {
  std::uniform_real_distribution<Real> unif(-1, 1);
  std::bernoulli_distribution keep(density);
  std::vector<Triplet> trips;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i == j || keep(rng)) trips.emplace_back(i, j, unif(rng));
  if (diag_boost > 0)
    for (Index i = 0; i < n; ++i) trips.emplace_back(i, i, diag_boost);
  return from_triplets(n, n, trips);
}

inline SpMat random_symmetric(Index n, Real density, std::mt19937_64& rng, Real diag_boost = 0) {
  SpMat a = random_sparse(n, density, rng, 0);
  SpMat s = SpMat(Real(0.5) * (a + SpMat(a.transpose())));
  if (diag_boost > 0) {
    SpMat d = spdiag(Vec::Constant(n, diag_boost));
    s = SpMat(s + d);
  }
  s.makeCompressed();
  return s;
}

}  // namespace battflow::testing
