#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <complex>
#include <limits>

namespace battflow {

using Real = double;
using Index = int;
using Complex = std::complex<Real>;

using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using IVec = Eigen::VectorXi;
using Mat = Eigen::MatrixXd;
using IMat = Eigen::MatrixXi;
using SpMat = Eigen::SparseMatrix<Real>;
using SpCMat = Eigen::SparseMatrix<Complex>;
using Triplet = Eigen::Triplet<Real>;
using CTriplet = Eigen::Triplet<Complex>;

inline constexpr Real kInf = std::numeric_limits<Real>::infinity();

/// Sparse diagonal matrix from a vector expression.
template <typename Derived>
Eigen::SparseMatrix<typename Derived::Scalar> spdiag(const Eigen::MatrixBase<Derived>& d) {
  using Scalar = typename Derived::Scalar;
  Eigen::SparseMatrix<Scalar> m(d.size(), d.size());
  m.reserve(Eigen::VectorXi::Constant(static_cast<int>(d.size()), 1));
  for (Index i = 0; i < d.size(); ++i) m.insert(i, i) = d.derived()(i);
  m.makeCompressed();
  return m;
}

inline Real max_abs(const SpMat& a) {
  Real m = 0;
  for (Index k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

}  // namespace battflow
