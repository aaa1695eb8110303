#include "battflow/sparse.hpp"

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <atomic>
#include <cmath>
#include <numeric>

namespace battflow {

namespace {

std::atomic<long> g_amd_calls{0};

size_t pattern_hash(const SpMat& a) {
  size_t h = 1469598103934665603ull;
  auto mix = [&h](size_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  mix(static_cast<size_t>(a.rows()));
  mix(static_cast<size_t>(a.cols()));
  for (Index c = 0; c <= a.cols(); ++c) mix(static_cast<size_t>(a.outerIndexPtr()[c]));
  const Index nnz = static_cast<Index>(a.nonZeros());
  for (Index k = 0; k < nnz; ++k) mix(static_cast<size_t>(a.innerIndexPtr()[k]));
  return h;
}

// Column with no stored entry, if any. A structurally singular input is
// rejected before it reaches the backend.
Index find_empty_column(const SpMat& a) {
  for (Index c = 0; c < a.cols(); ++c)
    if (a.outerIndexPtr()[c] == a.outerIndexPtr()[c + 1]) return c;
  return -1;
}

bool has_empty_row(const SpMat& a, Index* row) {
  std::vector<char> seen(static_cast<size_t>(a.rows()), 0);
  for (Index k = 0; k < a.nonZeros(); ++k) seen[static_cast<size_t>(a.innerIndexPtr()[k])] = 1;
  for (Index r = 0; r < a.rows(); ++r)
    if (!seen[static_cast<size_t>(r)]) {
      *row = r;
      return true;
    }
  return false;
}

}  // namespace

SpMat from_triplets(Index nrows, Index ncols, const std::vector<Triplet>& entries,
                    bool keep_explicit_zeros) {
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= nrows || t.col() < 0 || t.col() >= ncols)
      throw std::out_of_range("from_triplets: entry (" + std::to_string(t.row()) + ", " +
                              std::to_string(t.col()) + ") outside " + std::to_string(nrows) +
                              "x" + std::to_string(ncols));
  }
  SpMat a(nrows, ncols);
  a.setFromTriplets(entries.begin(), entries.end());
  if (!keep_explicit_zeros) a.prune([](Index, Index, Real v) { return v != Real(0); });
  a.makeCompressed();
  return a;
}

bool Permutation::is_identity() const {
  for (Index i = 0; i < size(); ++i)
    if (forward[static_cast<size_t>(i)] != i) return false;
  return true;
}

bool Permutation::is_valid() const {
  std::vector<char> seen(forward.size(), 0);
  for (Index v : forward) {
    if (v < 0 || v >= size() || seen[static_cast<size_t>(v)]) return false;
    seen[static_cast<size_t>(v)] = 1;
  }
  return true;
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.forward.resize(forward.size());
  for (Index i = 0; i < size(); ++i) inv.forward[static_cast<size_t>(forward[static_cast<size_t>(i)])] = i;
  return inv;
}

Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, Index> Permutation::matrix() const {
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, Index> p(size());
  for (Index i = 0; i < size(); ++i) p.indices()[i] = forward[static_cast<size_t>(i)];
  return p;
}

Permutation Permutation::identity(Index n) {
  Permutation p;
  p.forward.resize(static_cast<size_t>(n));
  std::iota(p.forward.begin(), p.forward.end(), 0);
  return p;
}

SpMat permute_symmetric(const SpMat& a, const Permutation& p) {
  auto pm = p.matrix();
  SpMat out = pm * a * pm.transpose();
  out.makeCompressed();
  return out;
}

Permutation amd_order(const SpMat& pattern) {
  if (pattern.rows() != pattern.cols())
    throw std::invalid_argument("amd_order: pattern must be square");
  g_amd_calls.fetch_add(1, std::memory_order_relaxed);
  Permutation p;
  if (pattern.rows() == 0) return p;
  Eigen::AMDOrdering<Index> amd;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, Index> perm;
  SpMat compressed = pattern;
  compressed.makeCompressed();
  // The functor returns the inverse permutation (Eigen applies perm.inverse()
  // itself); invert so forward[i] is the new position of old index i.
  amd(compressed, perm);
  auto inv = perm.inverse().eval();
  p.forward.assign(inv.indices().data(), inv.indices().data() + inv.indices().size());
  return p;
}

long amd_call_count() { return g_amd_calls.load(std::memory_order_relaxed); }
void reset_amd_call_count() { g_amd_calls.store(0, std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// LU

struct LuFactors::Impl {
  LuOrdering ordering = LuOrdering::Colamd;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<Index>> colamd;
  Eigen::SparseLU<SpMat, Eigen::NaturalOrdering<Index>> natural;
  Vec row_scale;
  size_t pattern = 0;
  bool analyzed = false;
  bool valid = false;
  Index n = 0;

  template <typename Fn>
  decltype(auto) with_solver(Fn&& fn) {
    if (ordering == LuOrdering::Colamd) return fn(colamd);
    return fn(natural);
  }
  template <typename Fn>
  decltype(auto) with_solver(Fn&& fn) const {
    if (ordering == LuOrdering::Colamd) return fn(colamd);
    return fn(natural);
  }
};

LuFactors::LuFactors(LuOrdering ordering) : impl_(std::make_unique<Impl>()) {
  impl_->ordering = ordering;
}
LuFactors::~LuFactors() = default;
LuFactors::LuFactors(LuFactors&&) noexcept = default;
LuFactors& LuFactors::operator=(LuFactors&&) noexcept = default;

void LuFactors::factorize(const SpMat& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("lu_factor: matrix must be square");
  SpMat c = a;
  c.makeCompressed();
  Index bad_col = find_empty_column(c);
  if (bad_col >= 0)
    throw SingularMatrixError("lu_factor: structurally singular, empty column " +
                              std::to_string(bad_col), bad_col);
  Index bad_row = -1;
  if (has_empty_row(c, &bad_row))
    throw SingularMatrixError("lu_factor: structurally singular, empty row " +
                              std::to_string(bad_row), -1);

  const Index n = c.rows();
  Vec scale = Vec::Zero(n);
  for (Index k = 0; k < c.outerSize(); ++k)
    for (SpMat::InnerIterator it(c, k); it; ++it)
      scale[it.row()] = std::max(scale[it.row()], std::abs(it.value()));
  for (Index i = 0; i < n; ++i) scale[i] = scale[i] > 0 ? Real(1) / scale[i] : Real(1);
  SpMat scaled = scale.asDiagonal() * c;
  scaled.makeCompressed();

  auto& im = *impl_;
  const size_t h = pattern_hash(scaled);
  im.with_solver([&](auto& solver) {
    if (!im.analyzed || im.pattern != h) {
      solver.analyzePattern(scaled);
      im.pattern = h;
      im.analyzed = true;
    }
    solver.factorize(scaled);
  });
  const bool ok = im.with_solver([](const auto& solver) { return solver.info() == Eigen::Success; });
  if (!ok) {
    im.valid = false;
    throw SingularMatrixError(
        "lu_factor: " + im.with_solver([](const auto& solver) { return solver.lastErrorMessage(); }),
        -1);
  }
  im.row_scale = scale;
  im.n = n;
  im.valid = true;

  // Residual probe: a factorization that cannot reproduce A*x=b to well above
  // the solve contract indicates a collapsed pivot the backend let through.
  Vec b = scaled * Vec::Ones(n);
  Vec x = im.with_solver([&](const auto& solver) { return Vec(solver.solve(b)); });
  const Real amax = max_abs(scaled);
  const Real res = (scaled * x - b).lpNorm<Eigen::Infinity>();
  if (!x.allFinite() || res > 1e-6 * (amax * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>())) {
    im.valid = false;
    throw SingularMatrixError("lu_factor: numerically singular (residual probe failed)", -1);
  }
}

Vec LuFactors::solve(const Vec& b) const {
  const auto& im = *impl_;
  if (!im.valid) throw std::logic_error("LuFactors::solve before factorize");
  if (b.size() != im.n) throw std::invalid_argument("lu_solve: dimension mismatch");
  Vec sb = im.row_scale.asDiagonal() * b;
  return im.with_solver([&](const auto& solver) { return Vec(solver.solve(sb)); });
}

Mat LuFactors::solve(const Mat& b) const {
  const auto& im = *impl_;
  if (!im.valid) throw std::logic_error("LuFactors::solve before factorize");
  if (b.rows() != im.n) throw std::invalid_argument("lu_solve: dimension mismatch");
  Mat sb = im.row_scale.asDiagonal() * b;
  return im.with_solver([&](const auto& solver) { return Mat(solver.solve(sb)); });
}

bool LuFactors::valid() const { return impl_->valid; }
Index LuFactors::rows() const { return impl_->n; }
Index LuFactors::nnz_l() const {
  return impl_->with_solver([](const auto& solver) { return static_cast<Index>(solver.nnzL()); });
}
Index LuFactors::nnz_u() const {
  return impl_->with_solver([](const auto& solver) { return static_cast<Index>(solver.nnzU()); });
}
const Vec& LuFactors::row_scale() const { return impl_->row_scale; }

Permutation LuFactors::row_perm() const {
  Permutation p;
  impl_->with_solver([&](const auto& solver) {
    const auto& idx = solver.rowsPermutation().indices();
    p.forward.assign(idx.data(), idx.data() + idx.size());
  });
  return p;
}

Permutation LuFactors::col_perm() const {
  Permutation p;
  impl_->with_solver([&](const auto& solver) {
    const auto& idx = solver.colsPermutation().indices();
    p.forward.assign(idx.data(), idx.data() + idx.size());
  });
  return p;
}

LuFactors lu_factor(const SpMat& a) {
  LuFactors f;
  f.factorize(a);
  return f;
}

Vec lu_solve(const LuFactors& f, const Vec& b) { return f.solve(b); }

// ---------------------------------------------------------------------------
// LDL^T

namespace {

// Dense Bunch-Kaufman LDL^T with 1x1/2x2 pivots (lower-triangular variant).
struct DenseBk {
  Mat l;             // unit lower triangular
  Vec d;             // block-diagonal: 1x1 entries, 2x2 via subdiag e
  Vec e;             // e[k] != 0 couples rows k, k+1 into a 2x2 block
  std::vector<Index> piv_order;  // original index eliminated at step k
  bool used_2x2 = false;

  void factorize(Mat w, Real tol) {
    const Index n = static_cast<Index>(w.rows());
    const Real alpha = (1 + std::sqrt(17.0)) / 8;
    l = Mat::Identity(n, n);
    d = Vec::Zero(n);
    e = Vec::Zero(n);
    piv_order.resize(static_cast<size_t>(n));
    std::vector<Index> orig(static_cast<size_t>(n));
    std::iota(orig.begin(), orig.end(), 0);

    auto swap_rows = [&](Index i, Index j) {
      if (i == j) return;
      w.row(i).swap(w.row(j));
      w.col(i).swap(w.col(j));
      std::swap(orig[static_cast<size_t>(i)], orig[static_cast<size_t>(j)]);
      // already-built part of L swaps rows only
      if (i > 0 && j > 0) {
        Index m = std::min(i, j);
        for (Index c = 0; c < m; ++c) std::swap(l(i, c), l(j, c));
      }
    };

    Index k = 0;
    while (k < n) {
      Index r = k;
      Real lambda = 0;
      for (Index i = k + 1; i < n; ++i)
        if (std::abs(w(i, k)) > lambda) {
          lambda = std::abs(w(i, k));
          r = i;
        }
      const Real akk = std::abs(w(k, k));
      bool two = false;
      if (akk < alpha * lambda) {
        Real sigma = 0;
        for (Index i = k; i < n; ++i)
          if (i != r) sigma = std::max(sigma, std::abs(w(i, r)));
        if (akk * sigma < alpha * lambda * lambda) {
          if (std::abs(w(r, r)) >= alpha * sigma) {
            swap_rows(k, r);
          } else {
            swap_rows(k + 1, r);
            two = true;
          }
        }
      }

      if (!two) {
        const Real piv = w(k, k);
        if (std::abs(piv) <= tol)
          throw SingularMatrixError("ldl_factor: zero pivot at column " + std::to_string(orig[static_cast<size_t>(k)]),
                                    orig[static_cast<size_t>(k)]);
        for (Index i = k + 1; i < n; ++i) l(i, k) = w(i, k) / piv;
        for (Index j = k + 1; j < n; ++j)
          for (Index i = j; i < n; ++i) w(i, j) -= l(i, k) * w(j, k);
        d[k] = piv;
        piv_order[static_cast<size_t>(k)] = orig[static_cast<size_t>(k)];
        ++k;
      } else {
        used_2x2 = true;
        Eigen::Matrix2d blk;
        blk << w(k, k), w(k + 1, k), w(k + 1, k), w(k + 1, k + 1);
        const Real det = blk.determinant();
        if (std::abs(det) <= tol * std::max(Real(1), blk.cwiseAbs().maxCoeff()))
          throw SingularMatrixError("ldl_factor: singular 2x2 pivot at column " +
                                        std::to_string(orig[static_cast<size_t>(k)]),
                                    orig[static_cast<size_t>(k)]);
        Eigen::Matrix2d inv = blk.inverse();
        for (Index i = k + 2; i < n; ++i) {
          const Real c0 = w(i, k), c1 = w(i, k + 1);
          l(i, k) = c0 * inv(0, 0) + c1 * inv(1, 0);
          l(i, k + 1) = c0 * inv(0, 1) + c1 * inv(1, 1);
        }
        for (Index j = k + 2; j < n; ++j)
          for (Index i = j; i < n; ++i)
            w(i, j) -= l(i, k) * w(j, k) + l(i, k + 1) * w(j, k + 1);
        d[k] = blk(0, 0);
        d[k + 1] = blk(1, 1);
        e[k] = blk(1, 0);
        piv_order[static_cast<size_t>(k)] = orig[static_cast<size_t>(k)];
        piv_order[static_cast<size_t>(k + 1)] = orig[static_cast<size_t>(k + 1)];
        k += 2;
      }
    }
  }

  Vec solve(const Vec& b) const {
    const Index n = static_cast<Index>(l.rows());
    Vec y(n);
    for (Index i = 0; i < n; ++i) y[i] = b[piv_order[static_cast<size_t>(i)]];
    l.triangularView<Eigen::UnitLower>().solveInPlace(y);
    for (Index k = 0; k < n;) {
      if (k + 1 < n && e[k] != 0) {
        Eigen::Matrix2d blk;
        blk << d[k], e[k], e[k], d[k + 1];
        Eigen::Vector2d rhs(y[k], y[k + 1]);
        Eigen::Vector2d s = blk.inverse() * rhs;
        y[k] = s[0];
        y[k + 1] = s[1];
        k += 2;
      } else {
        y[k] /= d[k];
        ++k;
      }
    }
    l.transpose().triangularView<Eigen::UnitUpper>().solveInPlace(y);
    Vec x(n);
    for (Index i = 0; i < n; ++i) x[piv_order[static_cast<size_t>(i)]] = y[i];
    return x;
  }
};

constexpr Index kDenseBkCap = 6000;

}  // namespace

struct LdlFactors::Impl {
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<Index>> solver;
  DenseBk bk;
  Vec scale;  // symmetric equilibration, factorization acts on S A S
  size_t pattern = 0;
  bool analyzed = false;
  bool valid = false;
  bool dense_path = false;
  Index n = 0;
};

LdlFactors::LdlFactors() : impl_(std::make_unique<Impl>()) {}
LdlFactors::~LdlFactors() = default;
LdlFactors::LdlFactors(LdlFactors&&) noexcept = default;
LdlFactors& LdlFactors::operator=(LdlFactors&&) noexcept = default;

void LdlFactors::factorize(const SpMat& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("ldl_factor: matrix must be square");
  SpMat c = a;
  c.makeCompressed();
  const Real amax = max_abs(c);
  {
    SpMat diff = SpMat(c - SpMat(c.transpose()));
    if (max_abs(diff) > 1e-12 * std::max(Real(1), amax))
      throw AsymmetricMatrixError("ldl_factor: input is not symmetric");
  }
  auto& im = *impl_;
  im.n = c.rows();
  im.valid = false;
  im.dense_path = false;
  if (im.n == 0) {
    im.valid = true;
    return;
  }

  // Symmetric equilibration keeps the pivot test meaningful when the input
  // spans many orders of magnitude (barrier terms do near convergence).
  Vec rowmax = Vec::Zero(im.n);
  for (Index k = 0; k < c.outerSize(); ++k)
    for (SpMat::InnerIterator it(c, k); it; ++it)
      rowmax[it.row()] = std::max(rowmax[it.row()], std::abs(it.value()));
  im.scale.resize(im.n);
  for (Index i = 0; i < im.n; ++i)
    im.scale[i] = rowmax[i] > 0 ? Real(1) / std::sqrt(rowmax[i]) : Real(1);
  c = SpMat(im.scale.asDiagonal() * c * im.scale.asDiagonal());
  c.makeCompressed();

  const Real pivot_tol = 1e-13 * std::max(Real(1), max_abs(c));
  const size_t h = pattern_hash(c);
  if (!im.analyzed || im.pattern != h) {
    im.solver.analyzePattern(c);
    im.pattern = h;
    im.analyzed = true;
  }
  im.solver.factorize(c);
  bool ok = im.solver.info() == Eigen::Success;
  if (ok) {
    const Vec& dvec = im.solver.vectorD();
    for (Index i = 0; ok && i < dvec.size(); ++i)
      if (!std::isfinite(dvec[i]) || std::abs(dvec[i]) <= pivot_tol) ok = false;
    if (ok) {
      const SpMat lmat = im.solver.matrixL();
      for (Index k = 0; ok && k < lmat.nonZeros(); ++k)
        if (!std::isfinite(lmat.valuePtr()[k])) ok = false;
    }
  }
  if (ok) {
    im.valid = true;
    return;
  }

  // 1x1 pivoting collapsed; redo with Bunch-Kaufman 2x2-capable pivoting.
  if (im.n > kDenseBkCap)
    throw SingularMatrixError("ldl_factor: 1x1 pivoting failed and matrix too large for the dense 2x2 fallback", -1);
  im.bk = DenseBk{};
  im.bk.factorize(Mat(c), pivot_tol);
  im.dense_path = true;
  im.valid = true;
}

Vec LdlFactors::solve(const Vec& b) const {
  const auto& im = *impl_;
  if (!im.valid) throw std::logic_error("LdlFactors::solve before factorize");
  if (b.size() != im.n) throw std::invalid_argument("ldl_solve: dimension mismatch");
  if (im.n == 0) return Vec();
  Vec sb = im.scale.asDiagonal() * b;
  Vec y = im.dense_path ? im.bk.solve(sb) : Vec(im.solver.solve(sb));
  return im.scale.asDiagonal() * y;
}

bool LdlFactors::valid() const { return impl_->valid; }
Index LdlFactors::rows() const { return impl_->n; }

Index LdlFactors::nnz_l() const {
  const auto& im = *impl_;
  if (im.n == 0) return 0;
  if (!im.dense_path) return static_cast<Index>(SpMat(im.solver.matrixL()).nonZeros());
  Index count = 0;
  for (Index j = 0; j < im.n; ++j)
    for (Index i = j; i < im.n; ++i)
      if (im.bk.l(i, j) != 0) ++count;
  return count;
}

Index LdlFactors::factor_nnz() const { return rows() == 0 ? 0 : nnz_l() + rows(); }
bool LdlFactors::dense_fallback() const { return impl_->dense_path; }
bool LdlFactors::used_2x2_pivot() const { return impl_->dense_path && impl_->bk.used_2x2; }
const Vec& LdlFactors::scale() const { return impl_->scale; }

Permutation LdlFactors::perm() const {
  const auto& im = *impl_;
  Permutation p;
  if (im.n == 0) return p;
  if (!im.dense_path) {
    const auto& idx = im.solver.permutationP().indices();
    p.forward.assign(idx.data(), idx.data() + idx.size());
  } else {
    // piv_order[k] = original index placed at position k
    p.forward.resize(static_cast<size_t>(im.n));
    for (Index k = 0; k < im.n; ++k) p.forward[static_cast<size_t>(im.bk.piv_order[static_cast<size_t>(k)])] = k;
  }
  return p;
}

SpMat LdlFactors::matrix_l() const {
  const auto& im = *impl_;
  if (!im.dense_path) return SpMat(im.solver.matrixL());
  return im.bk.l.sparseView();
}

Mat LdlFactors::block_d() const {
  const auto& im = *impl_;
  Mat d = Mat::Zero(im.n, im.n);
  if (im.n == 0) return d;
  if (!im.dense_path) {
    d.diagonal() = im.solver.vectorD();
  } else {
    d.diagonal() = im.bk.d;
    for (Index k = 0; k + 1 < im.n; ++k)
      if (im.bk.e[k] != 0) d(k + 1, k) = d(k, k + 1) = im.bk.e[k];
  }
  return d;
}

LdlFactors ldl_factor(const SpMat& a) {
  LdlFactors f;
  f.factorize(a);
  return f;
}

Vec ldl_solve(const LdlFactors& f, const Vec& b) { return f.solve(b); }

}  // namespace battflow
