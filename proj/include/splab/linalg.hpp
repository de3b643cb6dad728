#pragma once

#include <functional>

#include "splab/tensor.hpp"

namespace splab {

struct EigenDecomposition {
  Vec values;       // descending
  Matrix vectors;   // column i pairs with values[i]
};

/// Cyclic Jacobi eigensolver for a symmetric matrix. Eigenvalues are sorted
/// descending and each eigenvector's first non-negligible entry is positive.
EigenDecomposition jacobi_eigen(const Matrix& symmetric);

/// Orthonormal basis U (d x m) of an affine subspace through `offset`.
struct SubspaceBasis {
  Matrix U;
  Vec offset;
  Vec eigenvalues;  // length d, descending, non-negative

  std::size_t ambient_dim() const { return U.rows; }
  std::size_t dim() const { return U.cols; }
  /// First `k` columns; offset and eigenvalues are kept.
  SubspaceBasis truncated(std::size_t k) const;
  /// Smallest k whose leading eigenvalues hold `fraction` of the total.
  std::size_t dims_for_variance(double fraction) const;
};

enum class OffsetMode { mean, zero };

/// Full eigendecomposition of the second-moment matrix of samples about the
/// offset (sample mean with 1/(N-1), or the origin with 1/N).
SubspaceBasis pca_fit(const Matrix& samples, OffsetMode mode);

struct Projection {
  Vec in_component;
  Vec out_component;
};

/// Splits v into U Uᵀ v and v - U Uᵀ v. The offset is not applied.
Projection project(const SubspaceBasis& basis, std::span<const double> v);

/// ‖(I - U Uᵀ)(x - offset)‖₂
double distance_to_subspace(const SubspaceBasis& basis, std::span<const double> x);

/// Gram-Schmidt completion of the orthonormal columns of `partial` to a full
/// basis of R^d, drawing candidates from the canonical basis e_0, e_1, ...
Matrix complete_orthonormal(const Matrix& partial, std::size_t d);

/// Orthonormalises the columns of a (d x m, m <= d) by modified Gram-Schmidt.
Matrix orthonormalize_columns(const Matrix& a);

/// Solves a x = b with partial pivoting; throws on a singular matrix.
Vec solve(const Matrix& a, std::span<const double> b);
Matrix inverse(const Matrix& a);
/// Maximum absolute column sum.
double matrix_norm1(const Matrix& a);

/// Principal angles (radians, ascending) between the column spans of two
/// matrices with orthonormal columns.
Vec principal_angles(const Matrix& a, const Matrix& b);

/// Central differences: (f(x + h e_i) - f(x - h e_i)) / 2h.
Vec finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                     std::span<const double> x, double h);

}  // namespace splab
