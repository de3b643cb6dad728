#include "splab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splab {

namespace {

double off_diagonal_sq(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return s;
}

void fix_sign(Matrix& vectors, std::size_t col) {
  for (std::size_t r = 0; r < vectors.rows; ++r) {
    const double v = vectors(r, col);
    if (std::abs(v) > 1e-12) {
      if (v < 0.0)
        for (std::size_t q = 0; q < vectors.rows; ++q) vectors(q, col) = -vectors(q, col);
      return;
    }
  }
}

}  // namespace

EigenDecomposition jacobi_eigen(const Matrix& symmetric) {
  if (symmetric.rows != symmetric.cols) throw ShapeError("jacobi_eigen: matrix not square");
  const std::size_t n = symmetric.rows;
  Matrix a = symmetric;
  Matrix v = Matrix::identity(n);

  double scale = 0.0;
  for (double x : a.data) scale += x * x;

  for (int sweep = 0; sweep < 100; ++sweep) {
    if (off_diagonal_sq(a) <= 1e-30 * scale || scale == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vec(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
    fix_sign(out.vectors, c);
  }
  return out;
}

SubspaceBasis SubspaceBasis::truncated(std::size_t k) const {
  if (k > U.cols) throw ShapeError("truncated: requested more columns than available");
  SubspaceBasis out{Matrix(U.rows, k), offset, eigenvalues};
  for (std::size_t r = 0; r < U.rows; ++r)
    for (std::size_t c = 0; c < k; ++c) out.U(r, c) = U(r, c);
  return out;
}

std::size_t SubspaceBasis::dims_for_variance(double fraction) const {
  const double total = std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0);
  if (total <= 0.0) return 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    acc += eigenvalues[k];
    if (acc >= fraction * total) return k + 1;
  }
  return eigenvalues.size();
}

SubspaceBasis pca_fit(const Matrix& samples, OffsetMode mode) {
  const std::size_t n = samples.rows;
  const std::size_t d = samples.cols;
  if (n < 2) throw ShapeError("pca_fit: need at least two samples");
  if (d < 1) throw ShapeError("pca_fit: zero-dimensional samples");

  Vec offset(d, 0.0);
  if (mode == OffsetMode::mean) {
    for (std::size_t i = 0; i < n; ++i) axpy(1.0, samples.row(i), offset);
    for (double& v : offset) v /= static_cast<double>(n);
  }

  Matrix cov(d, d);
  Vec centered(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = samples.row(i);
    for (std::size_t a = 0; a < d; ++a) centered[a] = row[a] - offset[a];
    for (std::size_t a = 0; a < d; ++a) {
      const double ca = centered[a];
      double* crow = cov.data.data() + a * d;
      for (std::size_t b = a; b < d; ++b) crow[b] += ca * centered[b];
    }
  }
  const double denom = mode == OffsetMode::mean ? static_cast<double>(n - 1) : static_cast<double>(n);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= denom;
      cov(b, a) = cov(a, b);
    }

  auto eig = jacobi_eigen(cov);
  const double top = std::max(eig.values.empty() ? 0.0 : eig.values[0], 0.0);
  std::size_t rank = 0;
  for (double& v : eig.values) {
    if (v <= 1e-13 * top || top == 0.0) {
      v = 0.0;
    } else {
      ++rank;
    }
  }

  // Null-space directions are arbitrary; replace them with a deterministic
  // completion so degenerate inputs give reproducible bases.
  if (rank < d) {
    Matrix kept(d, rank);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < rank; ++c) kept(r, c) = eig.vectors(r, c);
    eig.vectors = complete_orthonormal(kept, d);
    for (std::size_t c = rank; c < d; ++c) fix_sign(eig.vectors, c);
  }

  return SubspaceBasis{std::move(eig.vectors), std::move(offset), std::move(eig.values)};
}

Projection project(const SubspaceBasis& basis, std::span<const double> v) {
  if (v.size() != basis.U.rows)
    throw ShapeError("project: vector length " + std::to_string(v.size()) + " != ambient dim " +
                     std::to_string(basis.U.rows));
  const Vec coords = matvec_t(basis.U, v);
  Vec in = matvec(basis.U, coords);
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - in[i];
  return {std::move(in), std::move(out)};
}

double distance_to_subspace(const SubspaceBasis& basis, std::span<const double> x) {
  Vec centered(x.begin(), x.end());
  if (!basis.offset.empty()) centered = sub(x, basis.offset);
  return norm2(project(basis, centered).out_component);
}

Matrix complete_orthonormal(const Matrix& partial, std::size_t d) {
  Matrix out(d, d);
  std::size_t filled = 0;
  for (std::size_t c = 0; c < partial.cols; ++c, ++filled)
    for (std::size_t r = 0; r < d; ++r) out(r, filled) = partial(r, c);

  for (std::size_t e = 0; e < d && filled < d; ++e) {
    Vec cand(d, 0.0);
    cand[e] = 1.0;
    // Two passes of Gram-Schmidt for numerical orthogonality.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t c = 0; c < filled; ++c) {
        double proj = 0.0;
        for (std::size_t r = 0; r < d; ++r) proj += out(r, c) * cand[r];
        for (std::size_t r = 0; r < d; ++r) cand[r] -= proj * out(r, c);
      }
    }
    const double nrm = norm2(cand);
    if (nrm < 1e-6) continue;
    for (std::size_t r = 0; r < d; ++r) out(r, filled) = cand[r] / nrm;
    ++filled;
  }
  return out;
}

Matrix orthonormalize_columns(const Matrix& a) {
  Matrix q = a;
  for (std::size_t c = 0; c < q.cols; ++c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < c; ++p) {
        double proj = 0.0;
        for (std::size_t r = 0; r < q.rows; ++r) proj += q(r, p) * q(r, c);
        for (std::size_t r = 0; r < q.rows; ++r) q(r, c) -= proj * q(r, p);
      }
    }
    double nrm = 0.0;
    for (std::size_t r = 0; r < q.rows; ++r) nrm += q(r, c) * q(r, c);
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) throw Error("orthonormalize_columns: columns are linearly dependent");
    for (std::size_t r = 0; r < q.rows; ++r) q(r, c) /= nrm;
  }
  return q;
}

Vec solve(const Matrix& a, std::span<const double> b) {
  if (a.rows != a.cols || a.rows != b.size()) throw ShapeError("solve: dimension mismatch");
  const std::size_t n = a.rows;
  Matrix m = a;
  Vec x(b.begin(), b.end());
  double scale = 0.0;
  for (double v : a.data) scale = std::max(scale, std::abs(v));
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
    if (std::abs(m(piv, col)) <= 1e-14 * scale || scale == 0.0) throw Error("solve: singular matrix");
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(piv, c), m(col, c));
      std::swap(x[piv], x[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m(r, col) / m(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m(r, c) -= f * m(col, c);
      x[r] -= f * x[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m(i, c) * x[c];
    x[i] = s / m(i, i);
  }
  return x;
}

Matrix inverse(const Matrix& a) {
  const std::size_t n = a.rows;
  Matrix inv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    Vec e(n, 0.0);
    e[c] = 1.0;
    const Vec col = solve(a, e);
    for (std::size_t r = 0; r < n; ++r) inv(r, c) = col[r];
  }
  return inv;
}

double matrix_norm1(const Matrix& a) {
  double best = 0.0;
  for (std::size_t c = 0; c < a.cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) s += std::abs(a(r, c));
    best = std::max(best, s);
  }
  return best;
}

Vec principal_angles(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("principal_angles: ambient dimensions differ");
  const Matrix m = matmul(a.transposed(), b);
  const Matrix gram = matmul(m.transposed(), m);
  const auto eig = jacobi_eigen(gram);
  const std::size_t k = std::min(a.cols, b.cols);
  Vec angles(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double s = std::sqrt(std::clamp(eig.values[i], 0.0, 1.0));
    angles[i] = std::acos(std::min(1.0, s));
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

Vec finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                     std::span<const double> x, double h) {
  Vec probe(x.begin(), x.end());
  Vec grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace splab
