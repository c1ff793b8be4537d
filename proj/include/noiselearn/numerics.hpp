#pragma once

#include <Eigen/Dense>

#include <span>

namespace noiselearn {

// Dense double-precision storage. Matrices are row-major so that a batch of
// samples is a contiguous block per sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

Matrix identity(Eigen::Index n);

/// m * v. Throws DimensionMismatch when m.cols() != v.size().
Vector matvec(const Matrix& m, const Vector& v);

/// u v^T, shape u.size() x v.size().
Matrix outer(const Vector& u, const Vector& v);

double dot(const Vector& a, const Vector& b);
double sq_norm(const Vector& v);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

/// Throws NonFinite naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);
void require_finite(const Vector& v, const char* what);

/// Stacks equally sized vectors as the rows of a matrix.
Matrix stack_rows(std::span<const Vector> rows);

/// Frobenius norm of the off-diagonal part of the (optionally centered)
/// second-moment matrix of the rows of `samples`.
double offdiag_frobenius(const Matrix& samples, bool centered);

}  // namespace noiselearn
