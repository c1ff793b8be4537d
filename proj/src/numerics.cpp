#include "noiselearn/numerics.hpp"

#include "noiselearn/errors.hpp"

#include <string>

namespace noiselearn {

Matrix identity(Eigen::Index n) { return Matrix::Identity(n, n); }

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "matvec: matrix has " + std::to_string(m.cols()) + " columns, vector has " +
                    std::to_string(v.size()) + " entries");
  }
  return m * v;
}

Matrix outer(const Vector& u, const Vector& v) { return u * v.transpose(); }

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dot: length mismatch");
  }
  return a.dot(b);
}

double sq_norm(const Vector& v) { return v.squaredNorm(); }

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::NonFinite, what);
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorCode::NonFinite, what);
}

Matrix stack_rows(std::span<const Vector> rows) {
  if (rows.empty()) return Matrix();
  const Eigen::Index width = rows.front().size();
  Matrix out(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) {
      throw Error(ErrorCode::DimensionMismatch, "stack_rows: ragged rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return out;
}

double offdiag_frobenius(const Matrix& samples, bool centered) {
  if (samples.rows() == 0) throw Error(ErrorCode::EmptyInput, "offdiag_frobenius: no samples");
  Matrix x = samples;
  if (centered) x.rowwise() -= x.colwise().mean();
  Matrix c = (x.transpose() * x) / static_cast<double>(samples.rows());
  c.diagonal().setZero();
  return c.norm();
}

}  // namespace noiselearn
