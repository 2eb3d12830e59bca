#include "lincomb/matrix.hpp"

#include <cmath>

#include "lincomb/error.hpp"

namespace lincomb {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) fail(ErrorCode::DimensionMismatch, "ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m;
    m.rows_ = rows.size();
    m.cols_ = rows.empty() ? 0 : rows.front().size();
    m.data_.reserve(m.rows_ * m.cols_);
    for (const auto& r : rows) {
        if (r.size() != m.cols_) fail(ErrorCode::DimensionMismatch, "ragged matrix rows");
        m.data_.insert(m.data_.end(), r.begin(), r.end());
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::vector<std::vector<double>> Matrix::to_rows() const {
    std::vector<std::vector<double>> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r].assign(row(r).begin(), row(r).end());
    return out;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

bool Matrix::all_finite() const noexcept {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double frobenius(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorCode::DimensionMismatch, "frobenius: shape mismatch");
    return dot(a.data(), b.data());
}

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "dimension_mismatch";
        case ErrorCode::ShapeMismatch: return "shape_mismatch";
        case ErrorCode::MissingWitness: return "missing_witness";
        case ErrorCode::NonSquare: return "non_square";
        case ErrorCode::NonFinite: return "non_finite";
        case ErrorCode::Infeasible: return "infeasible";
        case ErrorCode::Unbounded: return "unbounded";
        case ErrorCode::DegenerateInstance: return "degenerate_instance";
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::SolverFailure: return "solver_failure";
    }
    return "unknown";
}

}  // namespace lincomb
