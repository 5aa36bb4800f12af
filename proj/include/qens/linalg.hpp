#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qens {

using cdouble = std::complex<double>;

/// Small dense complex matrix, row-major. Used for gate matrices (dim <= 64),
/// not for statevectors.
class CMatrix {
  public:
    CMatrix() = default;
    CMatrix(int rows, int cols)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols) {}

    static CMatrix identity(int n) {
        CMatrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    cdouble& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    const cdouble& operator()(int r, int c) const {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }

    const std::vector<cdouble>& data() const { return data_; }

    CMatrix adjoint() const {
        CMatrix out(cols_, rows_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
        return out;
    }

    CMatrix operator*(const CMatrix& rhs) const {
        if (cols_ != rhs.rows_) throw std::invalid_argument("CMatrix: dimension mismatch");
        CMatrix out(rows_, rhs.cols_);
        for (int r = 0; r < rows_; ++r) {
            for (int k = 0; k < cols_; ++k) {
                const cdouble a = (*this)(r, k);
                if (a == cdouble{}) continue;
                for (int c = 0; c < rhs.cols_; ++c) out(r, c) += a * rhs(k, c);
            }
        }
        return out;
    }

    std::vector<cdouble> operator*(const std::vector<cdouble>& v) const {
        if (static_cast<int>(v.size()) != cols_)
            throw std::invalid_argument("CMatrix: vector dimension mismatch");
        std::vector<cdouble> out(static_cast<std::size_t>(rows_));
        for (int r = 0; r < rows_; ++r) {
            cdouble acc = 0.0;
            for (int c = 0; c < cols_; ++c) acc += (*this)(r, c) * v[static_cast<std::size_t>(c)];
            out[static_cast<std::size_t>(r)] = acc;
        }
        return out;
    }

    /// max_ij |(M†M - I)_ij|
    double unitarity_defect() const {
        if (rows_ != cols_) return 1.0;
        const CMatrix prod = adjoint() * (*this);
        double defect = 0.0;
        for (int r = 0; r < rows_; ++r) {
            for (int c = 0; c < cols_; ++c) {
                const cdouble expect = (r == c) ? cdouble{1.0} : cdouble{};
                defect = std::max(defect, std::abs(prod(r, c) - expect));
            }
        }
        return defect;
    }

    bool is_unitary(double tol = 1e-10) const { return unitarity_defect() < tol; }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<cdouble> data_;
};

}  // namespace qens
