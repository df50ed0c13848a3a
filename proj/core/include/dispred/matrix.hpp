#ifndef DISPRED_MATRIX_HPP
#define DISPRED_MATRIX_HPP

#include <Eigen/Dense>
#include <string>

#include "dispred/error.hpp"

namespace dispred {

// Row-major double matrix: rows are samples, columns are features/units.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void check_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite())
        throw NumericError(what + ": non-finite entries");
}

inline void check_finite(const Vector& v, const std::string& what) {
    if (!v.allFinite())
        throw NumericError(what + ": non-finite entries");
}

inline void check_same_shape(const Matrix& a, const Matrix& b, const std::string& what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(what + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()) + ")");
}

} // namespace dispred

#endif
