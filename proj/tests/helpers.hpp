#ifndef DISPRED_TESTS_HELPERS_HPP
#define DISPRED_TESTS_HELPERS_HPP

#include <vector>

#include "dispred/matrix.hpp"
#include "dispred/rng.hpp"

namespace testutil {

using dispred::Index;
using dispred::Matrix;
using dispred::Vector;

// Flatten tensors into one parameter vector for finite-difference checks.
class ParamPack {
public:
    void add(const Matrix& m) {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) data_.push_back(m(i, j));
    }
    void add(const Vector& v) {
        for (Index i = 0; i < v.size(); ++i) data_.push_back(v[i]);
    }
    Vector vec() const {
        Vector out(static_cast<Index>(data_.size()));
        for (std::size_t i = 0; i < data_.size(); ++i) out[static_cast<Index>(i)] = data_[i];
        return out;
    }

private:
    std::vector<double> data_;
};

// Read tensors back out of a flat parameter vector, in pack order.
class ParamReader {
public:
    explicit ParamReader(const Vector& v) : v_(v) {}
    Matrix take(Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = v_[pos_++];
        return m;
    }
    Vector take_vec(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = v_[pos_++];
        return v;
    }

private:
    const Vector& v_;
    Index pos_ = 0;
};

inline Matrix random_matrix(Index rows, Index cols, dispred::RngStream& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline Vector random_vector(Index n, dispred::RngStream& rng, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
}

// O(n^2) pairwise AUC oracle, ties credited 0.5.
inline double auc_bruteforce(const Vector& scores, const Vector& labels) {
    double wins = 0.0;
    Index pairs = 0;
    for (Index i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1.0) continue;
        for (Index j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0.0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

} // namespace testutil

#endif
