#include "dispred/contrastive.hpp"

#include <algorithm>
#include <cmath>

namespace dispred::contrastive {

MultiViewBatch duplicate_batch(const Matrix& z_half, const std::vector<int>& labels) {
    Index n = z_half.rows();
    if (n < 2)
        throw ParameterError("duplicate_batch: need at least 2 rows, got " + std::to_string(n));
    if (static_cast<Index>(labels.size()) != n)
        throw DimensionError("duplicate_batch: labels length " + std::to_string(labels.size()) +
                             " does not match rows " + std::to_string(n));
    MultiViewBatch b;
    b.half_n = n;
    b.z = Matrix(2 * n, z_half.cols());
    b.z.topRows(n) = z_half;
    b.z.bottomRows(n) = z_half;
    b.labels.reserve(2 * n);
    b.labels.insert(b.labels.end(), labels.begin(), labels.end());
    b.labels.insert(b.labels.end(), labels.begin(), labels.end());
    return b;
}

std::pair<double, Matrix> sc_loss(const MultiViewBatch& batch, const ScParams& params) {
    const double tau = params.temperature;
    if (!(tau > 0.0))
        throw ParameterError("sc_loss: temperature must be positive");
    const Index n = batch.z.rows();
    if (n < 2 || static_cast<Index>(batch.labels.size()) != n)
        throw DimensionError("sc_loss: malformed batch");

    // Row-normalize; zero rows stay zero.
    Matrix u(n, batch.z.cols());
    Vector norms(n);
    for (Index i = 0; i < n; ++i) {
        double nm = batch.z.row(i).norm();
        norms[i] = nm;
        u.row(i) = nm > 0.0 ? (batch.z.row(i) / nm).eval() : batch.z.row(i);
    }

    Matrix logits = (u * u.transpose()) / tau; // logits(i,r) = u_i . u_r / tau

    double loss = 0.0;
    Index active_anchors = 0;
    // G(i,r) = dL/dlogits(i,r); rows of skipped anchors stay zero.
    Matrix G = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        Index n_pos = 0;
        for (Index s = 0; s < n; ++s)
            if (s != i && batch.labels[s] == batch.labels[i]) ++n_pos;
        if (n_pos == 0) continue;
        ++active_anchors;

        double mx = -std::numeric_limits<double>::infinity();
        for (Index r = 0; r < n; ++r)
            if (r != i) mx = std::max(mx, logits(i, r));
        double sum_exp = 0.0;
        for (Index r = 0; r < n; ++r)
            if (r != i) sum_exp += std::exp(logits(i, r) - mx);
        double lse = mx + std::log(sum_exp);

        double pos_mean = 0.0;
        for (Index s = 0; s < n; ++s)
            if (s != i && batch.labels[s] == batch.labels[i]) pos_mean += logits(i, s);
        pos_mean /= static_cast<double>(n_pos);
        loss += lse - pos_mean;

        double inv_pos = 1.0 / static_cast<double>(n_pos);
        for (Index r = 0; r < n; ++r) {
            if (r == i) continue;
            double p = std::exp(logits(i, r) - lse); // softmax over I \ {i}
            G(i, r) = p - (batch.labels[r] == batch.labels[i] ? inv_pos : 0.0);
        }
    }
    if (active_anchors == 0)
        throw DataError("sc_loss: degenerate batch, every anchor is positive-free");

    // dL/du = (G + G^T) u / tau, then back through the row normalization:
    // dL/dz_i = (g - (g.u_i) u_i) / ||z_i||.
    Matrix du = ((G + G.transpose()) * u) / tau;
    Matrix dz(n, batch.z.cols());
    for (Index i = 0; i < n; ++i) {
        if (norms[i] > 0.0) {
            double radial = du.row(i).dot(u.row(i));
            dz.row(i) = (du.row(i) - radial * u.row(i)) / norms[i];
        } else {
            dz.row(i).setZero();
        }
    }
    return {loss, dz};
}

} // namespace dispred::contrastive
