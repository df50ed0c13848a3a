#ifndef DISPRED_CONTRASTIVE_HPP
#define DISPRED_CONTRASTIVE_HPP

#include <utility>
#include <vector>

#include "dispred/matrix.hpp"

namespace dispred::contrastive {

using dispred::Matrix;

// Duplicated ("multi-viewed") batch: rows N+i replicate row i and its label.
// Anchors are all 2N rows; the positives of anchor i are every other row with
// the same label, which always includes its own duplicate view(i).
struct MultiViewBatch {
    Matrix z;                // 2N x d
    std::vector<int> labels; // length 2N
    Index half_n = 0;        // N

    Index size() const { return z.rows(); }
    Index view_index(Index i) const { return (i + half_n) % (2 * half_n); }
};

MultiViewBatch duplicate_batch(const Matrix& z_half, const std::vector<int>& labels);

struct ScParams {
    double temperature = 0.05; // tau > 0
};

// Supervised contrastive loss over a multi-viewed batch plus its exact
// gradient w.r.t. the unnormalized rows of z. Rows are L2-normalized before
// dot products; the temperature divides the dot product inside the exponent;
// anchors without positives are skipped. Log-sum-exp is max-subtracted per
// anchor.
std::pair<double, Matrix> sc_loss(const MultiViewBatch& batch, const ScParams& params);

} // namespace dispred::contrastive

#endif
