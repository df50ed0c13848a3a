#ifndef DISPRED_EVALKIT_HPP
#define DISPRED_EVALKIT_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dispred/matrix.hpp"

namespace dispred::evalkit {

// Mann-Whitney AUC: fraction of (case, control) pairs where the case scores
// higher, ties credited 0.5. Throws a data error on single-class labels.
double auc(const Vector& scores, const Vector& labels);

struct StratumMetrics {
    std::string name;
    Index n = 0;
    Index n_case = 0;
    Index n_control = 0;
    std::optional<double> auc; // absent when a class is empty in the stratum
};

struct MetricsReport {
    std::string model;
    Index n = 0;
    Index n_case = 0;
    double global_auc = 0.0;
    std::vector<StratumMetrics> strata;
};

// Global AUC plus one entry per stratum (in first-appearance order); strata
// lacking a class carry no AUC rather than a fabricated number.
MetricsReport metrics_by_stratum(const std::string& model, const Vector& scores,
                                 const Vector& labels, const std::vector<std::string>& strata);

// {model, global: {n, n_case, auc}, strata: [{name, n, n_case, n_control, auc|null}]}
std::string metrics_to_json(const MetricsReport& report);

struct HetSweepResult {
    Index window = 0;
    Index stride = 0;
    std::vector<Index> starts; // floor((n-window)/stride)+1 windows from 0
    std::vector<std::string> model_names;
    std::vector<std::vector<std::optional<double>>> auc; // [model][window]
    std::string to_tsv() const;
};

// Sliding-window AUC over the heterogeneity-ordered sample sequence.
HetSweepResult het_sweep(const std::vector<std::pair<std::string, Vector>>& scores_by_model,
                         const Vector& labels, const std::vector<Index>& order,
                         Index window = 750, Index stride = 50);

// Mean-centered projection onto the top-2 principal directions, components
// ordered by explained variance; sign fixed so the largest-magnitude loading
// of each component is positive. Zero-variance input maps to all zeros.
Matrix pca2(const Matrix& z);

// embeddings.tsv: sample_id, z_a_*, z_d_*, pca_a_1, pca_a_2, pca_d_1, pca_d_2,
// ancestry_label.
std::string embeddings_tsv(const std::vector<std::string>& sample_ids, const Matrix& z_a,
                           const Matrix& z_d, const std::vector<std::string>& ancestry);

} // namespace dispred::evalkit

#endif
