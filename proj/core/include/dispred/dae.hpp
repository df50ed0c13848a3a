#ifndef DISPRED_DAE_HPP
#define DISPRED_DAE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dispred/cohort.hpp"
#include "dispred/matrix.hpp"
#include "dispred/nn.hpp"

namespace dispred::dae {

// Disentangling autoencoder: encoder trunk in->400->200 splitting into the
// phenotype head (z_d) and ancestry head (z_a); decoder (z_d+z_a)->200->400->in
// with a terminal ReLU (dosages are non-negative).
struct DisentangledModel {
    Index input_dim = 0, z_d_dim = 0, z_a_dim = 0;
    nn::AffineLayer fc1, fc2, fc31, fc32, fc4, fc5, fc6;

    Index parameter_count() const;

    static DisentangledModel build(Index input_dim, Index z_d_dim, Index z_a_dim, RngStream& rng);

    // (z_a, z_d); deterministic.
    std::pair<Matrix, Matrix> encode(const Matrix& x) const;
    // decoder applied to the concatenated latent [z_d, z_a]
    Matrix decode(const Matrix& z) const;
    Matrix reconstruct(const Matrix& x) const;
};

struct TrainConfig {
    double tau = 0.05;
    double alpha_d = 1e-4;
    double alpha_a = 1e-4;
    int epochs = 500;     // N
    int ramp_start = 100; // N1: SC weights are 0 through this epoch
    int ramp_end = 250;   // N2: SC weights reach alpha_* here
    Index batch_size = 256;
    double lr = 5e-3;
    std::uint64_t seed = 0;
    int val_interval = 0; // fit a temporary OLS head and record val AUC every
                          // this many epochs; 0 disables the probe

    void validate() const;
};

// 0 through ramp_start, then linear up to alpha at ramp_end, then alpha.
double ramp_weight(int epoch, int ramp_start, int ramp_end, double alpha);

struct EpochRecord {
    double recon_loss = 0.0; // dataset-weighted mean squared error
    double sc_d_loss = 0.0;  // mean per-batch SC value (sum over anchors)
    double sc_a_loss = 0.0;
    double weight_d = 0.0; // effective ramped alpha_d
    double weight_a = 0.0;
    std::optional<double> val_auc;
};
using TrainHistory = std::vector<EpochRecord>;

std::string history_to_tsv(const TrainHistory& h);

// Minibatch training of the full objective: reconstruction MSE plus the two
// ramped supervised-contrastive terms, z_d against the phenotype labels and
// z_a against the ancestry labels, on the duplicated batch. Deterministic
// given cfg.seed. Phenotype must be binary and ancestry present on every row;
// val may be empty (0 rows) when no probe is wanted.
std::pair<DisentangledModel, TrainHistory> train_dae(const cohort::LabeledCohort& train,
                                                     const cohort::LabeledCohort& val,
                                                     const TrainConfig& cfg, Index z_d_dim,
                                                     Index z_a_dim);

// Versioned binary checkpoint (little-endian): header carries the dims, then
// every layer as named (rows, cols, row-major float64) tensors.
void save(const DisentangledModel& model, const std::string& path);
DisentangledModel load(const std::string& path);

} // namespace dispred::dae

#endif
