#ifndef DISPRED_ENSEMBLE_HPP
#define DISPRED_ENSEMBLE_HPP

#include <string>

#include "dispred/matrix.hpp"

namespace dispred::ensemble {

enum class SearchMode { Grid, Gradient };
const char* search_mode_name(SearchMode m);

struct EnsembleWeights {
    double alpha = 1.0; // scales p_z, the latent-head predictions
    double beta = 1.0;  // scales p_x, the raw-data predictions
    SearchMode mode = SearchMode::Grid;
};

// p_e = alpha * p_z + beta * p_x, elementwise.
Vector combine(const Vector& p_z, const Vector& p_x, const EnsembleWeights& w);

struct EnsembleFit {
    EnsembleWeights weights;
    double val_auc = 0.0;
};

// Exhaustive scan of alpha, beta over {0.1, ..., 1.5} in steps of 0.1
// (15 x 15 cells); first pair in (alpha, beta) ascending order attaining the
// maximal validation AUC wins.
EnsembleFit fit_grid(const Vector& p_z, const Vector& p_x, const Vector& y_val);

struct GradientSearchConfig {
    double init_alpha = 1.1;
    double init_beta = 0.9;
    int epochs = 5000;
    double lr = 0.01;
};

// Full-batch gradient descent on the logistic surrogate
// mean bce(sigmoid(alpha*p_z + beta*p_x), y); AUC itself is not differentiable.
EnsembleFit fit_gradient(const Vector& p_z, const Vector& p_x, const Vector& y_val,
                         const GradientSearchConfig& cfg = {});

// value + gradient of the surrogate at (alpha, beta); exposed for tests.
double surrogate_loss(const Vector& p_z, const Vector& p_x, const Vector& y, double alpha,
                      double beta, double* d_alpha = nullptr, double* d_beta = nullptr);

// {"alpha": ..., "beta": ..., "mode": "grid"|"gradient"}
std::string weights_to_json(const EnsembleWeights& w);
EnsembleWeights weights_from_json(const std::string& text);

} // namespace dispred::ensemble

#endif
