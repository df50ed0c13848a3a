#ifndef DISPRED_PREDICTORS_HPP
#define DISPRED_PREDICTORS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dispred/cohort.hpp"
#include "dispred/matrix.hpp"
#include "dispred/nn.hpp"

namespace dispred::predictors {

enum class FeatureRole { RawDosage, ZdLatent };
const char* feature_role_name(FeatureRole r);

struct LinearModel {
    Vector coef;
    double intercept = 0.0;
    FeatureRole role = FeatureRole::RawDosage;

    // Raw scores X w + b; no link function.
    Vector predict(const Matrix& x) const;
};

// OLS via normal equations; a singular Gram matrix gets ridge jitter
// 1e-8 * trace/dim instead of failing.
LinearModel fit_ols(const Matrix& x, const Vector& y, FeatureRole role);

// The stage-2 head regressing the phenotype on z_d.
inline LinearModel fit_linear_head(const Matrix& z_d, const Vector& y) {
    return fit_ols(z_d, y, FeatureRole::ZdLatent);
}

struct LassoParams {
    int n_alphas = 10;
    int max_iter = 5000; // coordinate-descent sweeps per lambda
    double tol = 1e-3;
    int folds = 5;
};

struct LassoFit {
    LinearModel model; // refit on all rows at the chosen lambda
    double lambda = 0.0;
    Vector lambda_path;  // strictly decreasing, lambda_max .. lambda_max*1e-3
    Vector cv_mse;       // pooled 5-fold CV MSE per path entry
    bool converged = true; // full-data path reached tol within max_iter

    double objective(const Matrix& x, const Vector& y) const; // (1/2n)RSS + lambda*l1
};

// Least-squares Lasso on mean-level centered features (intercept unpenalized),
// cyclic coordinate descent with warm starts along the path; the lambda with
// the best CV MSE wins, ties to the larger lambda.
LassoFit fit_lasso_cv(const Matrix& x, const Vector& y, const LassoParams& params,
                      std::uint64_t seed);

// Single-lambda coordinate descent; exposed for tests and reuse.
// Returns false if tol was not reached within max_iter sweeps.
bool lasso_coordinate_descent(const Matrix& x_centered, const Vector& y_centered,
                              double lambda, Vector& w, int max_iter, double tol);

struct PrsWeights {
    std::vector<std::string> variant_ids;
    Vector beta;
};

// TSV with header 'variant_id<TAB>beta'; extra columns ignored.
PrsWeights load_prs_weights(const std::string& path);

// Dosage-weighted sum of effect sizes over the weight table's variants;
// missing dosages are mean-imputed first. Unknown variants raise a data
// error listing every absent id.
Vector prs_score(const cohort::GenotypeMatrix& g, const PrsWeights& w);

// Supervised NN baseline: in->200->100->20(drop .5)->20(drop .5)->1,
// logistic loss, Adam.
struct NnConfig {
    int epochs = 200;
    double lr = 5e-3;
    Index batch_size = 64;
    double dropout_p = 0.5;
};

struct NnModel {
    nn::AffineLayer fc1, fc2, fc3, fc4, fc5;

    Vector predict(const Matrix& x) const; // raw logits, dropout off
};

NnModel fit_nn(const Matrix& x, const Vector& y, const NnConfig& cfg, std::uint64_t seed);

// Wasserstein adversarial baseline: backbone in->200->20->1 with logistic
// loss, plus one critic (20->10->1) per non-reference domain estimating the
// distance between reference and that domain in FC2 feature space.
struct AdvConfig {
    int epochs = 200;
    double lr = 5e-3;
    Index batch_size = 64;
    double lambda_w = 0.1;
    int critic_steps = 5;
    double gp_coef = 10.0; // gradient-penalty coefficient
};

struct AdvModel {
    nn::AffineLayer b1, b2, b3;
    struct Critic {
        int domain = 0; // the non-reference domain this critic separates
        nn::AffineLayer c1, c2;
    };
    std::vector<Critic> critics;
    int ref_domain = 0;

    Vector predict(const Matrix& x) const;  // raw logits
    Matrix features(const Matrix& x) const; // FC2 activations (n x 20)
};

AdvModel fit_adv(const Matrix& x, const Vector& y, const std::vector<int>& domains,
                 const AdvConfig& cfg, std::uint64_t seed);

// Mean over critics of mean(critic(h_ref)) - mean(critic(h_domain)) on the
// given data; the trained critics' estimate of the domain gap.
double adv_distance_estimate(const AdvModel& model, const Matrix& x,
                             const std::vector<int>& domains);

// mean_k (||d critic/d h|| - 1)^2 over interpolates of paired ref/domain
// feature rows (one epsilon drawn per pair). Returns the penalty value and,
// when requested, its gradient w.r.t. the critic weights with the relu mask
// held piecewise-constant.
double critic_gradient_penalty(const AdvModel::Critic& critic, const Matrix& h_ref,
                               const Matrix& h_dom, RngStream& rng, Matrix* d_w1 = nullptr,
                               Matrix* d_w2 = nullptr);

} // namespace dispred::predictors

#endif
