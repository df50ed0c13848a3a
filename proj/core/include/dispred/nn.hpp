#ifndef DISPRED_NN_HPP
#define DISPRED_NN_HPP

#include <cmath>
#include <functional>
#include <utility>

#include "dispred/matrix.hpp"
#include "dispred/rng.hpp"

namespace dispred::nn {

enum class Activation { Identity, ReLU };

// Fully connected layer y = act(x W^T + b). W is out x in.
struct AffineLayer {
    Matrix W;
    Vector b;
    Activation act = Activation::Identity;

    Index in_dim() const { return W.cols(); }
    Index out_dim() const { return W.rows(); }
    Index parameter_count() const { return W.size() + b.size(); }

    // Scaled-normal init: std sqrt(2/in) for ReLU layers, sqrt(1/in) otherwise;
    // biases zero. Draw order is W row-major.
    static AffineLayer init(Index in_dim, Index out_dim, Activation act, RngStream& rng);
};

// Captured by forward(), consumed by backward().
struct ForwardCache {
    Matrix x;            // input batch
    Matrix pre;          // x W^T + b
    Matrix dropout_mask; // entries 0 or 1/(1-p); empty when dropout inactive
};

// y = act(x W^T + b), then inverted dropout on the activation when
// train_mode && dropout_p > 0 (eval mode ignores dropout entirely).
Matrix forward(const AffineLayer& layer, const Matrix& x, ForwardCache* cache = nullptr,
               bool train_mode = false, double dropout_p = 0.0, RngStream* rng = nullptr);

struct LayerGrads {
    Matrix dW;
    Vector db;
    Matrix dx;
};

// Exact gradients of forward() w.r.t. W, b and x given upstream = dL/dy.
LayerGrads backward(const AffineLayer& layer, const ForwardCache& cache, const Matrix& upstream);

// Mean over all entries of (x - xhat)^2.
double mse(const Matrix& x, const Matrix& xhat);
// d mse / d xhat.
Matrix mse_grad(const Matrix& x, const Matrix& xhat);

// Mean binary cross entropy on logits, log-sum-exp stable form.
double bce_with_logits(const Vector& logit, const Vector& y);
// d bce / d logit = (sigmoid(logit) - y) / n.
Vector bce_with_logits_grad(const Vector& logit, const Vector& y);

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

struct AdamConfig {
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-tensor Adam accumulators; t is incremented before bias correction.
template <class T>
struct AdamState {
    T m, v;
    long long t = 0;
    AdamConfig cfg;

    static AdamState like(const T& p, AdamConfig cfg = {}) {
        AdamState s;
        s.m = T::Zero(p.rows(), p.cols());
        s.v = T::Zero(p.rows(), p.cols());
        s.cfg = cfg;
        return s;
    }
};

template <class T>
void adam_step(T& param, const T& grad, AdamState<T>& state) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
        throw DimensionError("adam_step: grad shape mismatch");
    state.t += 1;
    const AdamConfig& c = state.cfg;
    state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
    state.v.array() = c.beta2 * state.v.array() + (1.0 - c.beta2) * grad.array().square();
    double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    param.array() -= c.lr * (state.m.array() / bc1) /
                     ((state.v.array() / bc2).sqrt() + c.eps);
}

// Adam slots for one affine layer.
struct LayerAdam {
    AdamState<Matrix> W;
    AdamState<Vector> b;

    static LayerAdam like(const AffineLayer& l, AdamConfig cfg = {}) {
        return {AdamState<Matrix>::like(l.W, cfg), AdamState<Vector>::like(l.b, cfg)};
    }
    void step(AffineLayer& l, const LayerGrads& g) {
        adam_step(l.W, g.dW, W);
        adam_step(l.b, g.db, b);
    }
};

// Central-difference check of an analytic gradient. loss_fn must be pure and
// deterministic (dropout disabled) and returns (value, gradient). Checks all
// coordinates when sample_coords <= 0 or >= dim, otherwise a random subset.
// Returns max_i |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
double grad_check(const std::function<std::pair<double, Vector>(const Vector&)>& loss_fn,
                  const Vector& params, double h = 1e-5, Index sample_coords = 0,
                  RngStream* rng = nullptr);

} // namespace dispred::nn

#endif
