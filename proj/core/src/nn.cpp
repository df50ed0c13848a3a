#include "dispred/nn.hpp"

#include <algorithm>
#include <vector>

namespace dispred::nn {

AffineLayer AffineLayer::init(Index in_dim, Index out_dim, Activation act, RngStream& rng) {
    if (in_dim < 1 || out_dim < 1)
        throw ParameterError("AffineLayer::init: dims must be >= 1");
    AffineLayer l;
    l.act = act;
    l.W = Matrix(out_dim, in_dim);
    double std = act == Activation::ReLU ? std::sqrt(2.0 / static_cast<double>(in_dim))
                                         : std::sqrt(1.0 / static_cast<double>(in_dim));
    for (Index i = 0; i < out_dim; ++i)
        for (Index j = 0; j < in_dim; ++j)
            l.W(i, j) = std * rng.normal();
    l.b = Vector::Zero(out_dim);
    return l;
}

Matrix forward(const AffineLayer& layer, const Matrix& x, ForwardCache* cache,
               bool train_mode, double dropout_p, RngStream* rng) {
    if (x.cols() != layer.in_dim())
        throw DimensionError("forward: input has " + std::to_string(x.cols()) +
                             " cols, layer expects " + std::to_string(layer.in_dim()));
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw ParameterError("forward: dropout_p must be in [0, 1)");

    Matrix pre = (x * layer.W.transpose()).rowwise() + layer.b.transpose();
    Matrix y = layer.act == Activation::ReLU ? pre.cwiseMax(0.0).eval() : pre;

    Matrix mask;
    if (train_mode && dropout_p > 0.0) {
        if (!rng)
            throw ParameterError("forward: dropout in train mode needs an RngStream");
        double keep_scale = 1.0 / (1.0 - dropout_p);
        mask = Matrix(y.rows(), y.cols());
        for (Index i = 0; i < y.rows(); ++i)
            for (Index j = 0; j < y.cols(); ++j)
                mask(i, j) = rng->bernoulli(dropout_p) ? 0.0 : keep_scale;
        y = y.cwiseProduct(mask);
    }

    if (cache) {
        cache->x = x;
        cache->pre = std::move(pre);
        cache->dropout_mask = std::move(mask);
    }
    return y;
}

LayerGrads backward(const AffineLayer& layer, const ForwardCache& cache, const Matrix& upstream) {
    if (upstream.rows() != cache.pre.rows() || upstream.cols() != cache.pre.cols())
        throw DimensionError("backward: upstream grad shape mismatch");

    Matrix d_act = cache.dropout_mask.size() > 0 ? upstream.cwiseProduct(cache.dropout_mask).eval()
                                                 : upstream;
    Matrix d_pre = layer.act == Activation::ReLU
                       ? d_act.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix()).eval()
                       : std::move(d_act);

    LayerGrads g;
    g.dW = d_pre.transpose() * cache.x;
    g.db = d_pre.colwise().sum().transpose();
    g.dx = d_pre * layer.W;
    return g;
}

double mse(const Matrix& x, const Matrix& xhat) {
    check_same_shape(x, xhat, "mse");
    return (x - xhat).squaredNorm() / static_cast<double>(x.size());
}

Matrix mse_grad(const Matrix& x, const Matrix& xhat) {
    check_same_shape(x, xhat, "mse_grad");
    return 2.0 / static_cast<double>(x.size()) * (xhat - x);
}

double bce_with_logits(const Vector& logit, const Vector& y) {
    if (logit.size() != y.size())
        throw DimensionError("bce_with_logits: length mismatch");
    if (logit.size() == 0)
        throw DimensionError("bce_with_logits: empty input");
    double acc = 0.0;
    for (Index i = 0; i < logit.size(); ++i) {
        double yi = y[i];
        if (yi != 0.0 && yi != 1.0)
            throw DataError("bce_with_logits: label not in {0,1} at index " + std::to_string(i));
        double l = logit[i];
        // max(l,0) - l*y + log(1 + exp(-|l|))
        acc += std::max(l, 0.0) - l * yi + std::log1p(std::exp(-std::abs(l)));
    }
    return acc / static_cast<double>(logit.size());
}

Vector bce_with_logits_grad(const Vector& logit, const Vector& y) {
    if (logit.size() != y.size())
        throw DimensionError("bce_with_logits_grad: length mismatch");
    Vector g(logit.size());
    double inv_n = 1.0 / static_cast<double>(logit.size());
    for (Index i = 0; i < logit.size(); ++i)
        g[i] = (sigmoid(logit[i]) - y[i]) * inv_n;
    return g;
}

double grad_check(const std::function<std::pair<double, Vector>(const Vector&)>& loss_fn,
                  const Vector& params, double h, Index sample_coords, RngStream* rng) {
    auto [value, analytic] = loss_fn(params);
    if (!std::isfinite(value))
        throw NumericError("grad_check: loss is not finite at the base point");
    if (analytic.size() != params.size())
        throw DimensionError("grad_check: gradient length mismatch");

    std::vector<Index> coords;
    Index dim = params.size();
    if (sample_coords <= 0 || sample_coords >= dim) {
        coords.resize(dim);
        for (Index i = 0; i < dim; ++i) coords[i] = i;
    } else {
        if (!rng)
            throw ParameterError("grad_check: coordinate sampling needs an RngStream");
        // sample without replacement from a partial Fisher-Yates
        std::vector<Index> all(dim);
        for (Index i = 0; i < dim; ++i) all[i] = i;
        for (Index i = 0; i < sample_coords; ++i) {
            Index j = i + static_cast<Index>(rng->bounded(static_cast<std::uint64_t>(dim - i)));
            std::swap(all[i], all[j]);
        }
        coords.assign(all.begin(), all.begin() + sample_coords);
    }

    double max_rel = 0.0;
    Vector p = params;
    for (Index c : coords) {
        double orig = p[c];
        p[c] = orig + h;
        double fp = loss_fn(p).first;
        p[c] = orig - h;
        double fm = loss_fn(p).first;
        p[c] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: loss is not finite near coordinate " + std::to_string(c));
        double numeric = (fp - fm) / (2.0 * h);
        double a = analytic[c];
        double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

} // namespace dispred::nn
