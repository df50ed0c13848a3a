#include "dispred/ensemble.hpp"

#include <cmath>

#include "json.hpp"

#include "dispred/evalkit.hpp"
#include "dispred/nn.hpp"

namespace dispred::ensemble {

using json = nlohmann::ordered_json;

const char* search_mode_name(SearchMode m) {
    return m == SearchMode::Grid ? "grid" : "gradient";
}

Vector combine(const Vector& p_z, const Vector& p_x, const EnsembleWeights& w) {
    if (p_z.size() != p_x.size())
        throw DimensionError("combine: p_z and p_x length mismatch");
    return w.alpha * p_z + w.beta * p_x;
}

namespace {

void require_mixed(const Vector& y, const char* who) {
    bool has_case = false, has_control = false;
    for (Index i = 0; i < y.size(); ++i) {
        if (y[i] == 1.0) has_case = true;
        else if (y[i] == 0.0) has_control = true;
        else throw DataError(std::string(who) + ": labels must be in {0,1}");
    }
    if (!has_case || !has_control)
        throw DataError(std::string(who) + ": need at least one case and one control");
}

} // namespace

EnsembleFit fit_grid(const Vector& p_z, const Vector& p_x, const Vector& y_val) {
    if (p_z.size() != p_x.size() || p_z.size() != y_val.size())
        throw DimensionError("fit_grid: length mismatch");
    require_mixed(y_val, "fit_grid");

    EnsembleFit best;
    best.weights.mode = SearchMode::Grid;
    double best_auc = -1.0;
    for (int ai = 1; ai <= 15; ++ai) {
        for (int bi = 1; bi <= 15; ++bi) {
            EnsembleWeights w{static_cast<double>(ai) / 10.0, static_cast<double>(bi) / 10.0,
                              SearchMode::Grid};
            double a = evalkit::auc(combine(p_z, p_x, w), y_val);
            if (a > best_auc) {
                best_auc = a;
                best.weights = w;
            }
        }
    }
    best.val_auc = best_auc;
    return best;
}

double surrogate_loss(const Vector& p_z, const Vector& p_x, const Vector& y, double alpha,
                      double beta, double* d_alpha, double* d_beta) {
    Index n = y.size();
    double loss = 0.0, ga = 0.0, gb = 0.0;
    for (Index i = 0; i < n; ++i) {
        double s = alpha * p_z[i] + beta * p_x[i];
        loss += std::max(s, 0.0) - s * y[i] + std::log1p(std::exp(-std::abs(s)));
        double resid = nn::sigmoid(s) - y[i];
        ga += resid * p_z[i];
        gb += resid * p_x[i];
    }
    double inv_n = 1.0 / static_cast<double>(n);
    if (d_alpha) *d_alpha = ga * inv_n;
    if (d_beta) *d_beta = gb * inv_n;
    return loss * inv_n;
}

EnsembleFit fit_gradient(const Vector& p_z, const Vector& p_x, const Vector& y_val,
                         const GradientSearchConfig& cfg) {
    if (p_z.size() != p_x.size() || p_z.size() != y_val.size())
        throw DimensionError("fit_gradient: length mismatch");
    require_mixed(y_val, "fit_gradient");

    double alpha = cfg.init_alpha, beta = cfg.init_beta;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double ga, gb;
        double loss = surrogate_loss(p_z, p_x, y_val, alpha, beta, &ga, &gb);
        if (!std::isfinite(loss) || !std::isfinite(ga) || !std::isfinite(gb))
            throw NumericError("fit_gradient: non-finite surrogate at epoch " +
                               std::to_string(epoch));
        alpha -= cfg.lr * ga;
        beta -= cfg.lr * gb;
    }

    EnsembleFit fit;
    fit.weights = {alpha, beta, SearchMode::Gradient};
    fit.val_auc = evalkit::auc(combine(p_z, p_x, fit.weights), y_val);
    return fit;
}

std::string weights_to_json(const EnsembleWeights& w) {
    json j;
    j["alpha"] = w.alpha;
    j["beta"] = w.beta;
    j["mode"] = search_mode_name(w.mode);
    return j.dump(2) + "\n";
}

EnsembleWeights weights_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("ensemble weights: ") + e.what());
    }
    if (!j.is_object() || !j.contains("alpha") || !j.contains("beta") || !j.contains("mode"))
        throw DataError("ensemble weights: need alpha, beta and mode");
    EnsembleWeights w;
    try {
        w.alpha = j["alpha"].get<double>();
        w.beta = j["beta"].get<double>();
        std::string mode = j["mode"].get<std::string>();
        if (mode == "grid") w.mode = SearchMode::Grid;
        else if (mode == "gradient") w.mode = SearchMode::Gradient;
        else throw DataError("ensemble weights: unknown mode '" + mode + "'");
    } catch (const json::exception& e) {
        throw DataError(std::string("ensemble weights: ") + e.what());
    }
    if (!std::isfinite(w.alpha) || !std::isfinite(w.beta))
        throw DataError("ensemble weights: alpha and beta must be finite");
    return w;
}

} // namespace dispred::ensemble
