#include "dispred/predictors.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "dispred/fsio.hpp"
#include "dispred/rng.hpp"

namespace dispred::predictors {

const char* feature_role_name(FeatureRole r) {
    return r == FeatureRole::RawDosage ? "raw-dosage" : "z_d-latent";
}

Vector LinearModel::predict(const Matrix& x) const {
    if (x.cols() != coef.size())
        throw DimensionError("LinearModel::predict: " + std::to_string(x.cols()) +
                             " features, model has " + std::to_string(coef.size()));
    return (x * coef).array() + intercept;
}

LinearModel fit_ols(const Matrix& x, const Vector& y, FeatureRole role) {
    Index n = x.rows();
    Index p = x.cols();
    if (n != y.size())
        throw DimensionError("fit_ols: rows(x) != len(y)");
    if (n == 0)
        throw DataError("fit_ols: empty design");
    check_finite(x, "fit_ols: x");
    check_finite(y, "fit_ols: y");

    // normal equations on the intercept-augmented design
    Matrix a(p + 1, p + 1);
    a.topLeftCorner(p, p) = x.transpose() * x;
    Vector colsum = x.colwise().sum();
    a.block(0, p, p, 1) = colsum;
    a.block(p, 0, 1, p) = colsum.transpose();
    a(p, p) = static_cast<double>(n);
    Vector rhs(p + 1);
    rhs.head(p) = x.transpose() * y;
    rhs[p] = y.sum();

    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    Vector sol = ldlt.solve(rhs);
    double resid = (a.selfadjointView<Eigen::Lower>() * sol - rhs).norm();
    if (ldlt.info() != Eigen::Success || !sol.allFinite() ||
        resid > 1e-8 * std::max(1.0, rhs.norm())) {
        // singular/ill-conditioned Gram matrix: ridge jitter scaled to trace
        double jitter = 1e-8 * a.trace() / static_cast<double>(p + 1);
        Matrix aj = a;
        aj.diagonal().array() += jitter;
        sol = Eigen::LDLT<Eigen::MatrixXd>(aj).solve(rhs);
        if (!sol.allFinite())
            throw NumericError("fit_ols: solve failed even with ridge jitter");
    }

    LinearModel m;
    m.coef = sol.head(p);
    m.intercept = sol[p];
    m.role = role;
    return m;
}

namespace {

inline double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

} // namespace

bool lasso_coordinate_descent(const Matrix& x_centered, const Vector& y_centered, double lambda,
                              Vector& w, int max_iter, double tol) {
    Index n = x_centered.rows();
    Index p = x_centered.cols();
    // divide (not multiply by 1/n) so rho at the path top lands exactly on
    // lambda_max and soft-thresholds to exact zero
    double dn = static_cast<double>(n);
    Vector col_sq(p);
    for (Index j = 0; j < p; ++j) col_sq[j] = x_centered.col(j).squaredNorm() / dn;

    Vector r = y_centered - x_centered * w;
    for (int sweep = 0; sweep < max_iter; ++sweep) {
        double max_delta = 0.0;
        for (Index j = 0; j < p; ++j) {
            double old = w[j];
            if (col_sq[j] <= 0.0) {
                if (old != 0.0) {
                    r += x_centered.col(j) * old;
                    w[j] = 0.0;
                    max_delta = std::max(max_delta, std::abs(old));
                }
                continue;
            }
            double rho = x_centered.col(j).dot(r) / dn + col_sq[j] * old;
            double next = soft_threshold(rho, lambda) / col_sq[j];
            double delta = next - old;
            if (delta != 0.0) {
                r -= x_centered.col(j) * delta;
                w[j] = next;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        if (max_delta <= tol * std::max(1.0, w.lpNorm<Eigen::Infinity>()))
            return true;
    }
    return false;
}

double LassoFit::objective(const Matrix& x, const Vector& y) const {
    Vector pred = model.predict(x);
    double rss = (y - pred).squaredNorm();
    return rss / (2.0 * static_cast<double>(x.rows())) + lambda * model.coef.lpNorm<1>();
}

LassoFit fit_lasso_cv(const Matrix& x, const Vector& y, const LassoParams& params,
                      std::uint64_t seed) {
    Index n = x.rows();
    Index p = x.cols();
    if (n != y.size())
        throw DimensionError("fit_lasso_cv: rows(x) != len(y)");
    if (!x.allFinite())
        throw DataError("fit_lasso_cv: non-finite design");
    check_finite(y, "fit_lasso_cv: y");
    if (params.folds < 2 || n < params.folds)
        throw ParameterError("fit_lasso_cv: need rows >= folds >= 2");
    if (params.n_alphas < 1)
        throw ParameterError("fit_lasso_cv: n_alphas must be >= 1");

    Vector x_mean = x.colwise().mean();
    double y_mean = y.mean();
    Matrix xc = x.rowwise() - x_mean.transpose();
    Vector yc = y.array() - y_mean;

    double lambda_max = 0.0;
    for (Index j = 0; j < p; ++j)
        lambda_max = std::max(lambda_max, std::abs(xc.col(j).dot(yc)) / static_cast<double>(n));
    if (lambda_max <= 0.0) lambda_max = 1e-12;

    LassoFit fit;
    fit.lambda_path = Vector(params.n_alphas);
    for (int i = 0; i < params.n_alphas; ++i) {
        double frac = params.n_alphas > 1
                          ? static_cast<double>(i) / static_cast<double>(params.n_alphas - 1)
                          : 0.0;
        fit.lambda_path[i] = lambda_max * std::pow(1e-3, frac);
    }

    // fold ids from a seeded permutation
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    RngStream rng(seed);
    rng.shuffle(perm);
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    for (std::size_t pos = 0; pos < perm.size(); ++pos)
        fold_of[static_cast<std::size_t>(perm[pos])] = static_cast<int>(pos % params.folds);

    Vector cv_sse = Vector::Zero(params.n_alphas);
    for (int f = 0; f < params.folds; ++f) {
        std::vector<Index> tr, va;
        for (Index i = 0; i < n; ++i)
            (fold_of[static_cast<std::size_t>(i)] == f ? va : tr).push_back(i);

        Matrix xt(static_cast<Index>(tr.size()), p);
        Vector yt(static_cast<Index>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
            xt.row(static_cast<Index>(i)) = x.row(tr[i]);
            yt[static_cast<Index>(i)] = y[tr[i]];
        }
        Vector xt_mean = xt.colwise().mean();
        double yt_mean = yt.mean();
        Matrix xtc = xt.rowwise() - xt_mean.transpose();
        Vector ytc = yt.array() - yt_mean;

        Vector w = Vector::Zero(p);
        for (int li = 0; li < params.n_alphas; ++li) {
            lasso_coordinate_descent(xtc, ytc, fit.lambda_path[li], w, params.max_iter, params.tol);
            for (Index vi : va) {
                double pred = (x.row(vi) - xt_mean.transpose()) * w + yt_mean;
                double err = y[vi] - pred;
                cv_sse[li] += err * err;
            }
        }
    }
    fit.cv_mse = cv_sse / static_cast<double>(n);

    int best = 0;
    for (int li = 1; li < params.n_alphas; ++li)
        if (fit.cv_mse[li] < fit.cv_mse[best]) best = li;
    fit.lambda = fit.lambda_path[best];

    // final refit on all rows, warm-started along the path down to the winner
    Vector w = Vector::Zero(p);
    fit.converged = true;
    for (int li = 0; li <= best; ++li)
        fit.converged =
            lasso_coordinate_descent(xc, yc, fit.lambda_path[li], w, params.max_iter, params.tol) &&
            fit.converged;

    fit.model.coef = w;
    fit.model.intercept = y_mean - x_mean.dot(w);
    fit.model.role = FeatureRole::RawDosage;
    return fit;
}

PrsWeights load_prs_weights(const std::string& path) {
    std::string buf = read_file(path);
    std::istringstream in(buf);
    std::string line;
    if (!std::getline(in, line))
        throw DataError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::size_t start = 0;
        for (;;) {
            std::size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                header.push_back(line.substr(start));
                break;
            }
            header.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
    }
    int id_col = -1, beta_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "variant_id") id_col = static_cast<int>(c);
        if (header[c] == "beta") beta_col = static_cast<int>(c);
    }
    if (id_col < 0 || beta_col < 0)
        throw DataError(path + ":1: header needs 'variant_id' and 'beta' columns");

    PrsWeights w;
    std::vector<double> betas;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            std::size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        if (cells.size() != header.size())
            throw DataError(path + ":" + std::to_string(line_no) + ": ragged row");
        const std::string& bs = cells[static_cast<std::size_t>(beta_col)];
        double b = 0.0;
        auto [ptr, ec] = std::from_chars(bs.data(), bs.data() + bs.size(), b);
        if (ec != std::errc() || ptr != bs.data() + bs.size() || !std::isfinite(b))
            throw DataError(path + ":" + std::to_string(line_no) + ": bad beta '" + bs + "'");
        w.variant_ids.push_back(cells[static_cast<std::size_t>(id_col)]);
        betas.push_back(b);
    }
    std::unordered_map<std::string, int> seen;
    for (const auto& id : w.variant_ids)
        if (++seen[id] > 1)
            throw DataError(path + ": duplicate variant '" + id + "'");
    w.beta = Eigen::Map<Vector>(betas.data(), static_cast<Index>(betas.size()));
    return w;
}

Vector prs_score(const cohort::GenotypeMatrix& g, const PrsWeights& w) {
    std::unordered_map<std::string, Index> col_of;
    col_of.reserve(g.variant_ids.size());
    for (Index j = 0; j < g.n_variants(); ++j)
        col_of[g.variant_ids[static_cast<std::size_t>(j)]] = j;

    std::vector<Index> cols;
    std::string missing;
    for (const auto& id : w.variant_ids) {
        auto it = col_of.find(id);
        if (it == col_of.end()) {
            if (!missing.empty()) missing += ", ";
            missing += id;
        } else {
            cols.push_back(it->second);
        }
    }
    if (!missing.empty())
        throw DataError("prs_score: weight variants absent from genotypes: " + missing);

    Index n = g.n_samples();
    Vector score = Vector::Zero(n);
    for (std::size_t k = 0; k < cols.size(); ++k) {
        Index j = cols[k];
        Index n_obs = 0;
        double sum = 0.0;
        for (Index i = 0; i < n; ++i) {
            double v = g.dosages(i, j);
            if (!cohort::is_missing(v)) {
                ++n_obs;
                sum += v;
            }
        }
        if (n_obs == 0)
            throw DataError("prs_score: variant " + w.variant_ids[k] + " has no observed values");
        double mean = sum / static_cast<double>(n_obs);
        double beta = w.beta[static_cast<Index>(k)];
        for (Index i = 0; i < n; ++i) {
            double v = g.dosages(i, j);
            score[i] += beta * (cohort::is_missing(v) ? mean : v);
        }
    }
    return score;
}

namespace {

void require_binary(const Vector& y, const char* who) {
    for (Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0)
            throw DataError(std::string(who) + ": labels must be in {0,1}");
}

} // namespace

Vector NnModel::predict(const Matrix& x) const {
    Matrix h = nn::forward(fc1, x);
    h = nn::forward(fc2, h);
    h = nn::forward(fc3, h);
    h = nn::forward(fc4, h);
    h = nn::forward(fc5, h);
    return h.col(0);
}

NnModel fit_nn(const Matrix& x, const Vector& y, const NnConfig& cfg, std::uint64_t seed) {
    Index n = x.rows();
    if (n != y.size())
        throw DimensionError("fit_nn: rows(x) != len(y)");
    require_binary(y, "fit_nn");
    if (cfg.batch_size < 1)
        throw ParameterError("fit_nn: batch_size must be >= 1");

    RngStream root(seed);
    RngStream init_rng = root.substream(0);
    RngStream train_rng = root.substream(1);

    NnModel m;
    m.fc1 = nn::AffineLayer::init(x.cols(), 200, nn::Activation::ReLU, init_rng);
    m.fc2 = nn::AffineLayer::init(200, 100, nn::Activation::ReLU, init_rng);
    m.fc3 = nn::AffineLayer::init(100, 20, nn::Activation::ReLU, init_rng);
    m.fc4 = nn::AffineLayer::init(20, 20, nn::Activation::ReLU, init_rng);
    m.fc5 = nn::AffineLayer::init(20, 1, nn::Activation::Identity, init_rng);

    nn::AdamConfig adam{cfg.lr};
    nn::LayerAdam a1 = nn::LayerAdam::like(m.fc1, adam), a2 = nn::LayerAdam::like(m.fc2, adam),
                  a3 = nn::LayerAdam::like(m.fc3, adam), a4 = nn::LayerAdam::like(m.fc4, adam),
                  a5 = nn::LayerAdam::like(m.fc5, adam);

    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        train_rng.shuffle(idx);
        for (Index start = 0; start < n; start += cfg.batch_size) {
            Index bsz = std::min(cfg.batch_size, n - start);
            Matrix xb(bsz, x.cols());
            Vector yb(bsz);
            for (Index i = 0; i < bsz; ++i) {
                xb.row(i) = x.row(idx[static_cast<std::size_t>(start + i)]);
                yb[i] = y[idx[static_cast<std::size_t>(start + i)]];
            }

            nn::ForwardCache c1, c2, c3, c4, c5;
            Matrix h = nn::forward(m.fc1, xb, &c1);
            h = nn::forward(m.fc2, h, &c2);
            h = nn::forward(m.fc3, h, &c3, true, cfg.dropout_p, &train_rng);
            h = nn::forward(m.fc4, h, &c4, true, cfg.dropout_p, &train_rng);
            h = nn::forward(m.fc5, h, &c5);

            double loss = nn::bce_with_logits(h.col(0), yb);
            if (!std::isfinite(loss))
                throw NumericError("fit_nn: non-finite loss at epoch " + std::to_string(epoch));

            Matrix dlogit = nn::bce_with_logits_grad(h.col(0), yb);
            nn::LayerGrads g5 = nn::backward(m.fc5, c5, dlogit);
            nn::LayerGrads g4 = nn::backward(m.fc4, c4, g5.dx);
            nn::LayerGrads g3 = nn::backward(m.fc3, c3, g4.dx);
            nn::LayerGrads g2 = nn::backward(m.fc2, c2, g3.dx);
            nn::LayerGrads g1 = nn::backward(m.fc1, c1, g2.dx);

            a1.step(m.fc1, g1);
            a2.step(m.fc2, g2);
            a3.step(m.fc3, g3);
            a4.step(m.fc4, g4);
            a5.step(m.fc5, g5);
        }
    }
    return m;
}

Vector AdvModel::predict(const Matrix& x) const {
    Matrix h = nn::forward(b1, x);
    h = nn::forward(b2, h);
    h = nn::forward(b3, h);
    return h.col(0);
}

Matrix AdvModel::features(const Matrix& x) const {
    Matrix h = nn::forward(b1, x);
    return nn::forward(b2, h);
}

namespace {

// d critic / d h for one feature row: W1^T (w2 . relu-mask), mask from this row.
Vector critic_input_grad(const AdvModel::Critic& cr, const Vector& pre1) {
    Vector q(cr.c1.out_dim());
    for (Index u = 0; u < q.size(); ++u)
        q[u] = pre1[u] > 0.0 ? cr.c2.W(0, u) : 0.0;
    return cr.c1.W.transpose() * q;
}

} // namespace

double critic_gradient_penalty(const AdvModel::Critic& critic, const Matrix& h_ref,
                               const Matrix& h_dom, RngStream& rng, Matrix* d_w1,
                               Matrix* d_w2) {
    if (h_ref.cols() != critic.c1.in_dim() || h_dom.cols() != critic.c1.in_dim())
        throw DimensionError("critic_gradient_penalty: feature width mismatch");
    Index n_pairs = std::min(h_ref.rows(), h_dom.rows());
    if (n_pairs == 0)
        throw ParameterError("critic_gradient_penalty: need at least one row per side");
    if (d_w1) *d_w1 = Matrix::Zero(critic.c1.W.rows(), critic.c1.W.cols());
    if (d_w2) *d_w2 = Matrix::Zero(critic.c2.W.rows(), critic.c2.W.cols());

    double penalty = 0.0;
    double inv_pairs = 1.0 / static_cast<double>(n_pairs);
    for (Index k = 0; k < n_pairs; ++k) {
        double eps = rng.uniform();
        Vector hi = eps * h_ref.row(k).transpose() + (1.0 - eps) * h_dom.row(k).transpose();
        Vector pre1 = critic.c1.W * hi + critic.c1.b;
        Vector q(critic.c1.out_dim());
        for (Index u = 0; u < q.size(); ++u)
            q[u] = pre1[u] > 0.0 ? critic.c2.W(0, u) : 0.0;
        Vector g = critic.c1.W.transpose() * q; // d critic / d h at the interpolate
        double norm = g.norm();
        penalty += (norm - 1.0) * (norm - 1.0) * inv_pairs;
        if (norm <= 0.0) continue; // square bottoms out, no usable direction
        Vector ghat = g / norm;
        double scale = 2.0 * (norm - 1.0) * inv_pairs;
        if (d_w1) *d_w1 += scale * (q * ghat.transpose());
        if (d_w2) {
            Vector w1g = critic.c1.W * ghat;
            for (Index u = 0; u < q.size(); ++u)
                if (pre1[u] > 0.0) (*d_w2)(0, u) += scale * w1g[u];
        }
    }
    return penalty;
}

double adv_distance_estimate(const AdvModel& model, const Matrix& x,
                             const std::vector<int>& domains) {
    if (static_cast<Index>(domains.size()) != x.rows())
        throw DimensionError("adv_distance_estimate: domains length mismatch");
    if (model.critics.empty()) return 0.0;
    Matrix h = model.features(x);
    double total = 0.0;
    int used = 0;
    for (const auto& cr : model.critics) {
        double sum_ref = 0.0, sum_dom = 0.0;
        Index n_ref = 0, n_dom = 0;
        for (Index i = 0; i < h.rows(); ++i) {
            if (domains[static_cast<std::size_t>(i)] != model.ref_domain &&
                domains[static_cast<std::size_t>(i)] != cr.domain)
                continue;
            Matrix row = h.row(i);
            double v = nn::forward(cr.c2, nn::forward(cr.c1, row))(0, 0);
            if (domains[static_cast<std::size_t>(i)] == model.ref_domain) {
                sum_ref += v;
                ++n_ref;
            } else {
                sum_dom += v;
                ++n_dom;
            }
        }
        if (n_ref == 0 || n_dom == 0) continue;
        total += sum_ref / static_cast<double>(n_ref) - sum_dom / static_cast<double>(n_dom);
        ++used;
    }
    return used > 0 ? total / static_cast<double>(used) : 0.0;
}

AdvModel fit_adv(const Matrix& x, const Vector& y, const std::vector<int>& domains,
                 const AdvConfig& cfg, std::uint64_t seed) {
    Index n = x.rows();
    if (n != y.size() || static_cast<Index>(domains.size()) != n)
        throw DimensionError("fit_adv: rows(x), len(y) and len(domains) must match");
    require_binary(y, "fit_adv");

    // reference = largest domain, ties to the smaller label
    std::map<int, Index> counts;
    for (int d : domains) ++counts[d];
    if (counts.size() < 2)
        throw DataError("fit_adv: need at least 2 ancestry domains, got " +
                        std::to_string(counts.size()));
    int ref = counts.begin()->first;
    for (const auto& [d, c] : counts)
        if (c > counts[ref]) ref = d;

    RngStream root(seed);
    RngStream init_rng = root.substream(0);
    RngStream critic_init_rng = root.substream(1);
    RngStream train_rng = root.substream(2);

    AdvModel m;
    m.ref_domain = ref;
    m.b1 = nn::AffineLayer::init(x.cols(), 200, nn::Activation::ReLU, init_rng);
    m.b2 = nn::AffineLayer::init(200, 20, nn::Activation::ReLU, init_rng);
    m.b3 = nn::AffineLayer::init(20, 1, nn::Activation::Identity, init_rng);

    const bool adversarial = cfg.lambda_w != 0.0;
    if (adversarial) {
        for (const auto& [d, c] : counts) {
            if (d == ref) continue;
            AdvModel::Critic cr;
            cr.domain = d;
            cr.c1 = nn::AffineLayer::init(20, 10, nn::Activation::ReLU, critic_init_rng);
            cr.c2 = nn::AffineLayer::init(10, 1, nn::Activation::Identity, critic_init_rng);
            m.critics.push_back(std::move(cr));
        }
    }

    nn::AdamConfig adam{cfg.lr};
    nn::LayerAdam ab1 = nn::LayerAdam::like(m.b1, adam), ab2 = nn::LayerAdam::like(m.b2, adam),
                  ab3 = nn::LayerAdam::like(m.b3, adam);
    std::vector<std::pair<nn::LayerAdam, nn::LayerAdam>> acr;
    for (const auto& cr : m.critics)
        acr.emplace_back(nn::LayerAdam::like(cr.c1, adam), nn::LayerAdam::like(cr.c2, adam));

    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        train_rng.shuffle(idx);
        for (Index start = 0; start < n; start += cfg.batch_size) {
            Index bsz = std::min(cfg.batch_size, n - start);
            Matrix xb(bsz, x.cols());
            Vector yb(bsz);
            std::vector<int> db(static_cast<std::size_t>(bsz));
            for (Index i = 0; i < bsz; ++i) {
                Index r = idx[static_cast<std::size_t>(start + i)];
                xb.row(i) = x.row(r);
                yb[i] = y[r];
                db[static_cast<std::size_t>(i)] = domains[static_cast<std::size_t>(r)];
            }

            nn::ForwardCache c1, c2;
            Matrix h1 = nn::forward(m.b1, xb, &c1);
            Matrix h = nn::forward(m.b2, h1, &c2); // bsz x 20, frozen during critic steps

            if (adversarial) {
                for (int step = 0; step < cfg.critic_steps; ++step) {
                    for (std::size_t ci = 0; ci < m.critics.size(); ++ci) {
                        auto& cr = m.critics[ci];
                        std::vector<Index> rows_ref, rows_dom;
                        for (Index i = 0; i < bsz; ++i) {
                            if (db[static_cast<std::size_t>(i)] == ref) rows_ref.push_back(i);
                            else if (db[static_cast<std::size_t>(i)] == cr.domain) rows_dom.push_back(i);
                        }
                        if (rows_ref.empty() || rows_dom.empty()) continue;

                        // critic ascends mean(c(h_ref)) - mean(c(h_dom)) - gp_coef * GP;
                        // Adam minimizes the negation.
                        Matrix hr(static_cast<Index>(rows_ref.size()), h.cols());
                        for (std::size_t i = 0; i < rows_ref.size(); ++i)
                            hr.row(static_cast<Index>(i)) = h.row(rows_ref[i]);
                        Matrix hd(static_cast<Index>(rows_dom.size()), h.cols());
                        for (std::size_t i = 0; i < rows_dom.size(); ++i)
                            hd.row(static_cast<Index>(i)) = h.row(rows_dom[i]);

                        nn::ForwardCache rc1, rc2, dc1, dc2;
                        Matrix ro = nn::forward(cr.c2, nn::forward(cr.c1, hr, &rc1), &rc2);
                        Matrix dro = nn::forward(cr.c2, nn::forward(cr.c1, hd, &dc1), &dc2);
                        (void)ro;
                        (void)dro;

                        Matrix up_ref = Matrix::Constant(hr.rows(), 1,
                                                         -1.0 / static_cast<double>(hr.rows()));
                        Matrix up_dom = Matrix::Constant(hd.rows(), 1,
                                                         1.0 / static_cast<double>(hd.rows()));
                        nn::LayerGrads gr2 = nn::backward(cr.c2, rc2, up_ref);
                        nn::LayerGrads gr1 = nn::backward(cr.c1, rc1, gr2.dx);
                        nn::LayerGrads gd2 = nn::backward(cr.c2, dc2, up_dom);
                        nn::LayerGrads gd1 = nn::backward(cr.c1, dc1, gd2.dx);

                        Matrix dW1 = gr1.dW + gd1.dW;
                        Vector db1 = gr1.db + gd1.db;
                        Matrix dW2 = gr2.dW + gd2.dW;
                        Vector db2 = gr2.db + gd2.db;

                        Matrix gpW1, gpW2;
                        critic_gradient_penalty(cr, hr, hd, train_rng, &gpW1, &gpW2);
                        dW1 += cfg.gp_coef * gpW1;
                        dW2 += cfg.gp_coef * gpW2;

                        acr[ci].first.step(cr.c1, {dW1, db1, Matrix()});
                        acr[ci].second.step(cr.c2, {dW2, db2, Matrix()});
                    }
                }
            }

            // backbone step: bce + lambda_w * averaged critic distance, critics frozen
            nn::ForwardCache c3;
            Matrix logits = nn::forward(m.b3, h, &c3);
            double loss = nn::bce_with_logits(logits.col(0), yb);
            if (!std::isfinite(loss))
                throw NumericError("fit_adv: non-finite loss at epoch " + std::to_string(epoch));

            Matrix dlogit = nn::bce_with_logits_grad(logits.col(0), yb);
            nn::LayerGrads g3 = nn::backward(m.b3, c3, dlogit);
            Matrix dh = g3.dx;

            if (adversarial) {
                std::vector<std::size_t> active;
                for (std::size_t ci = 0; ci < m.critics.size(); ++ci) {
                    bool has_ref = false, has_dom = false;
                    for (Index i = 0; i < bsz; ++i) {
                        if (db[static_cast<std::size_t>(i)] == ref) has_ref = true;
                        else if (db[static_cast<std::size_t>(i)] == m.critics[ci].domain) has_dom = true;
                    }
                    if (has_ref && has_dom) active.push_back(ci);
                }
                if (!active.empty()) {
                    double per_critic = cfg.lambda_w / static_cast<double>(active.size());
                    for (std::size_t ci : active) {
                        const auto& cr = m.critics[ci];
                        Index n_ref = 0, n_dom = 0;
                        for (Index i = 0; i < bsz; ++i) {
                            if (db[static_cast<std::size_t>(i)] == ref) ++n_ref;
                            else if (db[static_cast<std::size_t>(i)] == cr.domain) ++n_dom;
                        }
                        for (Index i = 0; i < bsz; ++i) {
                            int d = db[static_cast<std::size_t>(i)];
                            if (d != ref && d != cr.domain) continue;
                            Vector pre1 = cr.c1.W * h.row(i).transpose() + cr.c1.b;
                            Vector gi = critic_input_grad(cr, pre1);
                            double wgt = d == ref ? per_critic / static_cast<double>(n_ref)
                                                  : -per_critic / static_cast<double>(n_dom);
                            dh.row(i) += wgt * gi.transpose();
                        }
                    }
                }
            }

            nn::LayerGrads g2 = nn::backward(m.b2, c2, dh);
            nn::LayerGrads g1 = nn::backward(m.b1, c1, g2.dx);
            ab1.step(m.b1, g1);
            ab2.step(m.b2, g2);
            ab3.step(m.b3, g3);
        }
    }
    return m;
}

} // namespace dispred::predictors
