#include "doctest.h"

#include <filesystem>
#include <numeric>
#include <unistd.h>

#include "dispred/evalkit.hpp"
#include "dispred/fsio.hpp"
#include "dispred/predictors.hpp"
#include "helpers.hpp"

using namespace dispred;
using namespace dispred::predictors;

namespace {

std::string temp_file(const std::string& name) {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("dispred_pred_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

// n x p matrix with orthonormal columns scaled so X^T X / n = I
Matrix orthonormal_design(Index n, Index p, RngStream& rng) {
    Eigen::MatrixXd raw = testutil::random_matrix(n, p, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
    return std::sqrt(static_cast<double>(n)) * q;
}

double soft(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

} // namespace

TEST_CASE("fit_ols: recovers an exactly linear target") {
    RngStream rng(1);
    Matrix z = testutil::random_matrix(50, 6, rng);
    Vector w_true = testutil::random_vector(6, rng);
    Vector y = z * w_true;
    y.array() += 0.7;

    LinearModel m = fit_linear_head(z, y);
    CHECK(m.role == FeatureRole::ZdLatent);
    CHECK((m.predict(z) - y).norm() <= 1e-8);
    CHECK((m.coef - w_true).norm() < 1e-8);
    CHECK(m.intercept == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("fit_ols: constant target gives zero coefficients") {
    RngStream rng(2);
    Matrix z = testutil::random_matrix(30, 4, rng);
    Vector y = Vector::Constant(30, 0.4);
    LinearModel m = fit_linear_head(z, y);
    CHECK(m.coef.norm() < 1e-10);
    CHECK(m.intercept == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("fit_ols: matches an independent normal-equations oracle") {
    RngStream rng(3);
    Matrix x = testutil::random_matrix(80, 5, rng);
    Vector y = testutil::random_vector(80, rng);
    LinearModel m = fit_ols(x, y, FeatureRole::RawDosage);

    // oracle: QR on the augmented design
    Eigen::MatrixXd d(80, 6);
    d.leftCols(5) = x;
    d.col(5).setOnes();
    Eigen::VectorXd sol = d.colPivHouseholderQr().solve(y);
    CHECK((m.coef - sol.head(5)).norm() < 1e-8);
    CHECK(m.intercept == doctest::Approx(sol[5]).epsilon(1e-8));
}

TEST_CASE("fit_ols: residual orthogonal to the design after centering") {
    RngStream rng(4);
    Matrix z = testutil::random_matrix(60, 5, rng);
    Vector y = testutil::random_vector(60, rng);
    LinearModel m = fit_linear_head(z, y);
    Vector r = y - m.predict(z);
    Matrix zc = z.rowwise() - z.colwise().mean();
    CHECK((zc.transpose() * r).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("fit_ols: collinear design handled with jitter, never a crash") {
    RngStream rng(5);
    Matrix x(20, 3);
    x.col(0) = testutil::random_vector(20, rng);
    x.col(1) = x.col(0); // exact duplicate
    x.col(2) = testutil::random_vector(20, rng);
    Vector y = testutil::random_vector(20, rng);
    LinearModel m = fit_ols(x, y, FeatureRole::RawDosage);
    CHECK(m.coef.allFinite());
    CHECK(std::isfinite(m.intercept));
}

TEST_CASE("lasso: all coefficients exactly zero at lambda_max") {
    RngStream rng(7);
    Matrix x = testutil::random_matrix(40, 8, rng);
    Vector y = testutil::random_vector(40, rng);
    Matrix xc = x.rowwise() - x.colwise().mean();
    Vector yc = y.array() - y.mean();
    double lambda_max = 0.0;
    for (Index j = 0; j < 8; ++j)
        lambda_max = std::max(lambda_max, std::abs(xc.col(j).dot(yc)) / 40.0);

    Vector w = Vector::Zero(8);
    bool converged = lasso_coordinate_descent(xc, yc, lambda_max, w, 5000, 1e-3);
    CHECK(converged);
    for (Index j = 0; j < 8; ++j) CHECK(w[j] == 0.0);
}

TEST_CASE("lasso: orthonormal design matches the soft-threshold closed form") {
    RngStream rng(8);
    const Index n = 64, p = 16;
    Matrix x = orthonormal_design(n, p, rng);
    Vector y = testutil::random_vector(n, rng, 2.0);

    // already-centered inputs keep X^T X / n = I exact
    Vector ols = x.transpose() * y / static_cast<double>(n);
    for (double lambda : {0.01, 0.1, 0.5, 1.0}) {
        Vector w = Vector::Zero(p);
        CHECK(lasso_coordinate_descent(x, y, lambda, w, 5000, 1e-3));
        for (Index j = 0; j < p; ++j)
            CHECK(w[j] == doctest::Approx(soft(ols[j], lambda)).epsilon(1e-6));
    }

    // sparsity grows monotonically as lambda decreases
    int prev_nonzero = -1;
    for (double lambda : {1.0, 0.5, 0.25, 0.1, 0.01}) {
        Vector w = Vector::Zero(p);
        lasso_coordinate_descent(x, y, lambda, w, 5000, 1e-3);
        int nonzero = static_cast<int>((w.array() != 0.0).count());
        CHECK(nonzero >= prev_nonzero);
        prev_nonzero = nonzero;
    }
}

TEST_CASE("lasso: duplicated feature reaches the oracle objective") {
    RngStream rng(9);
    const Index n = 50;
    Vector base = testutil::random_vector(n, rng);
    Vector y = 2.0 * base + testutil::random_vector(n, rng, 0.1);

    Matrix x1(n, 1);
    x1.col(0) = base;
    Matrix x2(n, 2);
    x2.col(0) = base;
    x2.col(1) = base;

    auto objective = [&](const Matrix& x, const Vector& w, double lambda) {
        Vector r = y - x * w;
        return r.squaredNorm() / (2.0 * static_cast<double>(n)) + lambda * w.lpNorm<1>();
    };

    double lambda = 0.05;
    Vector w1 = Vector::Zero(1), w2 = Vector::Zero(2);
    Vector ycn = y; // keep y uncentered on both sides for a like-for-like check
    lasso_coordinate_descent(x1, ycn, lambda, w1, 5000, 1e-10);
    lasso_coordinate_descent(x2, ycn, lambda, w2, 5000, 1e-10);
    CHECK(objective(x2, w2, lambda) == doctest::Approx(objective(x1, w1, lambda)).epsilon(1e-6));
}

TEST_CASE("fit_lasso_cv: path shape, objective sanity and convergence flag") {
    RngStream rng(10);
    const Index n = 60, p = 12;
    Matrix x = testutil::random_matrix(n, p, rng);
    Vector w_true = Vector::Zero(p);
    w_true[0] = 1.5;
    w_true[3] = -2.0;
    Vector y = x * w_true + testutil::random_vector(n, rng, 0.3);

    LassoFit fit = fit_lasso_cv(x, y, LassoParams{}, 123);
    CHECK(fit.lambda_path.size() == 10);
    for (Index i = 1; i < 10; ++i) CHECK(fit.lambda_path[i] < fit.lambda_path[i - 1]);
    CHECK(fit.lambda_path[9] == doctest::Approx(fit.lambda_path[0] * 1e-3).epsilon(1e-12));
    CHECK(fit.converged);
    bool on_path = false;
    for (Index i = 0; i < 10; ++i)
        if (fit.lambda == fit.lambda_path[i]) on_path = true;
    CHECK(on_path);

    // the fitted solution beats the all-zeros vector at its own lambda
    LassoFit zeros = fit;
    zeros.model.coef = Vector::Zero(p);
    zeros.model.intercept = y.mean();
    CHECK(fit.objective(x, y) <= zeros.objective(x, y) + 1e-12);

    // strong signal variables survive selection
    CHECK(fit.model.coef[0] > 0.5);
    CHECK(fit.model.coef[3] < -1.0);

    // deterministic per seed
    LassoFit fit2 = fit_lasso_cv(x, y, LassoParams{}, 123);
    CHECK(fit.lambda == fit2.lambda);
    CHECK((fit.model.coef - fit2.model.coef).norm() == 0.0);

    // a one-sweep budget cannot converge on a correlated design
    Matrix xcorr(n, 3);
    xcorr.col(0) = x.col(0);
    xcorr.col(1) = x.col(0) * 0.999 + 0.001 * x.col(1);
    xcorr.col(2) = x.col(1);
    LassoParams tight;
    tight.max_iter = 1;
    tight.tol = 1e-14;
    LassoFit rough = fit_lasso_cv(xcorr, y, tight, 1);
    CHECK_FALSE(rough.converged);

    CHECK_THROWS_AS(fit_lasso_cv(x.topRows(3), y.head(3), LassoParams{}, 1), ParameterError);
    Matrix xbad = x;
    xbad(0, 0) = std::nan("");
    CHECK_THROWS_AS(fit_lasso_cv(xbad, y, LassoParams{}, 1), DataError);
}

TEST_CASE("lasso objective never loses to zero across the whole path") {
    RngStream rng(11);
    const Index n = 50, p = 8;
    Matrix x = testutil::random_matrix(n, p, rng);
    Vector y = testutil::random_vector(n, rng);
    Matrix xc = x.rowwise() - x.colwise().mean();
    Vector yc = y.array() - y.mean();

    LassoFit fit = fit_lasso_cv(x, y, LassoParams{}, 5);
    for (Index li = 0; li < fit.lambda_path.size(); ++li) {
        double lambda = fit.lambda_path[li];
        Vector w = Vector::Zero(p);
        lasso_coordinate_descent(xc, yc, lambda, w, 5000, 1e-6);
        double obj_w = (yc - xc * w).squaredNorm() / (2.0 * n) + lambda * w.lpNorm<1>();
        double obj_0 = yc.squaredNorm() / (2.0 * n);
        CHECK(obj_w <= obj_0 + 1e-12);
    }
}

TEST_CASE("prs_score: hand-computed dot product and edge cases") {
    cohort::GenotypeMatrix g;
    g.sample_ids = {"s1", "s2"};
    g.variant_ids = {"v1", "v2", "v3"};
    g.dosages = Matrix(2, 3);
    g.dosages << 0.0, 1.0, 2.0, 0.0, 0.0, 0.0;

    PrsWeights w;
    w.variant_ids = {"v1", "v2", "v3"};
    w.beta = Vector(3);
    w.beta << 0.5, -0.2, 0.1;

    Vector s = prs_score(g, w);
    CHECK(s[0] == doctest::Approx(0.0)); // -0.2 + 0.2
    CHECK(s[1] == doctest::Approx(0.0)); // all-zero dosages

    PrsWeights unknown;
    unknown.variant_ids = {"v1", "nope"};
    unknown.beta = Vector(2);
    unknown.beta << 1.0, 1.0;
    try {
        prs_score(g, unknown);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("nope") != std::string::npos);
    }

    // missing dosage is mean-imputed before scoring
    g.dosages(0, 0) = std::nan("");
    PrsWeights only1;
    only1.variant_ids = {"v1"};
    only1.beta = Vector(1);
    only1.beta << 2.0;
    Vector s2 = prs_score(g, only1);
    CHECK(s2[0] == doctest::Approx(0.0)); // imputed to the observed mean 0
}

TEST_CASE("load_prs_weights: header by name, extra columns ignored") {
    std::string path = temp_file("weights.tsv");
    atomic_write_file(path,
                      "chrom\tvariant_id\tbeta\tnote\n"
                      "1\tv1\t0.5\tx\n"
                      "1\tv2\t-0.25\ty\n");
    PrsWeights w = load_prs_weights(path);
    CHECK(w.variant_ids == std::vector<std::string>{"v1", "v2"});
    CHECK(w.beta[1] == -0.25);

    atomic_write_file(path, "variant_id\tbeta\nv1\t0.5\nv1\t0.25\n");
    CHECK_THROWS_AS(load_prs_weights(path), DataError);
    atomic_write_file(path, "variant_id\tbeta\nv1\tinf\n");
    CHECK_THROWS_AS(load_prs_weights(path), DataError);
}

TEST_CASE("fit_nn: separable toy problem reaches near-perfect training AUC") {
    RngStream rng(12);
    const Index n = 120;
    Matrix x(n, 2);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
        y[i] = i % 2 == 0 ? 1.0 : 0.0;
        x(i, 0) = (y[i] > 0.5 ? 2.0 : -2.0) + 0.3 * rng.normal();
        x(i, 1) = rng.normal();
    }
    NnConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 64;
    NnModel m = fit_nn(x, y, cfg, 99);
    CHECK(evalkit::auc(m.predict(x), y) >= 0.99);

    Vector p1 = m.predict(x);
    Vector p2 = m.predict(x);
    CHECK((p1 - p2).norm() == 0.0); // dropout is off at prediction time
}

TEST_CASE("nn architecture: gradient of the full stack matches finite differences") {
    RngStream rng(13);
    const Index n = 6, in = 5;
    Matrix x = testutil::random_matrix(n, in, rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = i % 2 == 0 ? 1.0 : 0.0;

    NnModel proto;
    proto.fc1 = nn::AffineLayer::init(in, 7, nn::Activation::ReLU, rng);
    proto.fc2 = nn::AffineLayer::init(7, 6, nn::Activation::ReLU, rng);
    proto.fc3 = nn::AffineLayer::init(6, 4, nn::Activation::ReLU, rng);
    proto.fc4 = nn::AffineLayer::init(4, 4, nn::Activation::ReLU, rng);
    proto.fc5 = nn::AffineLayer::init(4, 1, nn::Activation::Identity, rng);

    auto loss = [&](const Vector& p) -> std::pair<double, Vector> {
        testutil::ParamReader r(p);
        NnModel m = proto;
        for (nn::AffineLayer* l : {&m.fc1, &m.fc2, &m.fc3, &m.fc4, &m.fc5}) {
            l->W = r.take(l->W.rows(), l->W.cols());
            l->b = r.take_vec(l->b.size());
        }
        nn::ForwardCache c1, c2, c3, c4, c5;
        Matrix h = nn::forward(m.fc1, x, &c1);
        h = nn::forward(m.fc2, h, &c2);
        h = nn::forward(m.fc3, h, &c3); // dropout disabled for the check
        h = nn::forward(m.fc4, h, &c4);
        h = nn::forward(m.fc5, h, &c5);
        double v = nn::bce_with_logits(h.col(0), y);
        Matrix dl = nn::bce_with_logits_grad(h.col(0), y);
        nn::LayerGrads g5 = nn::backward(m.fc5, c5, dl);
        nn::LayerGrads g4 = nn::backward(m.fc4, c4, g5.dx);
        nn::LayerGrads g3 = nn::backward(m.fc3, c3, g4.dx);
        nn::LayerGrads g2 = nn::backward(m.fc2, c2, g3.dx);
        nn::LayerGrads g1 = nn::backward(m.fc1, c1, g2.dx);
        testutil::ParamPack grad;
        for (const nn::LayerGrads* g : {&g1, &g2, &g3, &g4, &g5}) {
            grad.add(g->dW);
            grad.add(g->db);
        }
        return {v, grad.vec()};
    };

    testutil::ParamPack p0;
    for (const nn::AffineLayer* l : {&proto.fc1, &proto.fc2, &proto.fc3, &proto.fc4, &proto.fc5}) {
        p0.add(l->W);
        p0.add(l->b);
    }
    CHECK(nn::grad_check(loss, p0.vec(), 1e-5) < 1e-4);
}

TEST_CASE("fit_adv: identical domains leave the critic estimate near zero") {
    RngStream rng(14);
    const Index n = 400;
    Matrix x = testutil::random_matrix(n, 4, rng);
    Vector y(n);
    std::vector<int> domains;
    for (Index i = 0; i < n; ++i) {
        y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        domains.push_back(i % 2 == 0 ? 0 : 1); // same distribution either way
    }
    AdvConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 100;
    AdvModel m = fit_adv(x, y, domains, cfg, 42);

    // the population gap is zero, so score the critic on fresh draws from the
    // same distribution (the training-batch gap only measures overfit noise)
    const Index n_fresh = 4000;
    Matrix x_fresh = testutil::random_matrix(n_fresh, 4, rng);
    std::vector<int> d_fresh;
    for (Index i = 0; i < n_fresh; ++i) d_fresh.push_back(i % 2 == 0 ? 0 : 1);
    CHECK(std::abs(adv_distance_estimate(m, x_fresh, d_fresh)) < 0.05);
}

TEST_CASE("fit_adv: lambda_w = 0 reduces to plain backbone training") {
    RngStream rng(15);
    const Index n = 80;
    Matrix x = testutil::random_matrix(n, 3, rng);
    Vector y(n);
    std::vector<int> domains;
    for (Index i = 0; i < n; ++i) {
        y[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        domains.push_back(static_cast<int>(i % 3));
    }
    AdvConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.lambda_w = 0.0;
    AdvModel m = fit_adv(x, y, domains, cfg, 7);
    CHECK(m.critics.empty());

    // plain loop with the same substream layout: init from 0, batches from 2
    RngStream root(7);
    RngStream init_rng = root.substream(0);
    RngStream train_rng = root.substream(2);
    nn::AffineLayer b1 = nn::AffineLayer::init(3, 200, nn::Activation::ReLU, init_rng);
    nn::AffineLayer b2 = nn::AffineLayer::init(200, 20, nn::Activation::ReLU, init_rng);
    nn::AffineLayer b3 = nn::AffineLayer::init(20, 1, nn::Activation::Identity, init_rng);
    nn::AdamConfig adam{cfg.lr};
    nn::LayerAdam a1 = nn::LayerAdam::like(b1, adam), a2 = nn::LayerAdam::like(b2, adam),
                  a3 = nn::LayerAdam::like(b3, adam);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        train_rng.shuffle(idx);
        for (Index start = 0; start < n; start += cfg.batch_size) {
            Index bsz = std::min<Index>(cfg.batch_size, n - start);
            Matrix xb(bsz, 3);
            Vector yb(bsz);
            for (Index i = 0; i < bsz; ++i) {
                xb.row(i) = x.row(idx[static_cast<std::size_t>(start + i)]);
                yb[i] = y[idx[static_cast<std::size_t>(start + i)]];
            }
            nn::ForwardCache c1, c2, c3;
            Matrix h1 = nn::forward(b1, xb, &c1);
            Matrix h2 = nn::forward(b2, h1, &c2);
            Matrix logits = nn::forward(b3, h2, &c3);
            Matrix dl = nn::bce_with_logits_grad(logits.col(0), yb);
            nn::LayerGrads g3 = nn::backward(b3, c3, dl);
            nn::LayerGrads g2 = nn::backward(b2, c2, g3.dx);
            nn::LayerGrads g1 = nn::backward(b1, c1, g2.dx);
            a1.step(b1, g1);
            a2.step(b2, g2);
            a3.step(b3, g3);
        }
    }
    CHECK((m.b1.W - b1.W).norm() == 0.0);
    CHECK((m.b2.W - b2.W).norm() == 0.0);
    CHECK((m.b3.W - b3.W).norm() == 0.0);
    CHECK((m.b3.b - b3.b).norm() == 0.0);
}

TEST_CASE("fit_adv: single domain is rejected, critic shapes follow the typo fix") {
    RngStream rng(16);
    Matrix x = testutil::random_matrix(10, 3, rng);
    Vector y = Vector::Zero(10);
    y.head(5).setOnes();
    CHECK_THROWS_AS(fit_adv(x, y, std::vector<int>(10, 1), AdvConfig{}, 1), DataError);

    std::vector<int> domains;
    for (Index i = 0; i < 10; ++i) domains.push_back(i < 6 ? 0 : 1);
    AdvConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 10;
    AdvModel m = fit_adv(x, y, domains, cfg, 1);
    CHECK(m.ref_domain == 0);
    REQUIRE(m.critics.size() == 1);
    CHECK(m.critics[0].c1.in_dim() == 20);
    CHECK(m.critics[0].c1.out_dim() == 10);
    CHECK(m.critics[0].c2.in_dim() == 10); // 10 -> 1, not the printed 20 -> 1
    CHECK(m.critics[0].c2.out_dim() == 1);
}

TEST_CASE("critic gradient penalty: non-negative, exact gradient") {
    RngStream rng(18);
    AdvModel::Critic cr;
    cr.c1 = nn::AffineLayer::init(6, 4, nn::Activation::ReLU, rng);
    cr.c2 = nn::AffineLayer::init(4, 1, nn::Activation::Identity, rng);
    Matrix h_ref = testutil::random_matrix(5, 6, rng);
    Matrix h_dom = testutil::random_matrix(3, 6, rng);

    for (int trial = 0; trial < 20; ++trial) {
        RngStream eps(static_cast<std::uint64_t>(trial));
        CHECK(critic_gradient_penalty(cr, h_ref, h_dom, eps) >= 0.0);
    }

    // finite differences over (W1, W2) with the epsilon draws held fixed
    auto loss = [&](const Vector& p) -> std::pair<double, Vector> {
        testutil::ParamReader r(p);
        AdvModel::Critic c = cr;
        c.c1.W = r.take(4, 6);
        c.c2.W = r.take(1, 4);
        RngStream eps(99);
        Matrix dW1, dW2;
        double v = critic_gradient_penalty(c, h_ref, h_dom, eps, &dW1, &dW2);
        testutil::ParamPack g;
        g.add(dW1);
        g.add(dW2);
        return {v, g.vec()};
    };
    testutil::ParamPack p0;
    p0.add(cr.c1.W);
    p0.add(cr.c2.W);
    CHECK(nn::grad_check(loss, p0.vec(), 1e-6) < 1e-4);
}

TEST_CASE("predict: constants, repeatability, prs delegation") {
    LinearModel m;
    m.coef = Vector::Zero(3);
    m.intercept = 0.3;
    RngStream rng(17);
    Matrix x = testutil::random_matrix(4, 3, rng);
    Vector p = m.predict(x);
    for (Index i = 0; i < 4; ++i) CHECK(p[i] == 0.3);
    CHECK((m.predict(x) - p).norm() == 0.0);

    Matrix wrong = testutil::random_matrix(4, 5, rng);
    CHECK_THROWS_AS(m.predict(wrong), DimensionError);
}
