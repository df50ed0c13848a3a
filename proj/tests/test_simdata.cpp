#include "doctest.h"

#include <filesystem>
#include <unistd.h>

#include "dispred/evalkit.hpp"
#include "dispred/predictors.hpp"
#include "dispred/simdata.hpp"
#include "helpers.hpp"

using namespace dispred;
using namespace dispred::simdata;

namespace {

SimConfig small_config() {
    SimConfig cfg;
    cfg.k_populations = 3;
    cfg.n_variants = 80;
    cfg.n_samples = 400;
    cfg.fst = {0.1, 0.1, 0.1};
    cfg.dirichlet_alpha = {0.2, 0.2, 0.2};
    cfg.n_causal = 10;
    cfg.seed = 7;
    return cfg;
}

} // namespace

TEST_CASE("simulate_cohort: identical seed gives identical cohort") {
    SimConfig cfg = small_config();
    auto a = simulate_cohort(cfg);
    auto b = simulate_cohort(cfg);
    CHECK((a.g.dosages - b.g.dosages).norm() == 0.0);
    CHECK((a.y - b.y).norm() == 0.0);
    CHECK(a.ancestry == b.ancestry);
    CHECK((a.proportions - b.proportions).norm() == 0.0);

    cfg.seed = 8;
    auto c = simulate_cohort(cfg);
    CHECK((a.g.dosages - c.g.dosages).norm() != 0.0);
}

TEST_CASE("simulate_cohort: dosages integral in {0,1,2}, proportions on the simplex") {
    auto c = simulate_cohort(small_config());
    for (Index i = 0; i < c.n(); ++i) {
        for (Index j = 0; j < c.g.n_variants(); ++j) {
            double v = c.g.dosages(i, j);
            CHECK((v == 0.0 || v == 1.0 || v == 2.0));
        }
        CHECK(std::abs(c.proportions.row(i).sum() - 1.0) < 1e-9);
    }
    double case_rate = c.y.mean();
    CHECK(case_rate == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("vanishing Fst collapses population frequencies onto the ancestral ones") {
    SimConfig cfg = small_config();
    cfg.fst = {1e-4, 1e-4, 1e-4};
    auto [c, truth] = simulate_cohort_detailed(cfg);
    (void)c;
    double max_gap = 0.0;
    for (int k = 0; k < cfg.k_populations; ++k)
        for (Index j = 0; j < cfg.n_variants; ++j)
            max_gap = std::max(max_gap,
                               std::abs(truth.pop_freqs(k, j) - truth.ancestral_freqs[j]));
    CHECK(max_gap < 0.05);
}

TEST_CASE("single-population frequencies converge to the Balding-Nichols draw") {
    SimConfig cfg;
    cfg.k_populations = 2;
    cfg.n_variants = 40;
    cfg.n_samples = 1500;
    cfg.fst = {0.15, 0.15};
    // concentration so lopsided that everyone is effectively population 0
    cfg.dirichlet_alpha = {1e6, 1e-9};
    cfg.n_causal = 0;
    cfg.seed = 11;
    auto [c, truth] = simulate_cohort_detailed(cfg);

    for (Index j = 0; j < cfg.n_variants; ++j) {
        double f = truth.pop_freqs(0, j);
        double observed = c.g.dosages.col(j).mean() / 2.0;
        double se = std::sqrt(f * (1.0 - f) / (2.0 * static_cast<double>(cfg.n_samples)));
        CHECK(std::abs(observed - f) < 3.0 * se + 1e-3);
    }
}

TEST_CASE("null cohort: no signal means chance-level AUC") {
    SimConfig cfg;
    cfg.k_populations = 3;
    cfg.n_variants = 100;
    cfg.n_samples = 2000;
    cfg.fst = {0.1, 0.1, 0.1};
    cfg.dirichlet_alpha = {0.2, 0.2, 0.2};
    cfg.n_causal = 0;
    cfg.effect_scale = 0.0;
    cfg.confound_gamma = 0.0;
    cfg.seed = 5;
    auto c = simulate_cohort(cfg);

    // fit on one half, score the other
    std::vector<Index> first, second;
    for (Index i = 0; i < c.n(); ++i) (i < c.n() / 2 ? first : second).push_back(i);
    auto train = cohort::subset(c, first);
    auto test = cohort::subset(c, second);
    auto model = predictors::fit_ols(train.g.dosages, train.y, predictors::FeatureRole::RawDosage);
    double a = evalkit::auc(model.predict(test.g.dosages), test.y);
    CHECK(a > 0.45);
    CHECK(a < 0.55);
}

TEST_CASE("export: files parse back and agree at printed precision") {
    auto c = simulate_cohort(small_config());
    auto dir = std::filesystem::temp_directory_path() /
               ("dispred_sim_" + std::to_string(::getpid()));
    export_cohort(c, dir.string());
    auto back = cohort::load_cohort((dir / "cohort").string());
    CHECK((back.g.dosages - c.g.dosages).norm() == 0.0); // dosages are integral
    CHECK((back.y - c.y).norm() == 0.0);
    CHECK(back.ancestry == c.ancestry);
    for (Index i = 0; i < c.n(); ++i) {
        CHECK(std::abs(back.proportions.row(i).sum() - 1.0) <= 1e-6);
        for (Index k = 0; k < 5; ++k)
            CHECK(back.proportions(i, k) == doctest::Approx(c.proportions(i, k)).epsilon(1e-7));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("sim config json: defaults, scalar expansion, unknown keys") {
    SimConfig cfg = sim_config_from_json_text("{}");
    CHECK(cfg.k_populations == 3);
    CHECK(cfg.n_variants == 500);
    CHECK(cfg.n_samples == 3000);
    CHECK(cfg.n_causal == 30);
    CHECK(cfg.prevalence == 0.3);
    CHECK(cfg.fst == std::vector<double>{0.1, 0.1, 0.1});
    CHECK(cfg.dirichlet_alpha == std::vector<double>{0.2, 0.2, 0.2});

    cfg = sim_config_from_json_text(R"({"k_populations": 2, "fst": 0.2, "seed": 9})");
    CHECK(cfg.fst == std::vector<double>{0.2, 0.2});
    CHECK(cfg.seed == 9);

    CHECK_THROWS_AS(sim_config_from_json_text(R"({"k_population": 2})"), DataError);
    CHECK_THROWS_AS(sim_config_from_json_text(R"({"prevalence": 1.5})"), ParameterError);
    CHECK_THROWS_AS(sim_config_from_json_text(R"({"k_populations": 9})"), ParameterError);

    // round trip through the serializer
    SimConfig base = small_config();
    SimConfig again = sim_config_from_json_text(sim_config_to_json_text(base));
    CHECK(again.n_variants == base.n_variants);
    CHECK(again.fst == base.fst);
    CHECK(again.seed == base.seed);
}
