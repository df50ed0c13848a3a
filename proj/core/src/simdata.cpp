#include "dispred/simdata.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "json.hpp"

#include "dispred/fsio.hpp"
#include "dispred/rng.hpp"

namespace dispred::simdata {

using json = nlohmann::ordered_json;

void SimConfig::validate() const {
    if (k_populations < 2 || k_populations > static_cast<int>(cohort::kNumSuperPops))
        throw ParameterError("sim: k_populations must be in [2, 5]");
    if (n_variants < 1 || n_samples < 1)
        throw ParameterError("sim: n_variants and n_samples must be >= 1");
    if (n_causal < 0 || n_causal > n_variants)
        throw ParameterError("sim: n_causal must be in [0, n_variants]");
    if (static_cast<int>(fst.size()) != k_populations)
        throw ParameterError("sim: fst needs one value per population");
    for (double f : fst)
        if (!(f > 0.0 && f < 1.0))
            throw ParameterError("sim: fst values must be in (0,1)");
    if (static_cast<int>(dirichlet_alpha.size()) != k_populations)
        throw ParameterError("sim: dirichlet_alpha needs one value per population");
    for (double a : dirichlet_alpha)
        if (!(a > 0.0))
            throw ParameterError("sim: dirichlet_alpha values must be positive");
    if (!(prevalence > 0.0 && prevalence < 1.0))
        throw ParameterError("sim: prevalence must be in (0,1)");
    if (!(effect_scale >= 0.0) || !std::isfinite(confound_gamma))
        throw ParameterError("sim: bad effect_scale or confound_gamma");
}

namespace {

std::string padded_id(const char* stem, Index i, Index total) {
    int width = 1;
    for (Index t = total; t >= 10; t /= 10) ++width;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%0*lld", stem, std::min(width, 19),
                  static_cast<long long>(i + 1));
    return buf;
}

} // namespace

std::pair<cohort::LabeledCohort, SimTruth> simulate_cohort_detailed(const SimConfig& cfg) {
    cfg.validate();
    const Index n = cfg.n_samples;
    const Index m = cfg.n_variants;
    const int k = cfg.k_populations;

    RngStream root(cfg.seed);
    RngStream freq_rng = root.substream(0);
    RngStream admix_rng = root.substream(1);
    RngStream geno_rng = root.substream(2);
    RngStream effect_rng = root.substream(3);
    RngStream noise_rng = root.substream(4);

    SimTruth truth;
    truth.ancestral_freqs = Vector(m);
    truth.pop_freqs = Matrix(k, m);
    for (Index j = 0; j < m; ++j) {
        double p = freq_rng.uniform(0.05, 0.95);
        truth.ancestral_freqs[j] = p;
        for (int pop = 0; pop < k; ++pop) {
            double f = cfg.fst[static_cast<std::size_t>(pop)];
            double scale = (1.0 - f) / f;
            truth.pop_freqs(pop, j) = freq_rng.beta(p * scale, (1.0 - p) * scale);
        }
    }

    Matrix q(n, k);
    for (Index i = 0; i < n; ++i) {
        auto qi = admix_rng.dirichlet(cfg.dirichlet_alpha);
        for (int pop = 0; pop < k; ++pop) q(i, pop) = qi[static_cast<std::size_t>(pop)];
    }

    cohort::LabeledCohort c;
    c.g.dosages = Matrix(n, m);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < m; ++j) {
            double pi = 0.0;
            for (int pop = 0; pop < k; ++pop) pi += q(i, pop) * truth.pop_freqs(pop, j);
            pi = std::clamp(pi, 0.0, 1.0);
            c.g.dosages(i, j) = static_cast<double>(geno_rng.binomial2(pi));
        }
    }

    // causal variants: sampled without replacement, shared effects across populations
    std::vector<Index> variant_pool(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) variant_pool[static_cast<std::size_t>(j)] = j;
    for (Index i = 0; i < cfg.n_causal; ++i) {
        Index j = i + static_cast<Index>(effect_rng.bounded(static_cast<std::uint64_t>(m - i)));
        std::swap(variant_pool[static_cast<std::size_t>(i)], variant_pool[static_cast<std::size_t>(j)]);
    }
    truth.causal_variants.assign(variant_pool.begin(), variant_pool.begin() + cfg.n_causal);
    std::sort(truth.causal_variants.begin(), truth.causal_variants.end());
    double per_variant_scale =
        cfg.n_causal > 0 ? cfg.effect_scale / std::sqrt(static_cast<double>(cfg.n_causal)) : 0.0;
    truth.causal_effects = Vector(cfg.n_causal);
    for (Index i = 0; i < cfg.n_causal; ++i)
        truth.causal_effects[i] = per_variant_scale * effect_rng.normal();

    // offsets +1/-1 for the first two populations, 0 for the rest
    truth.pop_offsets = Vector::Zero(k);
    truth.pop_offsets[0] = 1.0;
    truth.pop_offsets[1] = -1.0;

    truth.liability = Vector::Zero(n);
    for (Index ci = 0; ci < cfg.n_causal; ++ci) {
        Index j = truth.causal_variants[static_cast<std::size_t>(ci)];
        double mean = c.g.dosages.col(j).mean();
        double sd = std::sqrt((c.g.dosages.col(j).array() - mean).square().sum() /
                              static_cast<double>(n));
        if (sd <= 0.0) continue;
        truth.liability +=
            truth.causal_effects[ci] * ((c.g.dosages.col(j).array() - mean) / sd).matrix();
    }
    truth.liability += cfg.confound_gamma * (q * truth.pop_offsets);
    for (Index i = 0; i < n; ++i) truth.liability[i] += noise_rng.normal();

    std::vector<double> sorted(truth.liability.data(), truth.liability.data() + n);
    std::sort(sorted.begin(), sorted.end());
    Index cut = std::clamp<Index>(
        static_cast<Index>(std::floor((1.0 - cfg.prevalence) * static_cast<double>(n))), 0, n - 1);
    truth.threshold = sorted[static_cast<std::size_t>(cut)];

    c.y = Vector(n);
    c.ancestry.resize(static_cast<std::size_t>(n));
    c.proportions = Matrix::Zero(n, cohort::kNumSuperPops);
    c.g.sample_ids.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        c.g.sample_ids.push_back(padded_id("S", i, n));
        c.y[i] = truth.liability[i] > truth.threshold ? 1.0 : 0.0;
        int best = 0;
        for (int pop = 1; pop < k; ++pop)
            if (q(i, pop) > q(i, best)) best = pop;
        c.ancestry[static_cast<std::size_t>(i)] = cohort::kSuperPops[static_cast<std::size_t>(best)];
        for (int pop = 0; pop < k; ++pop) c.proportions(i, pop) = q(i, pop);
    }
    c.g.variant_ids.reserve(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) c.g.variant_ids.push_back(padded_id("V", j, m));

    return {std::move(c), std::move(truth)};
}

cohort::LabeledCohort simulate_cohort(const SimConfig& cfg) {
    return simulate_cohort_detailed(cfg).first;
}

void export_cohort(const cohort::LabeledCohort& c, const std::string& dir,
                   const std::string& base) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    cohort::write_cohort(c, (std::filesystem::path(dir) / base).string());
}

namespace {

std::vector<double> per_pop_values(const json& v, int k, const char* key) {
    std::vector<double> out;
    if (v.is_number()) {
        out.assign(static_cast<std::size_t>(k), v.get<double>());
    } else if (v.is_array()) {
        out = v.get<std::vector<double>>();
    } else {
        throw DataError(std::string("sim config: ") + key + " must be a number or array");
    }
    return out;
}

} // namespace

SimConfig sim_config_from_json_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("sim config: ") + e.what());
    }
    if (!j.is_object())
        throw DataError("sim config: top level must be an object");

    static const std::vector<std::string> known = {
        "k_populations", "n_variants", "n_samples",  "fst",        "n_causal",
        "effect_scale",  "confound_gamma", "dirichlet_alpha", "prevalence", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw DataError("sim config: unknown key '" + it.key() + "'");

    SimConfig cfg;
    try {
        if (j.contains("k_populations")) cfg.k_populations = j["k_populations"].get<int>();
        if (j.contains("n_variants")) cfg.n_variants = j["n_variants"].get<Index>();
        if (j.contains("n_samples")) cfg.n_samples = j["n_samples"].get<Index>();
        if (j.contains("n_causal")) cfg.n_causal = j["n_causal"].get<Index>();
        if (j.contains("effect_scale")) cfg.effect_scale = j["effect_scale"].get<double>();
        if (j.contains("confound_gamma")) cfg.confound_gamma = j["confound_gamma"].get<double>();
        if (j.contains("prevalence")) cfg.prevalence = j["prevalence"].get<double>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        cfg.fst = j.contains("fst") ? per_pop_values(j["fst"], cfg.k_populations, "fst")
                                    : std::vector<double>(static_cast<std::size_t>(cfg.k_populations), 0.1);
        cfg.dirichlet_alpha =
            j.contains("dirichlet_alpha")
                ? per_pop_values(j["dirichlet_alpha"], cfg.k_populations, "dirichlet_alpha")
                : std::vector<double>(static_cast<std::size_t>(cfg.k_populations), 0.2);
    } catch (const json::exception& e) {
        throw DataError(std::string("sim config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

SimConfig load_sim_config(const std::string& path) {
    return sim_config_from_json_text(read_file(path));
}

std::string sim_config_to_json_text(const SimConfig& cfg) {
    json j;
    j["k_populations"] = cfg.k_populations;
    j["n_variants"] = cfg.n_variants;
    j["n_samples"] = cfg.n_samples;
    j["fst"] = cfg.fst;
    j["n_causal"] = cfg.n_causal;
    j["effect_scale"] = cfg.effect_scale;
    j["confound_gamma"] = cfg.confound_gamma;
    j["dirichlet_alpha"] = cfg.dirichlet_alpha;
    j["prevalence"] = cfg.prevalence;
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

} // namespace dispred::simdata
