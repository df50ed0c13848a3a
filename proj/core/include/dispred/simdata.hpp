#ifndef DISPRED_SIMDATA_HPP
#define DISPRED_SIMDATA_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dispred/cohort.hpp"

namespace dispred::simdata {

// Balding-Nichols admixture simulator. Populations map onto the first K
// superpopulation columns of proportions.tsv, so K <= 5.
struct SimConfig {
    int k_populations = 3;
    Index n_variants = 500;
    Index n_samples = 3000;
    std::vector<double> fst = {0.1, 0.1, 0.1}; // per population, in (0,1)
    Index n_causal = 30;
    double effect_scale = 1.0;  // sd of the total causal contribution to liability
    double confound_gamma = 1.0;
    std::vector<double> dirichlet_alpha = {0.2, 0.2, 0.2};
    double prevalence = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-run ground truth kept out of the cohort files; used by tests and probes.
struct SimTruth {
    Vector ancestral_freqs;            // M
    Matrix pop_freqs;                  // K x M
    std::vector<Index> causal_variants;
    Vector causal_effects;             // aligned with causal_variants
    Vector pop_offsets;                // K; liability += gamma * (q . offsets)
    Vector liability;                  // N
    double threshold = 0.0;            // liability cut for case status
};

// Dosages g ~ Binomial(2, sum_k q_ik f_km); liability = shared causal signal
// + gamma * (q . population offsets) + N(0,1); cases are the top `prevalence`
// fraction by liability. Ancestry label = argmax q; proportions = q.
cohort::LabeledCohort simulate_cohort(const SimConfig& cfg);
std::pair<cohort::LabeledCohort, SimTruth> simulate_cohort_detailed(const SimConfig& cfg);

// Writes dir/<base>.dosage.tsv, .labels.tsv, .proportions.tsv.
void export_cohort(const cohort::LabeledCohort& c, const std::string& dir,
                   const std::string& base = "cohort");

// SimConfig as a JSON object; unknown keys rejected, absent keys defaulted.
// "fst" and "dirichlet_alpha" accept a scalar (expanded to K) or a K-array.
SimConfig sim_config_from_json_text(const std::string& json_text);
SimConfig load_sim_config(const std::string& path);
std::string sim_config_to_json_text(const SimConfig& cfg);

} // namespace dispred::simdata

#endif
