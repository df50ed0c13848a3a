#ifndef DISPRED_COHORT_HPP
#define DISPRED_COHORT_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dispred/matrix.hpp"

namespace dispred::cohort {

// The five superpopulation columns of proportions.tsv, in file order.
inline constexpr std::array<const char*, 5> kSuperPops = {"EUR", "AFR", "AMR", "EAS", "SAS"};
inline constexpr Index kNumSuperPops = 5;

inline bool is_missing(double dosage) { return std::isnan(dosage); }

// N x M dosage matrix. NaN marks a missing call; every observed value is in [0,2].
struct GenotypeMatrix {
    std::vector<std::string> sample_ids;
    std::vector<std::string> variant_ids;
    Matrix dosages;

    Index n_samples() const { return dosages.rows(); }
    Index n_variants() const { return dosages.cols(); }
    bool has_missing() const { return dosages.hasNaN(); }
};

// Genotypes plus phenotype y, and optionally ancestry labels, per-sample
// superpopulation proportions and age. All row-aligned with the dosages.
struct LabeledCohort {
    GenotypeMatrix g;
    Vector y;                           // binary or continuous proxy
    std::vector<std::string> ancestry;  // empty when absent; "" marks a missing cell
    Matrix proportions;                 // N x 5, or 0 x 0 when absent
    Vector age;                         // size 0 when absent; NaN marks a missing cell

    Index n() const { return g.n_samples(); }
    bool has_ancestry() const { return !ancestry.empty(); }
    bool has_proportions() const { return proportions.size() > 0; }
    bool has_age() const { return age.size() > 0; }
    bool y_is_binary() const;
};

LabeledCohort subset(const LabeledCohort& c, const std::vector<Index>& rows);

// ---- file formats (TSV, UTF-8, '.' decimal, NA = missing) ----
// dosage.tsv       header: sample_id <variant ids...>; cells in [0,2] or NA
// labels.tsv       header: sample_id phenotype [ancestry] [age]
// proportions.tsv  header: sample_id EUR AFR AMR EAS SAS; rows sum to 1 (+/- 1e-6)

GenotypeMatrix load_dosage(const std::string& path);
void write_dosage(const std::string& path, const GenotypeMatrix& g);

// Loads prefix.dosage.tsv + prefix.labels.tsv (+ prefix.proportions.tsv when
// present), realigning label/proportion rows to the dosage row order. The id
// sets must match exactly.
LabeledCohort load_cohort(const std::string& prefix);
void write_cohort(const LabeledCohort& c, const std::string& prefix);

// ---- QC ----

struct QcThresholds {
    double max_missing_rate = 0.10;
    double min_maf = 0.01;
    double hwe_p_floor = 1e-5; // 0 disables the HWE test
};

enum class DropReason { MissingRate, LowMaf, HweFail };
const char* drop_reason_name(DropReason r);

struct QcDrop {
    std::string variant_id;
    DropReason reason;
    double value; // the offending missing rate / MAF / HWE p-value
};

struct QcReport {
    std::vector<QcDrop> dropped;
    Index n_kept = 0;
    std::string to_tsv() const;
};

// Drops variants with missing rate > max_missing_rate, MAF < min_maf
// (allele frequency = mean observed dosage / 2), or HWE chi-square p-value
// below hwe_p_floor computed on rounded genotypes of controls. Reasons are
// checked in that order and the first failure is reported.
std::pair<GenotypeMatrix, QcReport> qc_filter(const GenotypeMatrix& g,
                                              const std::vector<bool>& control_mask,
                                              const QcThresholds& t);

// HWE 1-df chi-square p-value from genotype counts (n0, n1, n2); exposed for tests.
double hwe_chi2_pvalue(Index n0, Index n1, Index n2);

// Missing dosage -> per-variant mean of observed dosages.
GenotypeMatrix impute_mean(const GenotypeMatrix& g);

// score >= threshold -> 1 else 0.
Vector dichotomize_proxy(const Vector& scores, double threshold = 2.0);

// Removes controls (y = 0) below min_age; cases are kept regardless of age.
LabeledCohort age_filter(const LabeledCohort& c, double min_age = 65.0);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

// Phenotype-stratified split into (train, val, test): disjoint, exhaustive,
// per-class counts within +/-1 of the requested fractions, deterministic per seed.
std::array<LabeledCohort, 3> stratified_split(const LabeledCohort& c, const SplitFractions& f,
                                              std::uint64_t seed);

enum class Stratum { EUR, AFR, AMR, EAS, SAS, MIX };
const char* stratum_name(Stratum s);

// The superpopulation whose proportion strictly exceeds the cutoff, else MIX.
// Requires cutoff >= 0.5 so at most one component can pass.
Stratum ancestry_stratify(const Vector& proportions_row, double cutoff);

// Population variance of one proportions row (divide by K); exposed for tests.
double row_population_variance(const Vector& proportions_row);

// Permutation of samples ordered by proportion variance, descending
// (homogeneous first, admixed last). Ties keep input order.
std::vector<Index> heterogeneity_order(const Matrix& proportions);

} // namespace dispred::cohort

#endif
