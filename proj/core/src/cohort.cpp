#include "dispred/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dispred/fsio.hpp"
#include "dispred/rng.hpp"

namespace dispred::cohort {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::vector<std::string> read_lines(const std::string& path) {
    std::string buf = read_file(path);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < buf.size()) {
        std::size_t nl = buf.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(buf.substr(start));
            break;
        }
        std::string line = buf.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = nl + 1;
    }
    return lines;
}

double parse_double(const std::string& cell, const std::string& path, std::size_t line_no,
                    const std::string& col) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw DataError(path + ":" + std::to_string(line_no) + ": cannot parse '" + cell +
                        "' in column " + col);
    return v;
}

std::string format_dosage(double v) {
    if (std::isnan(v)) return "NA";
    if (v == std::floor(v)) return std::to_string(static_cast<long long>(v));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string format_full(double v) {
    if (std::isnan(v)) return "NA";
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void check_unique(const std::vector<std::string>& ids, const std::string& path,
                  const std::string& what) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second)
            throw DataError(path + ": duplicate " + what + " '" + id + "'");
}

struct LabelTable {
    std::vector<std::string> ids;
    Vector y;
    std::vector<std::string> ancestry;
    Vector age;
    bool has_ancestry = false;
    bool has_age = false;
};

LabelTable load_labels(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty())
        throw DataError(path + ": empty file");
    auto header = split_tabs(lines[0]);
    if (header.size() < 2 || header[0] != "sample_id" || header[1] != "phenotype")
        throw DataError(path + ":1: header must start 'sample_id\tphenotype'");
    int anc_col = -1, age_col = -1;
    for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c] == "ancestry" && anc_col < 0) anc_col = static_cast<int>(c);
        else if (header[c] == "age" && age_col < 0) age_col = static_cast<int>(c);
        else throw DataError(path + ":1: unexpected column '" + header[c] + "'");
    }

    LabelTable t;
    t.has_ancestry = anc_col >= 0;
    t.has_age = age_col >= 0;
    std::vector<double> ys, ages;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cells = split_tabs(lines[i]);
        if (cells.size() != header.size())
            throw DataError(path + ":" + std::to_string(i + 1) + ": expected " +
                            std::to_string(header.size()) + " columns, got " +
                            std::to_string(cells.size()));
        t.ids.push_back(cells[0]);
        ys.push_back(parse_double(cells[1], path, i + 1, "phenotype"));
        if (anc_col >= 0) t.ancestry.push_back(cells[anc_col] == "NA" ? "" : cells[anc_col]);
        if (age_col >= 0) {
            const std::string& a = cells[age_col];
            ages.push_back(a == "NA" ? std::nan("") : parse_double(a, path, i + 1, "age"));
        }
    }
    check_unique(t.ids, path, "sample id");
    t.y = Eigen::Map<Vector>(ys.data(), static_cast<Index>(ys.size()));
    if (t.has_age) t.age = Eigen::Map<Vector>(ages.data(), static_cast<Index>(ages.size()));
    return t;
}

struct PropTable {
    std::vector<std::string> ids;
    Matrix props;
};

PropTable load_proportions(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty())
        throw DataError(path + ": empty file");
    auto header = split_tabs(lines[0]);
    if (header.size() != 1 + kNumSuperPops || header[0] != "sample_id")
        throw DataError(path + ":1: header must be 'sample_id EUR AFR AMR EAS SAS'");
    for (Index k = 0; k < kNumSuperPops; ++k)
        if (header[static_cast<std::size_t>(k) + 1] != kSuperPops[static_cast<std::size_t>(k)])
            throw DataError(path + ":1: header must be 'sample_id EUR AFR AMR EAS SAS'");

    PropTable t;
    std::vector<double> flat;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cells = split_tabs(lines[i]);
        if (cells.size() != header.size())
            throw DataError(path + ":" + std::to_string(i + 1) + ": ragged row");
        t.ids.push_back(cells[0]);
        double sum = 0.0;
        for (Index k = 0; k < kNumSuperPops; ++k) {
            double v = parse_double(cells[static_cast<std::size_t>(k) + 1], path, i + 1,
                                    kSuperPops[static_cast<std::size_t>(k)]);
            flat.push_back(v);
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw DataError(path + ":" + std::to_string(i + 1) + ": proportions sum to " +
                            std::to_string(sum) + ", expected 1");
    }
    check_unique(t.ids, path, "sample id");
    Index n = static_cast<Index>(t.ids.size());
    t.props = Eigen::Map<Matrix>(flat.data(), n, kNumSuperPops);
    return t;
}

// Map each id in `want` to its row in `have`; every id must be found and counts match.
std::vector<Index> align_ids(const std::vector<std::string>& want,
                             const std::vector<std::string>& have, const std::string& what) {
    if (want.size() != have.size())
        throw DataError(what + ": sample count mismatch (" + std::to_string(have.size()) +
                        " vs " + std::to_string(want.size()) + " in dosage file)");
    std::unordered_map<std::string, Index> pos;
    pos.reserve(have.size());
    for (Index i = 0; i < static_cast<Index>(have.size()); ++i)
        pos[have[static_cast<std::size_t>(i)]] = i;
    std::vector<Index> map;
    map.reserve(want.size());
    for (const auto& id : want) {
        auto it = pos.find(id);
        if (it == pos.end())
            throw DataError(what + ": sample '" + id + "' missing");
        map.push_back(it->second);
    }
    return map;
}

} // namespace

bool LabeledCohort::y_is_binary() const {
    for (Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) return false;
    return true;
}

LabeledCohort subset(const LabeledCohort& c, const std::vector<Index>& rows) {
    LabeledCohort out;
    Index n = static_cast<Index>(rows.size());
    out.g.variant_ids = c.g.variant_ids;
    out.g.sample_ids.reserve(rows.size());
    out.g.dosages = Matrix(n, c.g.n_variants());
    out.y = Vector(n);
    if (c.has_ancestry()) out.ancestry.reserve(rows.size());
    if (c.has_proportions()) out.proportions = Matrix(n, c.proportions.cols());
    if (c.has_age()) out.age = Vector(n);
    for (Index i = 0; i < n; ++i) {
        Index r = rows[static_cast<std::size_t>(i)];
        if (r < 0 || r >= c.n())
            throw ParameterError("subset: row index out of range");
        out.g.sample_ids.push_back(c.g.sample_ids[static_cast<std::size_t>(r)]);
        out.g.dosages.row(i) = c.g.dosages.row(r);
        out.y[i] = c.y[r];
        if (c.has_ancestry()) out.ancestry.push_back(c.ancestry[static_cast<std::size_t>(r)]);
        if (c.has_proportions()) out.proportions.row(i) = c.proportions.row(r);
        if (c.has_age()) out.age[i] = c.age[r];
    }
    return out;
}

GenotypeMatrix load_dosage(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty())
        throw DataError(path + ": empty file");
    auto header = split_tabs(lines[0]);
    if (header.empty() || header[0] != "sample_id")
        throw DataError(path + ":1: first header column must be 'sample_id'");

    GenotypeMatrix g;
    g.variant_ids.assign(header.begin() + 1, header.end());
    check_unique(g.variant_ids, path, "variant id");
    Index m = static_cast<Index>(g.variant_ids.size());

    std::vector<double> flat;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cells = split_tabs(lines[i]);
        if (static_cast<Index>(cells.size()) != m + 1)
            throw DataError(path + ":" + std::to_string(i + 1) + ": expected " +
                            std::to_string(m + 1) + " columns, got " + std::to_string(cells.size()));
        g.sample_ids.push_back(cells[0]);
        for (Index j = 0; j < m; ++j) {
            const std::string& cell = cells[static_cast<std::size_t>(j) + 1];
            if (cell == "NA") {
                flat.push_back(std::nan(""));
                continue;
            }
            double v = parse_double(cell, path, i + 1, g.variant_ids[static_cast<std::size_t>(j)]);
            if (v < 0.0 || v > 2.0)
                throw DataError(path + ":" + std::to_string(i + 1) + ": dosage " +
                                std::to_string(v) + " out of [0,2] for variant " +
                                g.variant_ids[static_cast<std::size_t>(j)]);
            flat.push_back(v);
        }
    }
    check_unique(g.sample_ids, path, "sample id");
    Index n = static_cast<Index>(g.sample_ids.size());
    g.dosages = Eigen::Map<Matrix>(flat.data(), n, m);
    return g;
}

void write_dosage(const std::string& path, const GenotypeMatrix& g) {
    std::ostringstream out;
    out << "sample_id";
    for (const auto& v : g.variant_ids) out << '\t' << v;
    out << '\n';
    for (Index i = 0; i < g.n_samples(); ++i) {
        out << g.sample_ids[static_cast<std::size_t>(i)];
        for (Index j = 0; j < g.n_variants(); ++j) out << '\t' << format_dosage(g.dosages(i, j));
        out << '\n';
    }
    atomic_write_file(path, out.str());
}

LabeledCohort load_cohort(const std::string& prefix) {
    LabeledCohort c;
    c.g = load_dosage(prefix + ".dosage.tsv");

    LabelTable labels = load_labels(prefix + ".labels.tsv");
    auto label_of = align_ids(c.g.sample_ids, labels.ids, prefix + ".labels.tsv");
    Index n = c.g.n_samples();
    c.y = Vector(n);
    if (labels.has_ancestry) c.ancestry.resize(static_cast<std::size_t>(n));
    if (labels.has_age) c.age = Vector(n);
    for (Index i = 0; i < n; ++i) {
        Index src = label_of[static_cast<std::size_t>(i)];
        c.y[i] = labels.y[src];
        if (labels.has_ancestry)
            c.ancestry[static_cast<std::size_t>(i)] = labels.ancestry[static_cast<std::size_t>(src)];
        if (labels.has_age) c.age[i] = labels.age[src];
    }

    std::string prop_path = prefix + ".proportions.tsv";
    if (file_exists(prop_path)) {
        PropTable props = load_proportions(prop_path);
        auto prop_of = align_ids(c.g.sample_ids, props.ids, prop_path);
        c.proportions = Matrix(n, kNumSuperPops);
        for (Index i = 0; i < n; ++i)
            c.proportions.row(i) = props.props.row(prop_of[static_cast<std::size_t>(i)]);
    }
    return c;
}

void write_cohort(const LabeledCohort& c, const std::string& prefix) {
    write_dosage(prefix + ".dosage.tsv", c.g);

    std::ostringstream lab;
    lab << "sample_id\tphenotype";
    if (c.has_ancestry()) lab << "\tancestry";
    if (c.has_age()) lab << "\tage";
    lab << '\n';
    for (Index i = 0; i < c.n(); ++i) {
        lab << c.g.sample_ids[static_cast<std::size_t>(i)] << '\t' << format_full(c.y[i]);
        if (c.has_ancestry()) {
            const std::string& a = c.ancestry[static_cast<std::size_t>(i)];
            lab << '\t' << (a.empty() ? "NA" : a);
        }
        if (c.has_age()) lab << '\t' << format_full(c.age[i]);
        lab << '\n';
    }
    atomic_write_file(prefix + ".labels.tsv", lab.str());

    if (c.has_proportions()) {
        std::ostringstream pr;
        pr << "sample_id";
        for (auto* p : kSuperPops) pr << '\t' << p;
        pr << '\n';
        char buf[32];
        for (Index i = 0; i < c.n(); ++i) {
            pr << c.g.sample_ids[static_cast<std::size_t>(i)];
            for (Index k = 0; k < kNumSuperPops; ++k) {
                std::snprintf(buf, sizeof(buf), "%.9f", c.proportions(i, k));
                pr << '\t' << buf;
            }
            pr << '\n';
        }
        atomic_write_file(prefix + ".proportions.tsv", pr.str());
    }
}

const char* drop_reason_name(DropReason r) {
    switch (r) {
    case DropReason::MissingRate: return "missing_rate";
    case DropReason::LowMaf: return "low_maf";
    case DropReason::HweFail: return "hwe_fail";
    }
    return "unknown";
}

std::string QcReport::to_tsv() const {
    std::ostringstream out;
    out << "variant_id\treason\tvalue\n";
    for (const auto& d : dropped)
        out << d.variant_id << '\t' << drop_reason_name(d.reason) << '\t' << d.value << '\n';
    return out.str();
}

double hwe_chi2_pvalue(Index n0, Index n1, Index n2) {
    double n = static_cast<double>(n0 + n1 + n2);
    if (n <= 0.0) return 1.0;
    double q = (2.0 * static_cast<double>(n2) + static_cast<double>(n1)) / (2.0 * n);
    double e0 = n * (1.0 - q) * (1.0 - q);
    double e1 = 2.0 * n * q * (1.0 - q);
    double e2 = n * q * q;
    double chi2 = 0.0;
    const double obs[3] = {static_cast<double>(n0), static_cast<double>(n1),
                           static_cast<double>(n2)};
    const double exp_[3] = {e0, e1, e2};
    for (int k = 0; k < 3; ++k)
        if (exp_[k] > 1e-12) chi2 += (obs[k] - exp_[k]) * (obs[k] - exp_[k]) / exp_[k];
    return std::erfc(std::sqrt(chi2 / 2.0));
}

std::pair<GenotypeMatrix, QcReport> qc_filter(const GenotypeMatrix& g,
                                              const std::vector<bool>& control_mask,
                                              const QcThresholds& t) {
    Index n = g.n_samples();
    if (static_cast<Index>(control_mask.size()) != n)
        throw DimensionError("qc_filter: control mask length mismatch");
    bool hwe_enabled = t.hwe_p_floor > 0.0;
    Index n_controls = static_cast<Index>(std::count(control_mask.begin(), control_mask.end(), true));
    if (hwe_enabled && n_controls == 0)
        throw ParameterError("qc_filter: HWE enabled but no controls in the cohort");

    QcReport report;
    std::vector<Index> keep;
    for (Index j = 0; j < g.n_variants(); ++j) {
        const std::string& vid = g.variant_ids[static_cast<std::size_t>(j)];
        Index n_obs = 0;
        double sum = 0.0;
        for (Index i = 0; i < n; ++i) {
            double v = g.dosages(i, j);
            if (!is_missing(v)) {
                ++n_obs;
                sum += v;
            }
        }
        double missing_rate = 1.0 - static_cast<double>(n_obs) / static_cast<double>(n);
        if (missing_rate > t.max_missing_rate) {
            report.dropped.push_back({vid, DropReason::MissingRate, missing_rate});
            continue;
        }
        if (n_obs > 0) {
            double freq = sum / (2.0 * static_cast<double>(n_obs));
            double maf = std::min(freq, 1.0 - freq);
            if (maf < t.min_maf) {
                report.dropped.push_back({vid, DropReason::LowMaf, maf});
                continue;
            }
        }
        if (hwe_enabled) {
            Index counts[3] = {0, 0, 0};
            for (Index i = 0; i < n; ++i) {
                if (!control_mask[static_cast<std::size_t>(i)]) continue;
                double v = g.dosages(i, j);
                if (is_missing(v)) continue;
                long geno = std::lround(v);
                geno = std::clamp<long>(geno, 0, 2);
                ++counts[geno];
            }
            if (counts[0] + counts[1] + counts[2] > 0) {
                double p = hwe_chi2_pvalue(counts[0], counts[1], counts[2]);
                if (p < t.hwe_p_floor) {
                    report.dropped.push_back({vid, DropReason::HweFail, p});
                    continue;
                }
            }
        }
        keep.push_back(j);
    }

    GenotypeMatrix out;
    out.sample_ids = g.sample_ids;
    out.variant_ids.reserve(keep.size());
    out.dosages = Matrix(n, static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.variant_ids.push_back(g.variant_ids[static_cast<std::size_t>(keep[k])]);
        out.dosages.col(static_cast<Index>(k)) = g.dosages.col(keep[k]);
    }
    report.n_kept = static_cast<Index>(keep.size());
    return {std::move(out), std::move(report)};
}

GenotypeMatrix impute_mean(const GenotypeMatrix& g) {
    GenotypeMatrix out = g;
    for (Index j = 0; j < g.n_variants(); ++j) {
        Index n_obs = 0;
        double sum = 0.0;
        for (Index i = 0; i < g.n_samples(); ++i) {
            double v = g.dosages(i, j);
            if (!is_missing(v)) {
                ++n_obs;
                sum += v;
            }
        }
        if (n_obs == 0)
            throw DataError("impute_mean: variant " + g.variant_ids[static_cast<std::size_t>(j)] +
                            " has no observed values");
        if (n_obs == g.n_samples()) continue;
        double mean = sum / static_cast<double>(n_obs);
        for (Index i = 0; i < g.n_samples(); ++i)
            if (is_missing(out.dosages(i, j))) out.dosages(i, j) = mean;
    }
    return out;
}

Vector dichotomize_proxy(const Vector& scores, double threshold) {
    check_finite(scores, "dichotomize_proxy");
    Vector y(scores.size());
    for (Index i = 0; i < scores.size(); ++i) y[i] = scores[i] >= threshold ? 1.0 : 0.0;
    return y;
}

LabeledCohort age_filter(const LabeledCohort& c, double min_age) {
    if (!c.y_is_binary())
        throw DataError("age_filter: phenotype must be binary");
    if (!c.has_age())
        throw DataError("age_filter: cohort has no age column");
    std::vector<Index> keep;
    for (Index i = 0; i < c.n(); ++i) {
        if (c.y[i] == 0.0) {
            if (std::isnan(c.age[i]))
                throw DataError("age_filter: control '" +
                                c.g.sample_ids[static_cast<std::size_t>(i)] + "' has no age");
            if (c.age[i] < min_age) continue;
        }
        keep.push_back(i);
    }
    return subset(c, keep);
}

std::array<LabeledCohort, 3> stratified_split(const LabeledCohort& c, const SplitFractions& f,
                                              std::uint64_t seed) {
    const double fr[3] = {f.train, f.val, f.test};
    double sum = fr[0] + fr[1] + fr[2];
    if (!(fr[0] > 0.0 && fr[1] > 0.0 && fr[2] > 0.0) || std::abs(sum - 1.0) > 1e-9)
        throw ParameterError("stratified_split: fractions must be positive and sum to 1");

    // classes = distinct phenotype values, processed in ascending order
    std::vector<double> classes;
    for (Index i = 0; i < c.y.size(); ++i)
        if (std::find(classes.begin(), classes.end(), c.y[i]) == classes.end())
            classes.push_back(c.y[i]);
    std::sort(classes.begin(), classes.end());

    RngStream rng(seed);
    std::vector<Index> parts[3];
    for (double cls : classes) {
        std::vector<Index> rows;
        for (Index i = 0; i < c.y.size(); ++i)
            if (c.y[i] == cls) rows.push_back(i);
        if (rows.size() < 3)
            throw DataError("stratified_split: class " + std::to_string(cls) + " has " +
                            std::to_string(rows.size()) + " rows, fewer than the 3 parts");
        rng.shuffle(rows);

        // largest-remainder allocation keeps each part within +/-1 of fraction*n
        std::size_t n = rows.size();
        std::size_t counts[3];
        double rema[3];
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            double want = fr[p] * static_cast<double>(n);
            counts[p] = static_cast<std::size_t>(std::floor(want));
            rema[p] = want - std::floor(want);
            assigned += counts[p];
        }
        std::size_t leftover = n - assigned;
        std::array<int, 3> order = {0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rema[a] > rema[b]; });
        for (std::size_t k = 0; k < leftover; ++k) counts[order[k % 3]] += 1;

        std::size_t pos = 0;
        for (int p = 0; p < 3; ++p)
            for (std::size_t k = 0; k < counts[p]; ++k) parts[p].push_back(rows[pos++]);
    }

    std::array<LabeledCohort, 3> out;
    for (int p = 0; p < 3; ++p) {
        std::sort(parts[p].begin(), parts[p].end());
        out[static_cast<std::size_t>(p)] = subset(c, parts[p]);
    }
    return out;
}

const char* stratum_name(Stratum s) {
    switch (s) {
    case Stratum::EUR: return "EUR";
    case Stratum::AFR: return "AFR";
    case Stratum::AMR: return "AMR";
    case Stratum::EAS: return "EAS";
    case Stratum::SAS: return "SAS";
    case Stratum::MIX: return "MIX";
    }
    return "unknown";
}

Stratum ancestry_stratify(const Vector& proportions_row, double cutoff) {
    if (proportions_row.size() != kNumSuperPops)
        throw DimensionError("ancestry_stratify: expected 5 proportions");
    if (cutoff < 0.5)
        throw ParameterError("ancestry_stratify: cutoff below 0.5 is ambiguous");
    if (std::abs(proportions_row.sum() - 1.0) > 1e-6)
        throw DataError("ancestry_stratify: proportions do not sum to 1");
    for (Index k = 0; k < kNumSuperPops; ++k)
        if (proportions_row[k] > cutoff) return static_cast<Stratum>(k);
    return Stratum::MIX;
}

double row_population_variance(const Vector& proportions_row) {
    double k = static_cast<double>(proportions_row.size());
    double mean = proportions_row.sum() / k;
    return (proportions_row.array() - mean).square().sum() / k;
}

std::vector<Index> heterogeneity_order(const Matrix& proportions) {
    if (proportions.cols() < 2)
        throw ParameterError("heterogeneity_order: need at least 2 populations");
    Index n = proportions.rows();
    std::vector<double> var(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        var[static_cast<std::size_t>(i)] = row_population_variance(proportions.row(i).transpose());
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return var[static_cast<std::size_t>(a)] > var[static_cast<std::size_t>(b)];
    });
    return order;
}

} // namespace dispred::cohort
