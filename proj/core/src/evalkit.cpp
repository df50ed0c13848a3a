#include "dispred/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace dispred::evalkit {

using json = nlohmann::ordered_json;

namespace {

void require_binary(const Vector& labels, const char* who) {
    for (Index i = 0; i < labels.size(); ++i)
        if (labels[i] != 0.0 && labels[i] != 1.0)
            throw DataError(std::string(who) + ": labels must be in {0,1}");
}

// nullopt instead of throwing when a class is empty
std::optional<double> auc_or_undefined(const Vector& scores, const Vector& labels) {
    Index n = scores.size();
    Index n_case = 0;
    for (Index i = 0; i < n; ++i)
        if (labels[i] == 1.0) ++n_case;
    Index n_control = n - n_case;
    if (n_case == 0 || n_control == 0) return std::nullopt;

    // average ranks, Mann-Whitney U
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return scores[a] < scores[b]; });
    std::vector<double> rank(static_cast<std::size_t>(n));
    Index i = 0;
    while (i < n) {
        Index j = i;
        while (j + 1 < n && scores[order[static_cast<std::size_t>(j + 1)]] ==
                                scores[order[static_cast<std::size_t>(i)]])
            ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0; // ranks are 1-based
        for (Index k = i; k <= j; ++k) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = avg;
        i = j + 1;
    }
    double rank_sum_cases = 0.0;
    for (Index r = 0; r < n; ++r)
        if (labels[r] == 1.0) rank_sum_cases += rank[static_cast<std::size_t>(r)];
    double u = rank_sum_cases -
               static_cast<double>(n_case) * (static_cast<double>(n_case) + 1.0) / 2.0;
    return u / (static_cast<double>(n_case) * static_cast<double>(n_control));
}

} // namespace

double auc(const Vector& scores, const Vector& labels) {
    if (scores.size() != labels.size())
        throw DimensionError("auc: scores and labels length mismatch");
    require_binary(labels, "auc");
    check_finite(scores, "auc: scores");
    auto v = auc_or_undefined(scores, labels);
    if (!v)
        throw DataError("auc: undefined, labels contain a single class");
    return *v;
}

MetricsReport metrics_by_stratum(const std::string& model, const Vector& scores,
                                 const Vector& labels, const std::vector<std::string>& strata) {
    Index n = scores.size();
    if (labels.size() != n || static_cast<Index>(strata.size()) != n)
        throw DimensionError("metrics_by_stratum: length mismatch");
    require_binary(labels, "metrics_by_stratum");
    check_finite(scores, "metrics_by_stratum: scores");

    MetricsReport rep;
    rep.model = model;
    rep.n = n;
    for (Index i = 0; i < n; ++i)
        if (labels[i] == 1.0) ++rep.n_case;
    rep.global_auc = auc(scores, labels);

    std::vector<std::string> names;
    for (const auto& s : strata)
        if (std::find(names.begin(), names.end(), s) == names.end()) names.push_back(s);

    for (const auto& name : names) {
        std::vector<Index> rows;
        for (Index i = 0; i < n; ++i)
            if (strata[static_cast<std::size_t>(i)] == name) rows.push_back(i);
        StratumMetrics sm;
        sm.name = name;
        sm.n = static_cast<Index>(rows.size());
        Vector s(sm.n), l(sm.n);
        for (Index i = 0; i < sm.n; ++i) {
            s[i] = scores[rows[static_cast<std::size_t>(i)]];
            l[i] = labels[rows[static_cast<std::size_t>(i)]];
            if (l[i] == 1.0) ++sm.n_case;
        }
        sm.n_control = sm.n - sm.n_case;
        sm.auc = auc_or_undefined(s, l);
        rep.strata.push_back(std::move(sm));
    }
    return rep;
}

std::string metrics_to_json(const MetricsReport& report) {
    json j;
    j["model"] = report.model;
    j["global"] = {{"n", report.n}, {"n_case", report.n_case}, {"auc", report.global_auc}};
    j["strata"] = json::array();
    for (const auto& s : report.strata) {
        json e;
        e["name"] = s.name;
        e["n"] = s.n;
        e["n_case"] = s.n_case;
        e["n_control"] = s.n_control;
        if (s.auc) e["auc"] = *s.auc;
        else e["auc"] = nullptr;
        j["strata"].push_back(e);
    }
    return j.dump(2) + "\n";
}

HetSweepResult het_sweep(const std::vector<std::pair<std::string, Vector>>& scores_by_model,
                         const Vector& labels, const std::vector<Index>& order, Index window,
                         Index stride) {
    Index n = labels.size();
    if (window < 1 || stride < 1)
        throw ParameterError("het_sweep: window and stride must be >= 1");
    if (window > n)
        throw ParameterError("het_sweep: window " + std::to_string(window) + " exceeds n " +
                             std::to_string(n));
    if (static_cast<Index>(order.size()) != n)
        throw DimensionError("het_sweep: order must cover all samples");
    require_binary(labels, "het_sweep");
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (Index r : order) {
        if (r < 0 || r >= n || seen[static_cast<std::size_t>(r)])
            throw ParameterError("het_sweep: order is not a permutation");
        seen[static_cast<std::size_t>(r)] = true;
    }
    for (const auto& [name, s] : scores_by_model)
        if (s.size() != n)
            throw DimensionError("het_sweep: scores for '" + name + "' length mismatch");

    HetSweepResult res;
    res.window = window;
    res.stride = stride;
    Index n_windows = (n - window) / stride + 1;
    for (Index w = 0; w < n_windows; ++w) res.starts.push_back(w * stride);

    for (const auto& [name, s] : scores_by_model) {
        res.model_names.push_back(name);
        std::vector<std::optional<double>> row;
        for (Index start : res.starts) {
            Vector ws(window), wl(window);
            for (Index k = 0; k < window; ++k) {
                Index r = order[static_cast<std::size_t>(start + k)];
                ws[k] = s[r];
                wl[k] = labels[r];
            }
            row.push_back(auc_or_undefined(ws, wl));
        }
        res.auc.push_back(std::move(row));
    }
    return res;
}

std::string HetSweepResult::to_tsv() const {
    std::ostringstream out;
    out << "window_index\tstart\tend";
    for (const auto& m : model_names) out << '\t' << m;
    out << '\n';
    char buf[40];
    for (std::size_t w = 0; w < starts.size(); ++w) {
        out << w << '\t' << starts[w] << '\t' << starts[w] + window;
        for (std::size_t m = 0; m < auc.size(); ++m) {
            if (auc[m][w]) {
                std::snprintf(buf, sizeof(buf), "%.17g", *auc[m][w]);
                out << '\t' << buf;
            } else {
                out << "\tNA";
            }
        }
        out << '\n';
    }
    return out.str();
}

Matrix pca2(const Matrix& z) {
    Index n = z.rows();
    if (n < 2)
        throw ParameterError("pca2: need at least 2 rows");
    check_finite(z, "pca2");

    Eigen::RowVectorXd mean = z.colwise().mean();
    Eigen::MatrixXd centered = z.rowwise() - mean;
    Matrix coords = Matrix::Zero(n, 2);
    if (centered.norm() == 0.0) return coords;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Index n_comp = std::min<Index>(2, svd.matrixV().cols());
    for (Index c = 0; c < n_comp; ++c) {
        Eigen::VectorXd v = svd.matrixV().col(c);
        Index peak = 0;
        for (Index k = 1; k < v.size(); ++k)
            if (std::abs(v[k]) > std::abs(v[peak])) peak = k;
        if (v[peak] < 0.0) v = -v;
        coords.col(c) = centered * v;
    }
    return coords;
}

std::string embeddings_tsv(const std::vector<std::string>& sample_ids, const Matrix& z_a,
                           const Matrix& z_d, const std::vector<std::string>& ancestry) {
    Index n = static_cast<Index>(sample_ids.size());
    if (z_a.rows() != n || z_d.rows() != n)
        throw DimensionError("embeddings_tsv: row count mismatch");
    if (!ancestry.empty() && static_cast<Index>(ancestry.size()) != n)
        throw DimensionError("embeddings_tsv: ancestry length mismatch");

    Matrix pa = pca2(z_a);
    Matrix pd = pca2(z_d);

    std::ostringstream out;
    out << "sample_id";
    for (Index j = 0; j < z_a.cols(); ++j) out << "\tz_a_" << j + 1;
    for (Index j = 0; j < z_d.cols(); ++j) out << "\tz_d_" << j + 1;
    out << "\tpca_a_1\tpca_a_2\tpca_d_1\tpca_d_2\tancestry_label\n";
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        out << '\t' << buf;
    };
    for (Index i = 0; i < n; ++i) {
        out << sample_ids[static_cast<std::size_t>(i)];
        for (Index j = 0; j < z_a.cols(); ++j) put(z_a(i, j));
        for (Index j = 0; j < z_d.cols(); ++j) put(z_d(i, j));
        put(pa(i, 0));
        put(pa(i, 1));
        put(pd(i, 0));
        put(pd(i, 1));
        out << '\t' << (ancestry.empty() || ancestry[static_cast<std::size_t>(i)].empty()
                            ? "NA"
                            : ancestry[static_cast<std::size_t>(i)])
            << '\n';
    }
    return out.str();
}

} // namespace dispred::evalkit
