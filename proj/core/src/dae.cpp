#include "dispred/dae.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "dispred/contrastive.hpp"
#include "dispred/evalkit.hpp"
#include "dispred/predictors.hpp"
#include "dispred/tensor_io.hpp"

namespace dispred::dae {

namespace {
constexpr char kMagic[] = "DPDAECK1";
constexpr std::uint32_t kVersion = 1;
} // namespace

Index DisentangledModel::parameter_count() const {
    return fc1.parameter_count() + fc2.parameter_count() + fc31.parameter_count() +
           fc32.parameter_count() + fc4.parameter_count() + fc5.parameter_count() +
           fc6.parameter_count();
}

DisentangledModel DisentangledModel::build(Index input_dim, Index z_d_dim, Index z_a_dim,
                                           RngStream& rng) {
    if (input_dim < 1 || z_d_dim < 1 || z_a_dim < 1)
        throw ParameterError("DisentangledModel::build: dims must be >= 1");
    DisentangledModel m;
    m.input_dim = input_dim;
    m.z_d_dim = z_d_dim;
    m.z_a_dim = z_a_dim;
    m.fc1 = nn::AffineLayer::init(input_dim, 400, nn::Activation::ReLU, rng);
    m.fc2 = nn::AffineLayer::init(400, 200, nn::Activation::ReLU, rng);
    m.fc31 = nn::AffineLayer::init(200, z_d_dim, nn::Activation::Identity, rng);
    m.fc32 = nn::AffineLayer::init(200, z_a_dim, nn::Activation::Identity, rng);
    m.fc4 = nn::AffineLayer::init(z_d_dim + z_a_dim, 200, nn::Activation::ReLU, rng);
    m.fc5 = nn::AffineLayer::init(200, 400, nn::Activation::ReLU, rng);
    m.fc6 = nn::AffineLayer::init(400, input_dim, nn::Activation::ReLU, rng);
    return m;
}

std::pair<Matrix, Matrix> DisentangledModel::encode(const Matrix& x) const {
    Matrix h = nn::forward(fc1, x);
    h = nn::forward(fc2, h);
    Matrix z_d = nn::forward(fc31, h);
    Matrix z_a = nn::forward(fc32, h);
    return {std::move(z_a), std::move(z_d)};
}

Matrix DisentangledModel::decode(const Matrix& z) const {
    Matrix h = nn::forward(fc4, z);
    h = nn::forward(fc5, h);
    return nn::forward(fc6, h);
}

Matrix DisentangledModel::reconstruct(const Matrix& x) const {
    auto [z_a, z_d] = encode(x);
    Matrix z(x.rows(), z_d_dim + z_a_dim);
    z.leftCols(z_d_dim) = z_d;
    z.rightCols(z_a_dim) = z_a;
    return decode(z);
}

void TrainConfig::validate() const {
    if (!(tau > 0.0))
        throw ParameterError("train config: tau must be positive");
    if (alpha_d < 0.0 || alpha_a < 0.0)
        throw ParameterError("train config: alpha_d and alpha_a must be >= 0");
    if (!(0 <= ramp_start && ramp_start < ramp_end && ramp_end <= epochs))
        throw ParameterError("train config: need 0 <= N1 < N2 <= N");
    if (batch_size < 2)
        throw ParameterError("train config: batch_size must be >= 2");
    if (!(lr > 0.0))
        throw ParameterError("train config: lr must be positive");
    if (val_interval < 0)
        throw ParameterError("train config: val_interval must be >= 0");
}

double ramp_weight(int epoch, int ramp_start, int ramp_end, double alpha) {
    if (ramp_end == ramp_start)
        throw ParameterError("ramp_weight: N1 == N2");
    if (epoch <= ramp_start) return 0.0;
    if (epoch >= ramp_end) return alpha;
    return alpha * static_cast<double>(epoch - ramp_start) /
           static_cast<double>(ramp_end - ramp_start);
}

std::string history_to_tsv(const TrainHistory& h) {
    std::ostringstream out;
    out << "epoch\trecon_loss\tsc_d_loss\tsc_a_loss\tweight_d\tweight_a\tval_auc\n";
    char buf[40];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (std::size_t e = 0; e < h.size(); ++e) {
        out << e + 1 << '\t' << fmt(h[e].recon_loss) << '\t' << fmt(h[e].sc_d_loss) << '\t'
            << fmt(h[e].sc_a_loss) << '\t' << fmt(h[e].weight_d) << '\t' << fmt(h[e].weight_a)
            << '\t' << (h[e].val_auc ? fmt(*h[e].val_auc) : "NA") << '\n';
    }
    return out.str();
}

namespace {

std::vector<int> ancestry_codes(const std::vector<std::string>& ancestry, const char* who) {
    std::map<std::string, int> code;
    for (const auto& a : ancestry) {
        if (a.empty())
            throw DataError(std::string(who) + ": missing ancestry label");
        code.emplace(a, 0);
    }
    int next = 0;
    for (auto& [name, c] : code) c = next++;
    std::vector<int> out;
    out.reserve(ancestry.size());
    for (const auto& a : ancestry) out.push_back(code.at(a));
    return out;
}

} // namespace

std::pair<DisentangledModel, TrainHistory> train_dae(const cohort::LabeledCohort& train,
                                                     const cohort::LabeledCohort& val,
                                                     const TrainConfig& cfg, Index z_d_dim,
                                                     Index z_a_dim) {
    cfg.validate();
    Index n = train.n();
    if (n < 2)
        throw DataError("train_dae: need at least 2 training rows");
    if (!train.y_is_binary())
        throw DataError("train_dae: phenotype labels must be binary");
    if (!train.has_ancestry())
        throw DataError("train_dae: ancestry labels are required for training");
    if (train.g.has_missing())
        throw DataError("train_dae: dosages contain missing values; impute first");

    std::vector<int> anc = ancestry_codes(train.ancestry, "train_dae");
    std::vector<int> phe(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) phe[static_cast<std::size_t>(i)] = static_cast<int>(train.y[i]);

    RngStream root(cfg.seed);
    RngStream init_rng = root.substream(0);
    RngStream shuffle_rng = root.substream(1);

    DisentangledModel m = DisentangledModel::build(train.g.n_variants(), z_d_dim, z_a_dim, init_rng);

    nn::AdamConfig adam{cfg.lr};
    nn::LayerAdam a1 = nn::LayerAdam::like(m.fc1, adam), a2 = nn::LayerAdam::like(m.fc2, adam),
                  a31 = nn::LayerAdam::like(m.fc31, adam), a32 = nn::LayerAdam::like(m.fc32, adam),
                  a4 = nn::LayerAdam::like(m.fc4, adam), a5 = nn::LayerAdam::like(m.fc5, adam),
                  a6 = nn::LayerAdam::like(m.fc6, adam);

    contrastive::ScParams sc{cfg.tau};
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});

    TrainHistory history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double w_d = ramp_weight(epoch, cfg.ramp_start, cfg.ramp_end, cfg.alpha_d);
        double w_a = ramp_weight(epoch, cfg.ramp_start, cfg.ramp_end, cfg.alpha_a);

        shuffle_rng.shuffle(idx);
        double recon_sum = 0.0, sc_d_sum = 0.0, sc_a_sum = 0.0;
        Index recon_rows = 0;
        Index n_batches = 0;

        for (Index start = 0; start < n; start += cfg.batch_size) {
            Index bsz = std::min(cfg.batch_size, n - start);
            if (bsz < 2) continue; // too small to duplicate

            Matrix xb(bsz, m.input_dim);
            std::vector<int> yb(static_cast<std::size_t>(bsz)), ab(static_cast<std::size_t>(bsz));
            for (Index i = 0; i < bsz; ++i) {
                Index r = idx[static_cast<std::size_t>(start + i)];
                xb.row(i) = train.g.dosages.row(r);
                yb[static_cast<std::size_t>(i)] = phe[static_cast<std::size_t>(r)];
                ab[static_cast<std::size_t>(i)] = anc[static_cast<std::size_t>(r)];
            }

            contrastive::MultiViewBatch mv = contrastive::duplicate_batch(xb, yb);
            const Matrix& x2 = mv.z; // duplicated inputs, 2*bsz rows
            std::vector<int> anc2(ab);
            anc2.insert(anc2.end(), ab.begin(), ab.end());

            nn::ForwardCache c1, c2, c31, c32, c4, c5, c6;
            Matrix h1 = nn::forward(m.fc1, x2, &c1);
            Matrix h2 = nn::forward(m.fc2, h1, &c2);
            Matrix z_d = nn::forward(m.fc31, h2, &c31);
            Matrix z_a = nn::forward(m.fc32, h2, &c32);
            Matrix z(z_d.rows(), z_d_dim + z_a_dim);
            z.leftCols(z_d_dim) = z_d;
            z.rightCols(z_a_dim) = z_a;
            Matrix d4 = nn::forward(m.fc4, z, &c4);
            Matrix d5 = nn::forward(m.fc5, d4, &c5);
            Matrix xhat = nn::forward(m.fc6, d5, &c6);

            double recon = nn::mse(x2, xhat);
            auto [sc_d_value, sc_d_grad] = contrastive::sc_loss({z_d, mv.labels, mv.half_n}, sc);
            auto [sc_a_value, sc_a_grad] = contrastive::sc_loss({z_a, anc2, mv.half_n}, sc);

            double total = recon + w_d * sc_d_value + w_a * sc_a_value;
            if (!std::isfinite(total))
                throw NumericError("train_dae: non-finite loss at epoch " + std::to_string(epoch));

            Matrix dxhat = nn::mse_grad(x2, xhat);
            nn::LayerGrads g6 = nn::backward(m.fc6, c6, dxhat);
            nn::LayerGrads g5 = nn::backward(m.fc5, c5, g6.dx);
            nn::LayerGrads g4 = nn::backward(m.fc4, c4, g5.dx);
            Matrix dz_d = g4.dx.leftCols(z_d_dim);
            Matrix dz_a = g4.dx.rightCols(z_a_dim);
            if (w_d != 0.0) dz_d += w_d * sc_d_grad;
            if (w_a != 0.0) dz_a += w_a * sc_a_grad;
            nn::LayerGrads g31 = nn::backward(m.fc31, c31, dz_d);
            nn::LayerGrads g32 = nn::backward(m.fc32, c32, dz_a);
            Matrix dh2 = g31.dx + g32.dx;
            nn::LayerGrads g2 = nn::backward(m.fc2, c2, dh2);
            nn::LayerGrads g1 = nn::backward(m.fc1, c1, g2.dx);

            a1.step(m.fc1, g1);
            a2.step(m.fc2, g2);
            a31.step(m.fc31, g31);
            a32.step(m.fc32, g32);
            a4.step(m.fc4, g4);
            a5.step(m.fc5, g5);
            a6.step(m.fc6, g6);

            recon_sum += recon * static_cast<double>(x2.rows());
            recon_rows += x2.rows();
            sc_d_sum += sc_d_value;
            sc_a_sum += sc_a_value;
            ++n_batches;
        }

        EpochRecord rec;
        rec.recon_loss = recon_rows > 0 ? recon_sum / static_cast<double>(recon_rows) : 0.0;
        rec.sc_d_loss = n_batches > 0 ? sc_d_sum / static_cast<double>(n_batches) : 0.0;
        rec.sc_a_loss = n_batches > 0 ? sc_a_sum / static_cast<double>(n_batches) : 0.0;
        rec.weight_d = w_d;
        rec.weight_a = w_a;

        if (cfg.val_interval > 0 && epoch % cfg.val_interval == 0 && val.n() > 0 &&
            val.y_is_binary()) {
            auto [tza, tzd] = m.encode(train.g.dosages);
            (void)tza;
            predictors::LinearModel head = predictors::fit_linear_head(tzd, train.y);
            auto [vza, vzd] = m.encode(val.g.dosages);
            (void)vza;
            Vector scores = head.predict(vzd);
            bool has_case = (val.y.array() == 1.0).any();
            bool has_control = (val.y.array() == 0.0).any();
            if (has_case && has_control) rec.val_auc = evalkit::auc(scores, val.y);
        }
        history.push_back(std::move(rec));
    }

    return {std::move(m), std::move(history)};
}

namespace {

NamedTensor tensor_of(const std::string& name, const Matrix& w) { return {name, w}; }
NamedTensor tensor_of(const std::string& name, const Vector& b) {
    Matrix m(b.size(), 1);
    m.col(0) = b;
    return {name, m};
}

} // namespace

void save(const DisentangledModel& model, const std::string& path) {
    std::vector<NamedTensor> tensors;
    auto add = [&](const char* name, const nn::AffineLayer& l) {
        tensors.push_back(tensor_of(std::string(name) + ".W", l.W));
        tensors.push_back(tensor_of(std::string(name) + ".b", l.b));
    };
    add("fc1", model.fc1);
    add("fc2", model.fc2);
    add("fc31", model.fc31);
    add("fc32", model.fc32);
    add("fc4", model.fc4);
    add("fc5", model.fc5);
    add("fc6", model.fc6);
    write_tensor_file(path, kMagic, kVersion,
                      {static_cast<std::uint32_t>(model.input_dim),
                       static_cast<std::uint32_t>(model.z_d_dim),
                       static_cast<std::uint32_t>(model.z_a_dim)},
                      tensors);
}

DisentangledModel load(const std::string& path) {
    TensorFile f = read_tensor_file(path, kMagic, kVersion);
    if (f.meta.size() != 3)
        throw CheckpointError("checkpoint header corrupt: " + path);

    DisentangledModel m;
    m.input_dim = static_cast<Index>(f.meta[0]);
    m.z_d_dim = static_cast<Index>(f.meta[1]);
    m.z_a_dim = static_cast<Index>(f.meta[2]);

    std::map<std::string, const Matrix*> by_name;
    for (const auto& t : f.tensors) by_name[t.name] = &t.value;
    auto take = [&](const std::string& name, Index rows, Index cols, nn::Activation act,
                    nn::AffineLayer& l) {
        auto wi = by_name.find(name + ".W");
        auto bi = by_name.find(name + ".b");
        if (wi == by_name.end() || bi == by_name.end())
            throw CheckpointError("checkpoint missing layer " + name + ": " + path);
        if (wi->second->rows() != rows || wi->second->cols() != cols ||
            bi->second->rows() != rows || bi->second->cols() != 1)
            throw CheckpointError("checkpoint shape corrupt for layer " + name + ": " + path);
        l.W = *wi->second;
        l.b = bi->second->col(0);
        l.act = act;
    };
    take("fc1", 400, m.input_dim, nn::Activation::ReLU, m.fc1);
    take("fc2", 200, 400, nn::Activation::ReLU, m.fc2);
    take("fc31", m.z_d_dim, 200, nn::Activation::Identity, m.fc31);
    take("fc32", m.z_a_dim, 200, nn::Activation::Identity, m.fc32);
    take("fc4", 200, m.z_d_dim + m.z_a_dim, nn::Activation::ReLU, m.fc4);
    take("fc5", 400, 200, nn::Activation::ReLU, m.fc5);
    take("fc6", m.input_dim, 400, nn::Activation::ReLU, m.fc6);
    return m;
}

} // namespace dispred::dae
