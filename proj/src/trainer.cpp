#include "tcdesc/trainer.hpp"

#include "tcdesc/error.hpp"
#include "tcdesc/metrics.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

namespace tcdesc {

namespace {

using RowMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const Matrix>;

constexpr std::size_t kEvalNegativesPerAnchor = 8;

void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> bytes{};
    for (int b = 0; b < 4; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFFu);
    out.write(bytes.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), 4);
    if (!in) throw Error(ErrorCode::Io, "truncated model file");
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
    return v;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

EmbeddingNet::EmbeddingNet(std::vector<LayerShape> layers, Vector params) : layers_(std::move(layers)), params_(std::move(params)) {
    if (layers_.empty()) throw Error(ErrorCode::InvalidArgument, "an embedding net needs at least one layer");
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        if (s.in == 0 || s.out == 0) throw Error(ErrorCode::InvalidArgument, "layer dimensions must be positive");
        if (l > 0 && layers_[l - 1].out != s.in) throw Error(ErrorCode::ShapeMismatch, "consecutive layer shapes disagree");
        offsets_.push_back(offset);
        offset += s.out * s.in + s.out;
    }
    if (static_cast<std::size_t>(params_.size()) != offset) {
        throw Error(ErrorCode::LengthMismatch, "parameter vector does not match the layer shapes");
    }
}

EmbeddingNet EmbeddingNet::two_layer(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng) {
    std::vector<LayerShape> layers{{d_in, hidden, Activation::Tanh}, {hidden, d_out, Activation::Identity}};
    std::size_t total = 0;
    for (const auto& s : layers) total += s.out * s.in + s.out;
    Vector params = Vector::Zero(static_cast<Eigen::Index>(total));
    std::size_t offset = 0;
    for (const auto& s : layers) {
        const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        for (std::size_t w = 0; w < s.out * s.in; ++w) {
            params(static_cast<Eigen::Index>(offset + w)) = bound * (2.0 * rng.uniform() - 1.0);
        }
        offset += s.out * s.in + s.out;
    }
    return EmbeddingNet(std::move(layers), std::move(params));
}

Matrix EmbeddingNet::forward(const Matrix& x) const {
    Trace trace;
    return forward(x, trace);
}

Matrix EmbeddingNet::forward(const Matrix& x, Trace& trace) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
        throw Error(ErrorCode::ShapeMismatch, "input dimensionality does not match the net");
    }
    trace.inputs.clear();
    trace.outputs.clear();
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        const auto out = static_cast<Eigen::Index>(s.out);
        const auto in = static_cast<Eigen::Index>(s.in);
        const ConstRowMap weight(params_.data() + offsets_[l], out, in);
        const Eigen::Map<const Eigen::RowVectorXd> bias(params_.data() + offsets_[l] + s.out * s.in, out);
        trace.inputs.push_back(h);
        Matrix pre = h * weight.transpose();
        pre.rowwise() += bias;
        if (s.activation == Activation::Tanh) pre = pre.array().tanh().matrix();
        trace.outputs.push_back(pre);
        h = std::move(pre);
    }
    trace.norms = h.rowwise().norm();
    trace.result = h;
    for (Eigen::Index r = 0; r < h.rows(); ++r) trace.result.row(r) /= trace.norms(r);
    return trace.result;
}

void EmbeddingNet::backward(const Trace& trace, const Matrix& d_result, Vector& grad) const {
    if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
    // y = z/|z|  ⇒  ∂L/∂z = (g − y (y·g)) / |z|
    Matrix g(d_result.rows(), d_result.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double proj = trace.result.row(r).dot(d_result.row(r));
        g.row(r) = (d_result.row(r) - proj * trace.result.row(r)) / trace.norms(r);
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& s = layers_[l];
        const auto out = static_cast<Eigen::Index>(s.out);
        const auto in = static_cast<Eigen::Index>(s.in);
        if (s.activation == Activation::Tanh) {
            g = (g.array() * (1.0 - trace.outputs[l].array().square())).matrix();
        }
        RowMap d_weight(grad.data() + offsets_[l], out, in);
        Eigen::Map<Eigen::RowVectorXd> d_bias(grad.data() + offsets_[l] + s.out * s.in, out);
        d_weight.noalias() += g.transpose() * trace.inputs[l];
        d_bias += g.colwise().sum();
        if (l > 0) {
            const ConstRowMap weight(params_.data() + offsets_[l], out, in);
            g = g * weight;
        }
    }
}

void write_model(const std::filesystem::path& path, const EmbeddingNet& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write("TCM1", 4);
    put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& s : net.layers()) {
        put_u32(out, static_cast<std::uint32_t>(s.in));
        put_u32(out, static_cast<std::uint32_t>(s.out));
        put_u32(out, static_cast<std::uint32_t>(s.activation));
    }
    for (Eigen::Index i = 0; i < net.params().size(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(net.params()(i))));
    }
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

EmbeddingNet read_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string_view(magic.data(), 4) != "TCM1") throw Error(ErrorCode::Io, path.string() + " is not a TCM1 model");
    const auto count = get_u32(in);
    std::vector<LayerShape> layers(count);
    std::size_t total = 0;
    for (auto& s : layers) {
        s.in = get_u32(in);
        s.out = get_u32(in);
        const auto act = get_u32(in);
        if (act > 1) throw Error(ErrorCode::Io, "unknown activation code in model file");
        s.activation = static_cast<Activation>(act);
        total += s.in * s.out + s.out;
    }
    Vector params(static_cast<Eigen::Index>(total));
    for (Eigen::Index i = 0; i < params.size(); ++i) params(i) = static_cast<double>(std::bit_cast<float>(get_u32(in)));
    return EmbeddingNet(std::move(layers), std::move(params));
}

SyntheticPairSet SyntheticPairSet::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > size()) throw Error(ErrorCode::IndexOutOfBatch, "slice exceeds the pair set");
    const auto b = static_cast<Eigen::Index>(begin);
    const auto c = static_cast<Eigen::Index>(count);
    return {raw_a.middleRows(b, c), raw_p.middleRows(b, c), params};
}

SyntheticPairSet generate_pairs(const PairGenParams& params) {
    if (!(params.sigma >= 0.0) || !(params.spread >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "sigma and spread must be non-negative");
    }
    if (params.n_clusters < 2) throw Error(ErrorCode::InvalidArgument, "need at least two clusters");
    if (params.d_in < 2) throw Error(ErrorCode::InvalidArgument, "d_in must be at least 2");

    Rng rng(params.seed);
    const auto d = static_cast<Eigen::Index>(params.d_in);
    const auto n = static_cast<Eigen::Index>(params.n_total);
    Matrix centers(static_cast<Eigen::Index>(params.n_clusters), d);
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        double norm = 0.0;
        while (norm < kZeroRowThreshold) {
            for (Eigen::Index j = 0; j < d; ++j) centers(c, j) = rng.normal();
            norm = centers.row(c).norm();
        }
        centers.row(c) /= norm;
    }

    const auto q = static_cast<Eigen::Index>(params.latent_dim == 0 ? params.d_in : params.latent_dim);
    if (q > d) throw Error(ErrorCode::InvalidArgument, "latent_dim must not exceed d_in");
    ColMatrix basis = ColMatrix::Identity(d, d);
    if (params.latent_dim != 0) {
        ColMatrix gauss(d, q);
        for (Eigen::Index r = 0; r < d; ++r) {
            for (Eigen::Index c = 0; c < q; ++c) gauss(r, c) = rng.normal();
        }
        basis = Eigen::HouseholderQR<ColMatrix>(gauss).householderQ() * ColMatrix::Identity(d, q);
    }

    SyntheticPairSet out{Matrix(n, d), Matrix(n, d), params};
    Eigen::RowVectorXd latent(d);
    Vector z(q);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(rng.below(params.n_clusters));
        for (Eigen::Index j = 0; j < q; ++j) z(j) = params.spread * rng.normal();
        latent = centers.row(c) + (basis * z).transpose();
        for (Eigen::Index j = 0; j < d; ++j) out.raw_a(i, j) = latent(j) + params.sigma * rng.normal();
        for (Eigen::Index j = 0; j < d; ++j) out.raw_p(i, j) = latent(j) + params.sigma * rng.normal();
    }
    return out;
}

void TrainConfig::validate() const {
    loss.validate();
    if (batch_size < 2 * loss.k) throw Error(ErrorCode::InvalidArgument, "batch_size must be at least 2k");
    if (!(lr_start >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lr_start must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidArgument, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weight_decay must be non-negative");
}

BatchGradient batch_gradient(const EmbeddingNet& net, const Matrix& raw_a, const Matrix& raw_p, const LossConfig& cfg,
                             DegeneracyPolicy policy) {
    EmbeddingNet::Trace trace_a;
    EmbeddingNet::Trace trace_p;
    Matrix a = net.forward(raw_a, trace_a);
    Matrix p = net.forward(raw_p, trace_p);
    auto lg = loss_gradient(DescriptorBatch::unchecked(std::move(a), std::move(p)), cfg, policy);
    BatchGradient out;
    out.grad = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
    net.backward(trace_a, lg.gradient.d_a, out.grad);
    net.backward(trace_p, lg.gradient.d_p, out.grad);
    out.report = std::move(lg.report);
    return out;
}

EpochLog evaluate_net(const EmbeddingNet& net, const SyntheticPairSet& eval, const TrainConfig& cfg) {
    const std::size_t total = eval.size();
    if (total < 2) throw Error(ErrorCode::InvalidArgument, "evaluation set needs at least two pairs");
    const Matrix a = net.forward(eval.raw_a);
    const Matrix p = net.forward(eval.raw_p);

    EpochLog log;
    const std::size_t chunk = std::min(cfg.batch_size, total);
    const std::size_t chunks = total / chunk;
    for (std::size_t c = 0; c < chunks; ++c) {
        const auto begin = static_cast<Eigen::Index>(c * chunk);
        const auto rows = static_cast<Eigen::Index>(chunk);
        const auto report = tcdesc_loss(DescriptorBatch::unchecked(a.middleRows(begin, rows), p.middleRows(begin, rows)), cfg.loss);
        log.mean_de += report.mean_euclidean();
        log.mean_dt += report.mean_topology();
        log.mean_m_over_k += report.mean_match_fraction(cfg.loss.k);
    }
    log.mean_de /= static_cast<double>(chunks);
    log.mean_dt /= static_cast<double>(chunks);
    log.mean_m_over_k /= static_cast<double>(chunks);

    std::vector<VerificationSample> samples;
    const std::size_t shifts = std::min(kEvalNegativesPerAnchor, total - 1);
    samples.reserve(total * (1 + shifts));
    for (std::size_t i = 0; i < total; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        samples.push_back({euclidean_distance(a.row(ii), p.row(ii)), true});
        for (std::size_t s = 1; s <= shifts; ++s) {
            const auto jj = static_cast<Eigen::Index>((i + s) % total);
            samples.push_back({euclidean_distance(a.row(ii), p.row(jj)), false});
        }
    }
    log.fpr95 = fpr95(samples);
    return log;
}

TrainResult train(EmbeddingNet net, const SyntheticPairSet& data, const SyntheticPairSet& eval, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (net.output_dim() <= cfg.loss.k) throw Error(ErrorCode::KNotLessThanD, "net output_dim must exceed k");
    if (static_cast<std::size_t>(data.raw_a.cols()) != net.input_dim()) {
        throw Error(ErrorCode::ShapeMismatch, "training data dimensionality does not match the net");
    }
    const std::size_t n = cfg.batch_size;
    const std::size_t batches = data.size() / n;
    if (batches == 0) throw Error(ErrorCode::InvalidArgument, "training set is smaller than one batch");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Vector velocity = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
    const std::size_t total_steps = cfg.epochs * batches;
    std::size_t step = 0;

    TrainResult result{net, {}};
    const auto d_in = static_cast<Eigen::Index>(net.input_dim());
    Matrix batch_a(static_cast<Eigen::Index>(n), d_in);
    Matrix batch_p(static_cast<Eigen::Index>(n), d_in);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            for (std::size_t r = 0; r < n; ++r) {
                const auto src = static_cast<Eigen::Index>(order[b * n + r]);
                batch_a.row(static_cast<Eigen::Index>(r)) = data.raw_a.row(src);
                batch_p.row(static_cast<Eigen::Index>(r)) = data.raw_p.row(src);
            }
            auto bg = batch_gradient(result.net, batch_a, batch_p, cfg.loss);
            if (!std::isfinite(bg.report.loss) || !all_finite(bg.grad)) {
                throw Error(ErrorCode::Divergence, "non-finite loss at epoch " + std::to_string(epoch), epoch);
            }
            epoch_loss += bg.report.loss;

            const double lr = cfg.lr_start * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
            auto& params = result.net.params();
            velocity = cfg.momentum * velocity + bg.grad + cfg.weight_decay * params;
            params -= lr * velocity;
            ++step;
        }

        EpochLog log = evaluate_net(result.net, eval, cfg);
        log.epoch = epoch;
        log.loss = epoch_loss / static_cast<double>(batches);
        if (!std::isfinite(log.loss) || !all_finite(result.net.params())) {
            throw Error(ErrorCode::Divergence, "non-finite parameters at epoch " + std::to_string(epoch), epoch);
        }
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    return result;
}

}  // namespace tcdesc
