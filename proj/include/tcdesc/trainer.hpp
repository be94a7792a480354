#pragma once

#include "tcdesc/descriptor.hpp"
#include "tcdesc/grad.hpp"
#include "tcdesc/loss.hpp"
#include "tcdesc/random.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace tcdesc {

enum class Activation : std::uint32_t { Identity = 0, Tanh = 1 };

struct LayerShape {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::Identity;
};

// Stack of affine layers followed by row normalization to unit length.
// Parameters live in one flat vector: per layer, the out×in weight matrix in
// row-major order followed by the out-vector bias.
class EmbeddingNet {
public:
    EmbeddingNet(std::vector<LayerShape> layers, Vector params);

    // affine → tanh → affine → normalize, Glorot-uniform weights, zero biases.
    static EmbeddingNet two_layer(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng);

    struct Trace {
        std::vector<Matrix> inputs;  // input of each layer
        std::vector<Matrix> outputs; // post-activation output of each layer
        Vector norms;                // row norms before normalization
        Matrix result;               // unit rows
    };

    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, Trace& trace) const;
    // ∂L/∂params given ∂L/∂result. Accumulates into `grad`.
    void backward(const Trace& trace, const Matrix& d_result, Vector& grad) const;

    const std::vector<LayerShape>& layers() const noexcept { return layers_; }
    const Vector& params() const noexcept { return params_; }
    Vector& params() noexcept { return params_; }
    std::size_t param_count() const noexcept { return static_cast<std::size_t>(params_.size()); }
    std::size_t input_dim() const noexcept { return layers_.front().in; }
    std::size_t output_dim() const noexcept { return layers_.back().out; }

private:
    std::vector<LayerShape> layers_;
    std::vector<std::size_t> offsets_;
    Vector params_;
};

// TCM1 model file: "TCM1", u32 layer count, then per layer u32 in, u32 out,
// u32 activation; then every parameter as float32, all little-endian.
void write_model(const std::filesystem::path& path, const EmbeddingNet& net);
EmbeddingNet read_model(const std::filesystem::path& path);

struct PairGenParams {
    std::size_t n_total = 2048;
    std::size_t d_in = 32;
    std::size_t n_clusters = 16;
    // Per-coordinate standard deviation of the independent noise on each view.
    double sigma = 0.1;
    // Standard deviation of latent points around their cluster center, per
    // coordinate of the latent subspace.
    double spread = 0.1;
    // Dimension of the random subspace (shared by all clusters) that latent
    // offsets live in; 0 means the full input space.
    std::size_t latent_dim = 0;
    std::uint64_t seed = 0;
};

struct SyntheticPairSet {
    Matrix raw_a;
    Matrix raw_p;
    PairGenParams params;

    std::size_t size() const noexcept { return static_cast<std::size_t>(raw_a.rows()); }
    // Rows [begin, begin + count).
    SyntheticPairSet slice(std::size_t begin, std::size_t count) const;
};

// Cluster centers uniform on the unit sphere of R^d_in; each latent point is
// a center plus an offset B z with z ~ N(0, spread² I) and B an orthonormal
// d_in×latent_dim basis; each view adds its own N(0, sigma²) per coordinate.
SyntheticPairSet generate_pairs(const PairGenParams& params);

struct TrainConfig {
    LossConfig loss;
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    double lr_start = 0.1;  // decayed linearly to 0 over all steps
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;       // mean training loss over the epoch's batches
    double mean_de = 0.0;    // evaluation set, mean Euclidean positive distance
    double mean_dt = 0.0;    // evaluation set, mean topology distance
    double mean_m_over_k = 0.0;
    double fpr95 = 0.0;
};

struct TrainResult {
    EmbeddingNet net;
    std::vector<EpochLog> log;
};

// Loss and ∂loss/∂params for one batch of raw pairs pushed through the net.
struct BatchGradient {
    LossReport report;
    Vector grad;
};
BatchGradient batch_gradient(const EmbeddingNet& net, const Matrix& raw_a, const Matrix& raw_p, const LossConfig& cfg,
                             DegeneracyPolicy policy = DegeneracyPolicy::Permissive);

// Evaluation metrics on held-out pairs: per-chunk (batch_size rows) loss
// diagnostics plus FPR95 over matches and 8 shifted non-matches per anchor.
EpochLog evaluate_net(const EmbeddingNet& net, const SyntheticPairSet& eval, const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochLog&)>;

// SGD with momentum and weight decay; throws Divergence on a non-finite loss.
TrainResult train(EmbeddingNet net, const SyntheticPairSet& data, const SyntheticPairSet& eval, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace tcdesc
