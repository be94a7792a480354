#pragma once

#include "tcdesc/loss.hpp"
#include "tcdesc/trainer.hpp"
#include "tcdesc/weights.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tcdesc {

// `section.key` → raw value text. Lists are stored comma-separated.
using FlatConfig = std::map<std::string, std::string>;

// Flat key/value text: optional `[section]` headers, `key = value` lines,
// `#` comments, quoted or bare strings, `[a, b, c]` lists.
FlatConfig parse_flat_config(const std::string& text);
// JSON with at most one level of nesting; objects become sections.
FlatConfig parse_json_config(const std::string& text);
// Picks the parser by extension (.json → JSON, anything else → flat).
FlatConfig load_flat_config(const std::filesystem::path& path);

struct NetConfig {
    std::size_t hidden = 64;
    std::size_t output_dim = 32;
};

struct AblationGrid {
    std::vector<std::size_t> k{std::begin(kNeighborGrid), std::end(kNeighborGrid)};
    std::vector<double> gamma{std::begin(kGammaGrid), std::end(kGammaGrid)};
    std::vector<WeightKind> kinds;
    std::vector<LambdaMode> lambdas;
    // 0 keeps train.epochs.
    std::size_t epochs = 0;

    // Hard, hard proxy, the heat-kernel presets and linear combination;
    // adaptive λ plus the fixed grid.
    static AblationGrid standard();
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    PairGenParams data;
    std::size_t n_eval = 512;
    NetConfig net;
    TrainConfig train;
    AblationGrid ablate = AblationGrid::standard();

    // Rejects unknown keys and malformed values with ErrorCode::Config.
    static ExperimentConfig from_flat(const FlatConfig& flat);
    static ExperimentConfig load(const std::filesystem::path& path);
};

// Independent sub-streams of the single experiment seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum SeedStream : std::uint64_t { kDataStream = 1, kNetStream = 2, kTrainStream = 3, kGradcheckStream = 4 };

struct ExperimentData {
    SyntheticPairSet train;
    SyntheticPairSet eval;
};

// Generates `data.n_total + n_eval` pairs and splits them.
ExperimentData make_experiment_data(const ExperimentConfig& cfg);
EmbeddingNet make_experiment_net(const ExperimentConfig& cfg);
// Data, net and trainer seeds all derived from cfg.seed.
TrainResult run_experiment(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace tcdesc
