#pragma once

#include "tcdesc/config.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace tcdesc {

struct AblationCell {
    std::size_t index = 0;
    std::size_t k = 16;
    double gamma = 1.0;
    WeightKind kind = LinearCombination{};
    LambdaMode lambda = Adaptive{};
};

enum class CellStatus { Ok, ConfigError, NumericalError };
std::string_view to_string(CellStatus status);

struct AblationRow {
    AblationCell cell;
    CellStatus status = CellStatus::Ok;
    std::string message;  // empty when Ok
    std::size_t epochs = 0;
    EpochLog final;       // last epoch; zeros unless Ok
};

// Cartesian product in order k, gamma, kind, lambda (lambda fastest).
std::vector<AblationCell> expand_grid(const AblationGrid& grid);

// Trains one cell on shared data and a shared initial net. Configuration and
// numerical failures are caught and recorded in the row.
AblationRow run_cell(const ExperimentConfig& base, const ExperimentData& data, const EmbeddingNet& init,
                     const AblationCell& cell);

std::string ablation_csv_header();
std::string to_csv_line(const AblationRow& row);

struct AblationSummary {
    std::vector<AblationRow> rows;
    std::size_t config_errors = 0;
    std::size_t numerical_errors = 0;

    // 3 on any numerical failure, otherwise 2 on any configuration failure.
    int exit_code() const noexcept;
};

// Runs every cell on up to `threads` workers and writes the header then one
// line per cell, in cell order, flushing after each line.
AblationSummary run_ablation(const ExperimentConfig& cfg, std::ostream& csv, std::size_t threads = 1);

// TCDESC_THREADS if set to a positive integer, else the hardware concurrency
// (at least 1).
std::size_t thread_cap_from_env();

}  // namespace tcdesc
