#include "tcdesc/ablation.hpp"

#include "tcdesc/error.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <optional>
#include <thread>

namespace tcdesc {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// CSV-safe: commas and quotes would break the one-row-per-cell layout.
std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '"', '\'');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

std::string_view to_string(CellStatus status) {
    switch (status) {
        case CellStatus::Ok: return "ok";
        case CellStatus::ConfigError: return "config_error";
        case CellStatus::NumericalError: return "numerical_error";
    }
    return "unknown";
}

std::vector<AblationCell> expand_grid(const AblationGrid& grid) {
    std::vector<AblationCell> cells;
    for (auto k : grid.k) {
        for (auto g : grid.gamma) {
            for (const auto& kind : grid.kinds) {
                for (const auto& lambda : grid.lambdas) {
                    cells.push_back({cells.size(), k, g, kind, lambda});
                }
            }
        }
    }
    return cells;
}

AblationRow run_cell(const ExperimentConfig& base, const ExperimentData& data, const EmbeddingNet& init,
                     const AblationCell& cell) {
    AblationRow row;
    row.cell = cell;
    TrainConfig cfg = base.train;
    cfg.loss.k = cell.k;
    cfg.loss.gamma = cell.gamma;
    cfg.loss.weight_kind = cell.kind;
    cfg.loss.lambda_mode = cell.lambda;
    if (base.ablate.epochs != 0) cfg.epochs = base.ablate.epochs;
    cfg.seed = derive_seed(base.seed, kTrainStream);
    row.epochs = cfg.epochs;
    try {
        auto result = train(init, data.train, data.eval, cfg);
        if (!result.log.empty()) row.final = result.log.back();
    } catch (const Error& e) {
        row.status = exit_code_for(e.code()) == 3 ? CellStatus::NumericalError : CellStatus::ConfigError;
        row.message = e.what();
    }
    return row;
}

std::string ablation_csv_header() {
    return "cell,k,gamma,kind,lambda_mode,status,epochs,loss,mean_dE,mean_dT,mean_m_over_k,fpr95,message";
}

std::string to_csv_line(const AblationRow& row) {
    const auto& c = row.cell;
    const auto& f = row.final;
    std::string line = std::to_string(c.index) + "," + std::to_string(c.k) + "," + fmt(c.gamma) + "," +
                       to_string(c.kind) + "," + to_string(c.lambda) + "," + std::string(to_string(row.status)) +
                       "," + std::to_string(row.epochs);
    for (double v : {f.loss, f.mean_de, f.mean_dt, f.mean_m_over_k, f.fpr95}) line += "," + fmt(v);
    return line + "," + sanitize(row.message);
}

int AblationSummary::exit_code() const noexcept {
    if (numerical_errors > 0) return 3;
    if (config_errors > 0) return 2;
    return 0;
}

AblationSummary run_ablation(const ExperimentConfig& cfg, std::ostream& csv, std::size_t threads) {
    const auto cells = expand_grid(cfg.ablate);
    const auto data = make_experiment_data(cfg);
    const auto init = make_experiment_net(cfg);

    std::vector<std::optional<AblationRow>> done(cells.size());
    std::size_t next_to_write = 0;
    std::mutex mutex;
    std::atomic<std::size_t> next_cell{0};

    csv << ablation_csv_header() << '\n' << std::flush;
    auto worker = [&] {
        for (std::size_t i = next_cell++; i < cells.size(); i = next_cell++) {
            auto row = run_cell(cfg, data, init, cells[i]);
            std::lock_guard lock(mutex);
            done[i] = std::move(row);
            while (next_to_write < cells.size() && done[next_to_write]) {
                csv << to_csv_line(*done[next_to_write]) << '\n' << std::flush;
                ++next_to_write;
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(cells.size(), 1));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    AblationSummary summary;
    for (auto& row : done) {
        if (row->status == CellStatus::ConfigError) ++summary.config_errors;
        if (row->status == CellStatus::NumericalError) ++summary.numerical_errors;
        summary.rows.push_back(std::move(*row));
    }
    return summary;
}

std::size_t thread_cap_from_env() {
    if (const char* env = std::getenv("TCDESC_THREADS")) {
        std::size_t v = 0;
        const auto* end = env + std::strlen(env);
        const auto [ptr, ec] = std::from_chars(env, end, v);
        if (ec == std::errc{} && ptr == end && v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace tcdesc
