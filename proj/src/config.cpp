#include "tcdesc/config.hpp"

#include "tcdesc/error.hpp"

#include "json.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace tcdesc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

// Drops a trailing `# ...` that is not inside quotes.
std::string strip_comment(const std::string& line) {
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::Config, what); }

void insert_unique(FlatConfig& out, const std::string& key, std::string value) {
    if (!out.emplace(key, std::move(value)).second) config_error("duplicate key '" + key + "'");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) config_error("empty list element in '" + value + "'");
        items.push_back(item);
    }
    if (items.empty()) config_error("empty list");
    return items;
}

std::string json_scalar(const nlohmann::json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    config_error("key '" + key + "' must hold a scalar or a list of scalars");
}

std::string json_value(const nlohmann::json& v, const std::string& key) {
    if (!v.is_array()) return json_scalar(v, key);
    std::string joined;
    for (const auto& item : v) {
        if (!joined.empty()) joined += ',';
        joined += json_scalar(item, key);
    }
    return joined;
}

class Reader {
public:
    explicit Reader(const FlatConfig& flat) : flat_(flat) {}

    const std::string* find(const std::string& key) {
        seen_.insert(key);
        const auto it = flat_.find(key);
        return it == flat_.end() ? nullptr : &it->second;
    }

    void size(const std::string& key, std::size_t& out) {
        if (const auto* v = find(key)) out = parse_size(key, *v);
    }

    void u64(const std::string& key, std::uint64_t& out) {
        if (const auto* v = find(key)) out = parse_u64(key, *v);
    }

    void real(const std::string& key, double& out) {
        if (const auto* v = find(key)) out = parse_real(key, *v);
    }

    void reject_unknown() const {
        for (const auto& [key, value] : flat_) {
            if (!seen_.contains(key)) config_error("unknown key '" + key + "'");
        }
    }

    static std::uint64_t parse_u64(const std::string& key, const std::string& v) {
        std::uint64_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size()) {
            config_error("key '" + key + "' expects a non-negative integer, got '" + v + "'");
        }
        return out;
    }

    static std::size_t parse_size(const std::string& key, const std::string& v) {
        return static_cast<std::size_t>(parse_u64(key, v));
    }

    static double parse_real(const std::string& key, const std::string& v) {
        std::size_t used = 0;
        double out = 0.0;
        try {
            out = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) config_error("key '" + key + "' expects a number, got '" + v + "'");
        return out;
    }

private:
    const FlatConfig& flat_;
    std::set<std::string> seen_;
};

// Library argument errors surface as configuration errors here.
template <class F>
auto as_config(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Config) throw;
        config_error("key '" + key + "': " + e.what());
    }
}

}  // namespace

FlatConfig parse_flat_config(const std::string& text) {
    FlatConfig out;
    std::string section;
    std::stringstream ss(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(ss, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (line.front() == '[' && eq == std::string::npos) {
            if (line.back() != ']') config_error("line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) config_error("line " + std::to_string(line_no) + ": empty section name");
            continue;
        }
        if (eq == std::string::npos) config_error("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) config_error("line " + std::to_string(line_no) + ": empty key");
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']') config_error("line " + std::to_string(line_no) + ": unterminated list");
            std::string joined;
            for (const auto& item : split_list(value.substr(1, value.size() - 2))) {
                if (!joined.empty()) joined += ',';
                joined += unquote(item);
            }
            value = joined;
        } else {
            value = unquote(value);
        }
        insert_unique(out, section.empty() ? key : section + "." + key, value);
    }
    return out;
}

FlatConfig parse_json_config(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        config_error(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) config_error("JSON config must be an object");
    FlatConfig out;
    for (const auto& [key, value] : doc.items()) {
        if (value.is_object()) {
            for (const auto& [sub, v] : value.items()) {
                if (v.is_object()) config_error("key '" + key + "." + sub + "' nests too deeply");
                insert_unique(out, key + "." + sub, json_value(v, key + "." + sub));
            }
        } else {
            insert_unique(out, key, json_value(value, key));
        }
    }
    return out;
}

FlatConfig load_flat_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return path.extension() == ".json" ? parse_json_config(ss.str()) : parse_flat_config(ss.str());
}

AblationGrid AblationGrid::standard() {
    AblationGrid grid;
    grid.kinds.push_back(Hard{});
    grid.kinds.push_back(HardProxy{});
    for (double t : kHeatKernelPresets) grid.kinds.push_back(HeatKernel{t});
    grid.kinds.push_back(LinearCombination{});
    grid.lambdas.push_back(Adaptive{});
    for (double l : kFixedLambdaGrid) grid.lambdas.push_back(Fixed{l});
    return grid;
}

ExperimentConfig ExperimentConfig::from_flat(const FlatConfig& flat) {
    ExperimentConfig cfg;
    Reader r(flat);

    r.u64("seed", cfg.seed);

    r.size("data.n_total", cfg.data.n_total);
    r.size("data.n_eval", cfg.n_eval);
    r.size("data.d_in", cfg.data.d_in);
    r.size("data.clusters", cfg.data.n_clusters);
    r.real("data.sigma", cfg.data.sigma);
    r.real("data.spread", cfg.data.spread);
    r.size("data.latent_dim", cfg.data.latent_dim);

    r.size("net.hidden", cfg.net.hidden);
    r.size("net.output_dim", cfg.net.output_dim);

    auto& loss = cfg.train.loss;
    r.real("loss.margin", loss.margin);
    r.size("loss.k", loss.k);
    r.real("loss.gamma", loss.gamma);
    double t = 1.0;
    double ridge = LinearCombination{}.ridge_eps;
    r.real("loss.t", t);
    r.real("loss.ridge", ridge);
    const auto* kind = r.find("loss.kind");
    loss.weight_kind = as_config("loss.kind", [&] { return parse_weight_kind(kind ? *kind : "lc", t, ridge); });
    if (const auto* lambda = r.find("loss.lambda")) {
        loss.lambda_mode = as_config("loss.lambda", [&] { return parse_lambda_mode(*lambda); });
    }

    r.size("train.epochs", cfg.train.epochs);
    r.size("train.batch_size", cfg.train.batch_size);
    r.real("train.lr", cfg.train.lr_start);
    r.real("train.momentum", cfg.train.momentum);
    r.real("train.weight_decay", cfg.train.weight_decay);

    if (const auto* v = r.find("ablate.k")) {
        cfg.ablate.k.clear();
        for (const auto& item : split_list(*v)) cfg.ablate.k.push_back(Reader::parse_size("ablate.k", item));
    }
    if (const auto* v = r.find("ablate.gamma")) {
        cfg.ablate.gamma.clear();
        for (const auto& item : split_list(*v)) cfg.ablate.gamma.push_back(Reader::parse_real("ablate.gamma", item));
    }
    if (const auto* v = r.find("ablate.kinds")) {
        cfg.ablate.kinds.clear();
        for (const auto& item : split_list(*v)) {
            cfg.ablate.kinds.push_back(as_config("ablate.kinds", [&] { return parse_weight_kind(item, t, ridge); }));
        }
    }
    if (const auto* v = r.find("ablate.lambdas")) {
        cfg.ablate.lambdas.clear();
        for (const auto& item : split_list(*v)) {
            cfg.ablate.lambdas.push_back(as_config("ablate.lambdas", [&] { return parse_lambda_mode(item); }));
        }
    }
    r.size("ablate.epochs", cfg.ablate.epochs);

    r.reject_unknown();

    as_config("train", [&] {
        cfg.train.validate();
        return 0;
    });
    if (cfg.n_eval < 2) config_error("data.n_eval must be at least 2");
    if (cfg.data.n_total < cfg.train.batch_size) config_error("data.n_total must hold at least one batch");
    if (cfg.net.hidden < 1) config_error("net.hidden must be at least 1");
    if (cfg.net.output_dim <= loss.k) config_error("net.output_dim must exceed loss.k");
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return from_flat(load_flat_config(path));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + stream * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

ExperimentData make_experiment_data(const ExperimentConfig& cfg) {
    PairGenParams params = cfg.data;
    params.n_total = cfg.data.n_total + cfg.n_eval;
    params.seed = derive_seed(cfg.seed, kDataStream);
    const auto all = generate_pairs(params);
    return {all.slice(0, cfg.data.n_total), all.slice(cfg.data.n_total, cfg.n_eval)};
}

EmbeddingNet make_experiment_net(const ExperimentConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, kNetStream));
    return EmbeddingNet::two_layer(cfg.data.d_in, cfg.net.hidden, cfg.net.output_dim, rng);
}

TrainResult run_experiment(const ExperimentConfig& cfg, const EpochCallback& on_epoch) {
    const auto data = make_experiment_data(cfg);
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = derive_seed(cfg.seed, kTrainStream);
    return train(make_experiment_net(cfg), data.train, data.eval, train_cfg, on_epoch);
}

}  // namespace tcdesc
