#include "tcdesc/ablation.hpp"
#include "tcdesc/config.hpp"
#include "tcdesc/error.hpp"
#include "tcdesc/grad.hpp"
#include "tcdesc/metrics.hpp"
#include "tcdesc/topology.hpp"
#include "tcdesc/trainer.hpp"
#include "tcdesc/weights.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

using namespace tcdesc;
using Json = nlohmann::ordered_json;

namespace {

struct DescOptions {
    std::string desc;
    bool normalize = false;
    std::string model;
};

struct KindOptions {
    std::string kind = "lc";
    double t = 1.0;
    double ridge = LinearCombination{}.ridge_eps;
};

void add_desc(CLI::App* cmd, DescOptions& o) {
    cmd->add_option("--desc", o.desc, "TCD1 descriptor file")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--normalize", o.normalize, "normalize rows instead of requiring unit norm");
    cmd->add_option("--model", o.model, "TCM1 model applied to the rows first")->check(CLI::ExistingFile);
}

void add_kind(CLI::App* cmd, KindOptions& o) {
    cmd->add_option("--kind", o.kind, "weight kind: hard|proxy|heat|heat:<t>|lc")->capture_default_str();
    cmd->add_option("--t", o.t, "heat-kernel temperature")->capture_default_str();
    cmd->add_option("--ridge", o.ridge, "linear-combination ridge epsilon")->capture_default_str();
}

DescriptorBatch load_batch(const DescOptions& o) {
    auto raw = read_descriptor_file(o.desc);
    if (!o.model.empty()) {
        const auto net = read_model(o.model);
        if (static_cast<std::size_t>(raw.a.cols()) != net.input_dim()) {
            throw Error(ErrorCode::ShapeMismatch, "descriptor dimensionality does not match the model input");
        }
        return DescriptorBatch::from_unit(net.forward(raw.a), net.forward(raw.p));
    }
    return o.normalize ? DescriptorBatch::from_raw(raw.a, raw.p) : DescriptorBatch::from_unit(raw.a, raw.p);
}

// Output goes to `path` when set, else stdout.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Json epoch_json(const EpochLog& log) {
    return {{"epoch", log.epoch},       {"loss", log.loss},
            {"mean_dE", log.mean_de},   {"mean_dT", log.mean_dt},
            {"mean_m_over_k", log.mean_m_over_k}, {"fpr95", log.fpr95}};
}

void write_log_header(std::ostream& out) { out << "epoch,loss,mean_dE,mean_dT,mean_m_over_k,fpr95\n"; }

void write_log_row(std::ostream& out, const EpochLog& log) {
    out << log.epoch << ',' << fmt(log.loss) << ',' << fmt(log.mean_de) << ',' << fmt(log.mean_dt) << ','
        << fmt(log.mean_m_over_k) << ',' << fmt(log.fpr95) << '\n'
        << std::flush;
}

int cmd_weights(const DescOptions& d, const KindOptions& ko, std::size_t k, const std::string& set,
                const std::string& out_path) {
    const auto batch = load_batch(d);
    validate_k(batch.n(), batch.d(), k);
    const auto kind = parse_weight_kind(ko.kind, ko.t, ko.ridge);
    const Matrix& x = set == "p" ? batch.p() : batch.a();
    const auto dist = pairwise_distances(x);
    Output out(out_path);
    out.stream() << "center_index,neighbor_index,weight\n";
    for (std::size_t i = 0; i < batch.n(); ++i) {
        const auto nb = knn(x, dist, i, k);
        const auto w = compute_weights(kind, x.row(static_cast<Eigen::Index>(i)).transpose(), nb);
        for (std::size_t j = 0; j < nb.k(); ++j) {
            out.stream() << i << ',' << nb.neighbor_indices[j] << ',' << fmt(w.weights(static_cast<Eigen::Index>(j)))
                         << '\n';
        }
    }
    return 0;
}

int cmd_topo_dist(const DescOptions& d, const KindOptions& ko, std::size_t k, const std::string& out_path) {
    const auto batch = load_batch(d);
    const auto report = batch_topology_distance(batch, k, parse_weight_kind(ko.kind, ko.t, ko.ridge));
    Output out(out_path);
    out.stream() << "i,d_topology\n";
    for (std::size_t i = 0; i < report.per_pair.size(); ++i) out.stream() << i << ',' << fmt(report.per_pair[i]) << '\n';
    out.stream() << "mean," << fmt(report.mean) << '\n';
    return 0;
}

int cmd_loss(const DescOptions& d, const KindOptions& ko, LossConfig cfg, const std::string& lambda,
             const std::string& out_path) {
    const auto batch = load_batch(d);
    cfg.weight_kind = parse_weight_kind(ko.kind, ko.t, ko.ridge);
    cfg.lambda_mode = parse_lambda_mode(lambda);
    const auto report = tcdesc_loss(batch, cfg);
    Output out(out_path);
    for (const auto& p : report.per_pair) {
        const Json line = {{"i", p.i},
                           {"d_euclidean", p.d_euclidean},
                           {"d_topology", p.d_topology},
                           {"lambda", p.lambda},
                           {"matches", p.matches},
                           {"d_positive", p.d_positive},
                           {"negative_index", p.negative.index},
                           {"negative_direction",
                            p.negative.direction == NegativeDirection::AnchorToPositive ? "a->p" : "p->a"},
                           {"d_negative", p.negative.distance},
                           {"hinge", std::max(0.0, p.hinge_argument)}};
        out.stream() << line.dump() << '\n';
    }
    const Json summary = {{"loss", report.loss},
                          {"mean_dE", report.mean_euclidean()},
                          {"mean_dT", report.mean_topology()},
                          {"mean_m_over_k", report.mean_match_fraction(cfg.k)}};
    out.stream() << summary.dump() << '\n';
    return 0;
}

struct GradcheckOptions {
    std::size_t n = 12;
    std::size_t d = 8;
    std::size_t k = 3;
    std::uint64_t seed = 0;
    double gamma = 1.0;
    double margin = 1.0;
    std::string lambda = "adaptive";
    double h = 1e-5;
    double tol = 1e-4;
    double min_gap = 0.0;  // 0 → 10h
    std::size_t instances = 1;
};

int cmd_gradcheck(const GradcheckOptions& o, const KindOptions& ko) {
    LossConfig cfg;
    cfg.k = o.k;
    cfg.gamma = o.gamma;
    cfg.margin = o.margin;
    cfg.weight_kind = parse_weight_kind(ko.kind, ko.t, ko.ridge);
    cfg.lambda_mode = parse_lambda_mode(o.lambda);
    cfg.validate();
    const double min_gap = o.min_gap > 0.0 ? o.min_gap : 10.0 * o.h;
    Rng rng(derive_seed(o.seed, kGradcheckStream));
    double worst_abs = 0.0;
    double worst_rel = 0.0;
    bool passed = true;
    for (std::size_t inst = 0; inst < o.instances; ++inst) {
        const auto instance = smooth_random_instance(o.n, o.d, cfg, rng, min_gap);
        const auto analytic = loss_gradient(instance.batch, cfg).gradient;
        const auto r = compare_gradient(instance.batch, cfg, analytic, o.h, o.tol);
        std::cout << "instance " << inst << " draws=" << instance.draws << " gap=" << fmt(instance.gaps.min()) << ' '
                  << r.describe() << '\n';
        worst_abs = std::max(worst_abs, r.max_abs);
        worst_rel = std::max(worst_rel, r.max_rel);
        passed = passed && r.passed;
    }
    std::cout << "max_abs=" << fmt(worst_abs) << " max_rel=" << fmt(worst_rel) << ' ' << (passed ? "PASS" : "FAIL")
              << '\n';
    return passed ? 0 : 3;
}

int cmd_train(const std::string& config, const std::string& model_out, const std::string& log_out) {
    const auto cfg = ExperimentConfig::load(config);
    std::unique_ptr<std::ofstream> log;
    if (!log_out.empty()) {
        log = std::make_unique<std::ofstream>(log_out);
        if (!*log) throw Error(ErrorCode::Io, "cannot write '" + log_out + "'");
        write_log_header(*log);
    }
    const auto result = run_experiment(cfg, [&](const EpochLog& e) {
        if (log) write_log_row(*log, e);
    });
    if (!model_out.empty()) write_model(model_out, result.net);
    std::cout << (result.log.empty() ? Json::object() : epoch_json(result.log.back())).dump() << '\n';
    return 0;
}

int cmd_eval(const DescOptions& d, std::size_t k) {
    const auto report = evaluate_batch(load_batch(d), k);
    const Json out = {{"fpr95", report.fpr95},
                      {"matching_score", report.matching_score},
                      {"mean_m_over_k", report.mean_m_over_k},
                      {"mean_topology_distance", report.mean_topology_distance}};
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_ablate(const std::string& config, const std::string& out_path, std::optional<std::size_t> threads) {
    const auto cfg = ExperimentConfig::load(config);
    const std::size_t cap = thread_cap_from_env();
    Output out(out_path);
    const auto summary = run_ablation(cfg, out.stream(), threads ? std::min(*threads, cap) : cap);
    std::cerr << summary.rows.size() << " cells, " << summary.config_errors << " config errors, "
              << summary.numerical_errors << " numerical errors\n";
    return summary.exit_code();
}

int cmd_synth(std::size_t n, std::size_t d, std::uint64_t seed, double sigma, double spread, bool raw,
              const std::string& out_path) {
    PairGenParams params;
    params.n_total = n;
    params.d_in = d;
    params.sigma = sigma;
    params.spread = spread;
    params.seed = derive_seed(seed, kDataStream);
    const auto pairs = generate_pairs(params);
    if (raw) {
        write_descriptor_file(out_path, pairs.raw_a, pairs.raw_p);
    } else {
        write_descriptor_file(out_path, normalize_rows(pairs.raw_a), normalize_rows(pairs.raw_p));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topology-consistent descriptor learning toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    DescOptions desc;
    KindOptions kind;
    std::size_t k = 16;
    std::string out_path;

    auto* weights = app.add_subcommand("weights", "topology weights of every center, CSV");
    add_desc(weights, desc);
    add_kind(weights, kind);
    std::string set = "a";
    weights->add_option("--k", k, "neighbors per center")->capture_default_str();
    weights->add_option("--set", set, "descriptor set: a|p")->check(CLI::IsMember({"a", "p"}))->capture_default_str();
    weights->add_option("--out", out_path, "output CSV (default stdout)");

    auto* topo = app.add_subcommand("topo-dist", "per-pair topology distance, CSV with a final mean row");
    add_desc(topo, desc);
    add_kind(topo, kind);
    topo->add_option("--k", k, "neighbors per center")->capture_default_str();
    topo->add_option("--out", out_path, "output CSV (default stdout)");

    auto* loss = app.add_subcommand("loss", "per-pair loss diagnostics, JSON lines");
    add_desc(loss, desc);
    add_kind(loss, kind);
    LossConfig loss_cfg;
    std::string lambda = "adaptive";
    loss->add_option("--k", loss_cfg.k, "neighbors per center")->capture_default_str();
    loss->add_option("--gamma", loss_cfg.gamma, "adaptive-lambda exponent")->capture_default_str();
    loss->add_option("--margin", loss_cfg.margin, "triplet margin")->capture_default_str();
    std::optional<double> fixed_lambda;
    auto* lambda_opt = loss->add_option("--lambda", lambda, "adaptive|adaptive-mean|fixed:<v>")->capture_default_str();
    loss->add_option("--fixed-lambda", fixed_lambda, "fixed lambda value (same as --lambda fixed:<v>)")
        ->excludes(lambda_opt);
    loss->add_option("--out", out_path, "output file (default stdout)");

    auto* gradcheck = app.add_subcommand("gradcheck", "analytic gradient against central differences");
    GradcheckOptions gc;
    add_kind(gradcheck, kind);
    gradcheck->add_option("--n", gc.n, "pairs")->capture_default_str();
    gradcheck->add_option("--d", gc.d, "dimension")->capture_default_str();
    gradcheck->add_option("--k", gc.k, "neighbors")->capture_default_str();
    gradcheck->add_option("--seed", gc.seed, "seed")->capture_default_str();
    gradcheck->add_option("--gamma", gc.gamma, "adaptive-lambda exponent")->capture_default_str();
    gradcheck->add_option("--margin", gc.margin, "triplet margin")->capture_default_str();
    gradcheck->add_option("--lambda", gc.lambda, "adaptive|adaptive-mean|fixed:<v>")->capture_default_str();
    gradcheck->add_option("--fd-step", gc.h, "central-difference step")->capture_default_str();
    gradcheck->add_option("--tol", gc.tol, "max relative deviation")->capture_default_str();
    gradcheck->add_option("--min-gap", gc.min_gap, "smoothness gap required of an instance (default 10 fd-step)");
    gradcheck->add_option("--instances", gc.instances, "random instances to check")->capture_default_str();

    auto* train_cmd = app.add_subcommand("train", "train the embedding net on the synthetic benchmark");
    std::string config;
    std::string model_out;
    std::string log_out;
    train_cmd->add_option("--config", config, "experiment config (.json or key = value)")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out", model_out, "TCM1 model output");
    train_cmd->add_option("--log", log_out, "per-epoch CSV log");

    auto* eval = app.add_subcommand("eval", "FPR95, matching score and neighborhood metrics, JSON");
    add_desc(eval, desc);
    eval->add_option("--k", k, "neighbors per center")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "grid over k, gamma, weight kind and lambda mode, CSV");
    std::optional<std::size_t> threads;
    ablate->add_option("--config", config, "experiment config")->required()->check(CLI::ExistingFile);
    ablate->add_option("--out", out_path, "output CSV (default stdout)");
    ablate->add_option("--threads", threads, "worker threads (capped by TCDESC_THREADS)");

    auto* synth = app.add_subcommand("synth", "write a synthetic TCD1 descriptor file");
    std::size_t synth_n = 128;
    std::size_t synth_d = 32;
    std::uint64_t synth_seed = 1;
    double sigma = PairGenParams{}.sigma;
    double spread = PairGenParams{}.spread;
    bool raw = false;
    synth->add_option("--n", synth_n, "pairs")->capture_default_str();
    synth->add_option("--d", synth_d, "dimension")->capture_default_str();
    synth->add_option("--seed", synth_seed, "seed")->capture_default_str();
    synth->add_option("--sigma", sigma, "per-view noise")->capture_default_str();
    synth->add_option("--spread", spread, "within-cluster spread")->capture_default_str();
    synth->add_flag("--raw", raw, "skip row normalization");
    synth->add_option("--out", out_path, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*weights) return cmd_weights(desc, kind, k, set, out_path);
        if (*topo) return cmd_topo_dist(desc, kind, k, out_path);
        if (*loss) {
            if (fixed_lambda) lambda = "fixed:" + std::to_string(*fixed_lambda);
            return cmd_loss(desc, kind, loss_cfg, lambda, out_path);
        }
        if (*gradcheck) return cmd_gradcheck(gc, kind);
        if (*train_cmd) return cmd_train(config, model_out, log_out);
        if (*eval) return cmd_eval(desc, k);
        if (*ablate) return cmd_ablate(config, out_path, threads);
        if (*synth) return cmd_synth(synth_n, synth_d, synth_seed, sigma, spread, raw, out_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
