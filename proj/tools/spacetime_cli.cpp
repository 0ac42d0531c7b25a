// Command-line front end. Everything goes through the C interface in
// spacetime/spacetime.h.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spacetime/spacetime.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kManifestVersion = 1;

// Carries a library status up to main(), which maps it onto an exit code.
struct CallError : std::runtime_error {
    st_status status;
    CallError(st_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(st_status status, const std::string& context) {
    if (status != ST_OK) throw CallError(status, context + ": " + st_last_error());
}

struct DatasetFree {
    void operator()(st_dataset* d) const { st_dataset_free(d); }
};
struct ModelFree {
    void operator()(st_model* m) const { st_model_free(m); }
};
using DatasetPtr = std::unique_ptr<st_dataset, DatasetFree>;
using ModelPtr = std::unique_ptr<st_model, ModelFree>;

std::string take_string(char* s) {
    std::string out = s == nullptr ? "" : s;
    st_string_free(s);
    return out;
}

DatasetPtr read_dataset(const fs::path& path) {
    st_dataset* d = nullptr;
    check(st_dataset_read(path.string().c_str(), &d), "reading " + path.string());
    return DatasetPtr(d);
}

DatasetPtr generate_split(const json& config, const std::string& split) {
    st_dataset* d = nullptr;
    check(st_dataset_generate(config.dump().c_str(), split.c_str(), &d), "generating " + split + " split");
    return DatasetPtr(d);
}

json dataset_config(const st_dataset* d) {
    char* info = nullptr;
    check(st_dataset_info(d, &info), "reading dataset header");
    return json::parse(take_string(info)).at("config");
}

std::size_t closed_form_params(const json& model_config) {
    std::size_t n = 0;
    check(st_param_count(model_config.dump().c_str(), &n), "counting parameters");
    return n;
}

// ---- shared option groups -------------------------------------------------

struct DataOptions {
    std::size_t n_particles = 5;
    std::size_t seq_len = 10;
    std::size_t horizon = 500;
    std::size_t train_count = 1000;
    std::size_t val_count = 200;
    std::size_t test_count = 200;
    double noise_variance = 0.0;
    double dt = 1e-3;
    double softening = 0.1;
    std::size_t stride = 1;
    std::uint64_t seed = 42;

    void add(CLI::App& app) {
        app.add_option("-N,--particles", n_particles, "Particles per system")->capture_default_str();
        app.add_option("-L,--seq-len", seq_len, "Input frames per trajectory")->capture_default_str();
        app.add_option("-H,--horizon", horizon, "Frames between the last input and the target")->capture_default_str();
        app.add_option("--train-count", train_count, "Training trajectories (full scale: 16000)")
            ->capture_default_str();
        app.add_option("--val-count", val_count, "Validation trajectories (full scale: 2000)")->capture_default_str();
        app.add_option("--test-count", test_count, "Test trajectories (full scale: 2000)")->capture_default_str();
        app.add_option("--noise-variance", noise_variance, "Gaussian noise variance on positions and velocities")
            ->capture_default_str();
        app.add_option("--dt", dt, "Leapfrog step")->capture_default_str();
        app.add_option("--softening", softening, "Coulomb softening length squared")->capture_default_str();
        app.add_option("--stride", stride, "Integrator steps between stored frames")->capture_default_str();
        app.add_option("--seed", seed, "Master seed for initial conditions and noise")->capture_default_str();
    }

    json to_json() const {
        return json{{"n_particles", n_particles}, {"seq_len", seq_len},     {"horizon", horizon},
                    {"train_count", train_count}, {"val_count", val_count}, {"test_count", test_count},
                    {"noise_variance", noise_variance}, {"dt", dt},         {"softening", softening},
                    {"stride", stride},           {"seed", seed}};
    }
};

struct ModelOptions {
    std::string model = "set";
    std::optional<std::size_t> feature_dim;
    std::optional<std::size_t> hidden_dim;
    std::optional<std::size_t> egcl_layers;
    std::size_t blocks = 3;
    bool equivariant = true;
    bool adjacency = false;
    bool spatial = true;
    bool temporal = true;
    bool pe = false;
    bool causal = false;
    bool recompute_edges = true;
    double position_coeff = 0.5;
    double alpha = 1.0;
    std::uint64_t model_seed = 0;

    void add(CLI::App& app, bool with_kind) {
        if (with_kind) {
            app.add_option("-m,--model", model, "Predictor")
                ->check(CLI::IsMember({"set", "egnn", "mlp", "linear"}))
                ->capture_default_str();
        }
        app.add_option("--feature-dim", feature_dim, "Node feature width d (default 128; egnn 64)");
        app.add_option("--hidden-dim", hidden_dim, "MLP hidden width (default 128; egnn 64)");
        app.add_option("--egcl-layers", egcl_layers, "EGCL layers K per block (default 2; egnn 3)");
        app.add_option("--blocks", blocks, "Stacked SpatiotempAttn blocks M")->capture_default_str();
        app.add_flag("--equiv,!--no-equiv", equivariant, "Equivariant spatial layers (default on)");
        app.add_flag("--adj,!--no-adj", adjacency, "Temporal attention over adjacency (default off)");
        app.add_flag("--satt,!--no-satt", spatial, "Spatial attention (default on)");
        app.add_flag("--tatt,!--no-tatt", temporal, "Temporal attention (default on)");
        app.add_flag("--pe,!--no-pe", pe, "Sinusoidal positional encodings (default off)");
        app.add_flag("--causal,!--no-causal", causal, "Causal temporal attention (default off)");
        app.add_flag("--recompute-edges,!--no-recompute-edges", recompute_edges,
                     "Rebuild edge attributes between EGCL layers (default on)");
        app.add_option("--position-coeff", position_coeff, "Position attention coefficient B")->capture_default_str();
        app.add_option("--alpha", alpha, "Velocity weight in the loss")->capture_default_str();
        app.add_option("--model-seed", model_seed, "Parameter initialisation seed")->capture_default_str();
    }

    json to_json(const std::string& kind, std::size_t n, std::size_t l, std::size_t h) const {
        json j = {{"model", kind},
                  {"n_particles", n},
                  {"seq_len", l},
                  {"horizon", h},
                  {"blocks", blocks},
                  {"equivariant", equivariant},
                  {"temporal_adjacency", adjacency},
                  {"spatial_attention", spatial},
                  {"temporal_attention", temporal},
                  {"positional_encoding", pe},
                  {"causal", causal},
                  {"recompute_edges", recompute_edges},
                  {"position_coeff", position_coeff},
                  {"loss_alpha", alpha},
                  {"seed", model_seed}};
        if (feature_dim) j["feature_dim"] = *feature_dim;
        if (hidden_dim) j["hidden_dim"] = *hidden_dim;
        if (egcl_layers) j["egcl_layers"] = *egcl_layers;
        return j;
    }

    json for_dataset(const std::string& kind, const json& data) const {
        return to_json(kind, data.at("n_particles").get<std::size_t>(), data.at("seq_len").get<std::size_t>(),
                       data.at("horizon").get<std::size_t>());
    }
};

struct TrainOptions {
    std::size_t epochs = 10;
    std::size_t batch_size = 100;
    std::optional<double> lr;
    std::optional<double> weight_decay;
    double dropout = 0.1;
    double grad_clip = 0.0;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;

    void add(CLI::App& app) {
        app.add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        app.add_option("--batch-size", batch_size, "Minibatch size")->capture_default_str();
        app.add_option("--lr", lr, "Adam learning rate (default per model: set 4.45e-5, egnn 3.98e-5, "
                                   "mlp 1.75e-5, linear 2.73e-5)");
        app.add_option("--weight-decay", weight_decay, "L2 weight decay (default 0; linear 1e-6)");
        app.add_option("--dropout", dropout, "Dropout rate in the feed-forward nets")->capture_default_str();
        app.add_option("--grad-clip", grad_clip, "Global gradient-norm clip, 0 disables")->capture_default_str();
        app.add_option("--train-seed", seed, "Seed for data order and dropout")->capture_default_str();
        app.add_option("--eval-every", eval_every, "Validate every k epochs")->capture_default_str();
    }

    json to_json(const std::string& checkpoint = {}) const {
        json j = {{"epochs", epochs},       {"batch_size", batch_size}, {"dropout", dropout},
                  {"grad_clip", grad_clip}, {"seed", seed},             {"eval_every", eval_every}};
        if (lr) j["lr"] = *lr;
        if (weight_decay) j["weight_decay"] = *weight_decay;
        if (!checkpoint.empty()) j["checkpoint_path"] = checkpoint;
        return j;
    }
};

struct TrainedModel {
    ModelPtr model;
    json history;
};

void write_metric(const char* metrics, void* user) {
    *static_cast<std::ostream*>(user) << metrics << '\n' << std::flush;
}

TrainedModel train_model(const json& model_config, const json& train_config, const st_dataset* train,
                         const st_dataset* val, std::ostream* metrics) {
    st_model* raw = nullptr;
    check(st_model_create(model_config.dump().c_str(), &raw), "creating model");
    TrainedModel out{ModelPtr(raw), json()};
    char* history = nullptr;
    check(st_train(out.model.get(), train, val, train_config.dump().c_str(), metrics ? write_metric : nullptr,
                   metrics, &history),
          "training");
    out.history = json::parse(take_string(history));
    return out;
}

json evaluate(const st_model* model, const st_dataset* data) {
    char* out = nullptr;
    check(st_evaluate(model, data, &out), "evaluating");
    return json::parse(take_string(out));
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw CallError(ST_ERR_IO, "cannot open " + path.string() + " for writing");
    return out;
}

std::string format_double(double x, int precision = 6) {
    std::ostringstream s;
    s.precision(precision);
    s << x;
    return s.str();
}

// ---- commands ---------------------------------------------------------------

int cmd_generate(const DataOptions& opts, const fs::path& out_dir) {
    const json config = opts.to_json();
    if (opts.horizon < 10 * opts.seq_len) {
        std::cerr << "warning: horizon " << opts.horizon << " is less than 10x the input window " << opts.seq_len
                  << "\n";
    }
    fs::create_directories(out_dir);
    json files = json::object();
    for (const char* split : {"train", "val", "test"}) {
        const DatasetPtr d = generate_split(config, split);
        const fs::path path = out_dir / (std::string(split) + ".setd");
        check(st_dataset_write(d.get(), path.string().c_str()), "writing " + path.string());
        files[split] = path.filename().string();
        std::cout << "wrote " << path.string() << "\n";
    }
    const json manifest = {{"schema_version", kManifestVersion}, {"config", config}, {"files", files}};
    open_output(out_dir / "manifest.json") << manifest.dump(2) << "\n";
    return kExitOk;
}

int cmd_train(const ModelOptions& mopts, const TrainOptions& topts, const fs::path& data_dir,
              const fs::path& checkpoint, const fs::path& metrics_path) {
    const DatasetPtr train = read_dataset(data_dir / "train.setd");
    const DatasetPtr val = read_dataset(data_dir / "val.setd");
    const json model_config = mopts.for_dataset(mopts.model, dataset_config(train.get()));
    std::ofstream metrics = open_output(metrics_path);
    if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
    const TrainedModel tm =
        train_model(model_config, topts.to_json(checkpoint.string()), train.get(), val.get(), &metrics);
    std::size_t params = 0;
    check(st_model_param_count(tm.model.get(), &params), "counting parameters");
    std::cout << json{{"model", mopts.model},
                      {"params", params},
                      {"best_epoch", tm.history.at("best_epoch")},
                      {"best_val_mse", tm.history.at("best_val_mse")},
                      {"checkpoint", checkpoint.string()}}
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const std::string& split) {
    st_model* raw = nullptr;
    check(st_model_load(checkpoint.string().c_str(), &raw), "loading " + checkpoint.string());
    const ModelPtr model(raw);
    const DatasetPtr data = read_dataset(data_dir / (split + ".setd"));
    json result = evaluate(model.get(), data.get());
    result["split"] = split;
    std::cout << result.dump() << "\n";
    return kExitOk;
}

struct AblationRow {
    const char* group;
    bool equivariant;
    bool adjacency;
    bool spatial;
    bool temporal;
};

std::string describe(const AblationRow& r) {
    auto b = [](bool v) { return v ? "True" : "False"; };
    return std::string("Equiv=") + b(r.equivariant) + ", Adj=" + b(r.adjacency) + ", SATT=" + b(r.spatial) +
           ", TATT=" + b(r.temporal);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

int cmd_ablate(const ModelOptions& base, const TrainOptions& topts, const fs::path& data_dir,
               const std::string& out_path) {
    const DatasetPtr train = read_dataset(data_dir / "train.setd");
    const DatasetPtr val = read_dataset(data_dir / "val.setd");
    const DatasetPtr test = read_dataset(data_dir / "test.setd");
    const json data = dataset_config(train.get());
    const std::vector<AblationRow> rows = {{"Equivariance", true, false, true, true},
                                           {"Equivariance", false, false, true, true},
                                           {"Adjacency", true, true, true, true},
                                           {"Attention", true, false, true, false}};
    struct Result {
        std::size_t params;
        double val_mse;
        double test_mse;
    };
    std::vector<Result> results;
    for (const AblationRow& row : rows) {
        ModelOptions m = base;
        m.equivariant = row.equivariant;
        m.adjacency = row.adjacency;
        m.spatial = row.spatial;
        m.temporal = row.temporal;
        const json config = m.for_dataset("set", data);
        std::cerr << "training " << describe(row) << "\n";
        const TrainedModel tm = train_model(config, topts.to_json(), train.get(), val.get(), nullptr);
        results.push_back({closed_form_params(config), tm.history.at("best_val_mse").get<double>(),
                           evaluate(tm.model.get(), test.get()).at("mse").get<double>()});
    }
    double best = results.front().test_mse;
    for (const Result& r : results) best = std::min(best, r.test_mse);

    std::ostringstream csv;
    csv << "Ablation,Model,Params,Val MSE,Test MSE,MSE Ratio\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Result& r = results[i];
        csv << rows[i].group << ',' << csv_field(describe(rows[i])) << ',' << r.params << ','
            << format_double(r.val_mse) << ',' << format_double(r.test_mse) << ','
            << format_double(r.test_mse / best) << '\n';
    }
    if (out_path.empty() || out_path == "-") {
        std::cout << csv.str();
    } else {
        open_output(out_path) << csv.str();
    }
    return kExitOk;
}

int cmd_verify(std::size_t trials, double tolerance, std::uint64_t seed, std::size_t n, std::size_t l,
               std::size_t d, std::size_t h, bool as_json) {
    const json options = {{"trials", trials},     {"tolerance", tolerance}, {"seed", seed},
                          {"n_particles", n},     {"seq_len", l},           {"feature_dim", d},
                          {"hidden_dim", h}};
    int all_passed = 0;
    char* report = nullptr;
    check(st_verify(options.dump().c_str(), &all_passed, &report), "verifying");
    const json r = json::parse(take_string(report));
    if (as_json) {
        std::cout << r.dump(2) << "\n";
    } else {
        for (const json& p : r.at("properties")) {
            const double dev = p.at("max_deviation").is_null() ? INFINITY : p.at("max_deviation").get<double>();
            std::printf("%s  %-34s max_dev=%.3e tol=%.1e\n", p.at("passed").get<bool>() ? "PASS" : "FAIL",
                        p.at("name").get<std::string>().c_str(), dev, p.at("tolerance").get<double>());
        }
    }
    return all_passed ? kExitOk : kExitFailure;
}

std::vector<std::size_t> parse_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(item, &pos);
        if (pos != item.size() || v < 2) throw CallError(ST_ERR_INVALID_ARGUMENT, "bad particle count '" + item + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw CallError(ST_ERR_INVALID_ARGUMENT, "empty particle list");
    return out;
}

int cmd_scale_sweep(DataOptions data, const ModelOptions& base, const TrainOptions& topts, const std::string& n_list,
                    const fs::path& data_root, const std::string& out_path) {
    std::ostringstream csv;
    csv << "N,model,params,test_mse\n";
    for (std::size_t n : parse_list(n_list)) {
        data.n_particles = n;
        const json config = data.to_json();
        std::vector<DatasetPtr> splits;
        for (const char* split : {"train", "val", "test"}) {
            const fs::path cached = data_root.empty() ? fs::path() : data_root / ("N" + std::to_string(n)) /
                                                                            (std::string(split) + ".setd");
            if (!cached.empty() && fs::exists(cached)) {
                splits.push_back(read_dataset(cached));
                continue;
            }
            splits.push_back(generate_split(config, split));
            if (!cached.empty()) {
                fs::create_directories(cached.parent_path());
                check(st_dataset_write(splits.back().get(), cached.string().c_str()), "writing " + cached.string());
            }
        }
        for (const char* kind : {"set", "egnn", "mlp", "linear"}) {
            const json mc = base.to_json(kind, n, data.seq_len, data.horizon);
            std::cerr << "training " << kind << " at N=" << n << "\n";
            const TrainedModel tm = train_model(mc, topts.to_json(), splits[0].get(), splits[1].get(), nullptr);
            std::size_t params = 0;
            check(st_model_param_count(tm.model.get(), &params), "counting parameters");
            const double mse = evaluate(tm.model.get(), splits[2].get()).at("mse").get<double>();
            csv << n << ',' << kind << ',' << params << ',' << format_double(mse) << '\n';
        }
    }
    if (out_path.empty() || out_path == "-") {
        std::cout << csv.str();
    } else {
        open_output(out_path) << csv.str();
    }
    return kExitOk;
}

int exit_code_for(st_status status) {
    switch (status) {
        case ST_ERR_INVALID_ARGUMENT:
        case ST_ERR_SHAPE: return kExitUsage;
        case ST_ERR_IO:
        case ST_ERR_FORMAT: return kExitIo;
        default: return kExitFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spacetime E(n)-Transformer: N-body data, training and equivariance checks"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");
    app.footer("Exit codes: 0 success, 1 property or runtime failure, 2 usage error, 3 I/O error.");

    std::function<int()> run;

    DataOptions gen_data;
    fs::path gen_out = "data";
    auto* gen = app.add_subcommand("generate", "Simulate train/val/test splits and a manifest");
    gen_data.add(*gen);
    gen->add_option("-o,--out", gen_out, "Output directory")->capture_default_str();
    gen->callback([&] { run = [&] { return cmd_generate(gen_data, gen_out); }; });

    ModelOptions train_model_opts;
    TrainOptions train_opts;
    fs::path train_data = "data";
    fs::path train_ckpt = "model.sett";
    fs::path train_metrics = "metrics.jsonl";
    auto* tr = app.add_subcommand("train", "Train one predictor; writes the best checkpoint and JSON-lines metrics");
    train_model_opts.add(*tr, true);
    train_opts.add(*tr);
    tr->add_option("-d,--data", train_data, "Directory with train.setd and val.setd")->capture_default_str();
    tr->add_option("-c,--checkpoint", train_ckpt, "Best-validation checkpoint path")->capture_default_str();
    tr->add_option("--metrics", train_metrics, "Per-epoch metrics (JSON lines)")->capture_default_str();
    tr->callback([&] {
        run = [&] { return cmd_train(train_model_opts, train_opts, train_data, train_ckpt, train_metrics); };
    });

    fs::path eval_ckpt = "model.sett";
    fs::path eval_data = "data";
    std::string eval_split = "test";
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split; prints JSON");
    ev->add_option("-c,--checkpoint", eval_ckpt, "Checkpoint to load")->capture_default_str();
    ev->add_option("-d,--data", eval_data, "Dataset directory")->capture_default_str();
    ev->add_option("-s,--split", eval_split, "Split to evaluate")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    ev->callback([&] { run = [&] { return cmd_eval(eval_ckpt, eval_data, eval_split); }; });

    ModelOptions ablate_model;
    TrainOptions ablate_train;
    fs::path ablate_data = "data";
    std::string ablate_out = "-";
    auto* ab = app.add_subcommand("ablate", "Train the four ablation rows and emit a CSV table");
    ablate_model.add(*ab, false);
    ablate_train.add(*ab);
    ab->add_option("-d,--data", ablate_data, "Dataset directory")->capture_default_str();
    ab->add_option("-o,--out", ablate_out, "CSV path, '-' for stdout")->capture_default_str();
    ab->callback([&] { run = [&] { return cmd_ablate(ablate_model, ablate_train, ablate_data, ablate_out); }; });

    std::size_t v_trials = 25;
    double v_tol = 1e-8;
    std::uint64_t v_seed = 0;
    std::size_t v_n = 5, v_l = 10, v_d = 8, v_h = 16;
    bool v_json = false;
    auto* ve = app.add_subcommand("verify", "Check every equivariance and equivalence property; exit 1 on failure");
    ve->add_option("--trials", v_trials, "Random trials per property")->capture_default_str();
    ve->add_option("--tolerance", v_tol, "Maximum allowed deviation")->capture_default_str();
    ve->add_option("--seed", v_seed, "Seed for random inputs and weights")->capture_default_str();
    ve->add_option("--particles", v_n, "Particles N")->capture_default_str();
    ve->add_option("--seq-len", v_l, "Time steps L")->capture_default_str();
    ve->add_option("--feature-dim", v_d, "Feature width d")->capture_default_str();
    ve->add_option("--hidden-dim", v_h, "Hidden width")->capture_default_str();
    ve->add_flag("--json", v_json, "Print the report as JSON");
    ve->callback([&] { run = [&] { return cmd_verify(v_trials, v_tol, v_seed, v_n, v_l, v_d, v_h, v_json); }; });

    DataOptions sweep_data;
    ModelOptions sweep_model;
    TrainOptions sweep_train;
    std::string sweep_list = "5,20,30";
    fs::path sweep_root;
    std::string sweep_out = "-";
    auto* sw = app.add_subcommand("scale-sweep", "Train every model for several N; emit N,model,params,test_mse");
    sweep_data.add(*sw);
    sweep_model.add(*sw, false);
    sweep_train.add(*sw);
    sw->add_option("--n-list", sweep_list, "Comma-separated particle counts")->capture_default_str();
    sw->add_option("--data-root", sweep_root, "Cache generated datasets under <root>/N<n>/");
    sw->add_option("-o,--out", sweep_out, "CSV path, '-' for stdout")->capture_default_str();
    sw->callback([&] {
        run = [&] {
            return cmd_scale_sweep(sweep_data, sweep_model, sweep_train, sweep_list, sweep_root, sweep_out);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        return run();
    } catch (const CallError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.status);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed library output: " << e.what() << "\n";
        return kExitFailure;
    }
}
