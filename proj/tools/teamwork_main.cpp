// Command-line front end: dataset generation, base pretraining, adapter
// training, sampling, evaluation and cost benchmarking. Exit codes: 0 ok,
// 2 configuration/usage error, 3 I/O error, 4 contract violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "teamwork/teamwork.hpp"

namespace fs = std::filesystem;
using namespace teamwork;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitContract = 4;

struct FlagOverrides {
    // raw flag storage; only values the user actually passed are applied
    std::map<std::string, std::string> values;

    void bind(CLI::App* cmd, const std::string& flag, const std::string& key,
              const std::string& desc) {
        cmd->add_option_function<std::string>(
               flag, [this, key](const std::string& v) { values[key] = v; }, desc)
            ->expected(1);
    }
};

// Builds the effective configuration: defaults, then --config file, then
// explicit flags.
class ConfigBuilder {
  public:
    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path_, "key=value configuration file");
        add(cmd, "--task", "task", "task: decompose or inpaint");
        add(cmd, "--height", "height", "image height");
        add(cmd, "--width", "width", "image width");
        add(cmd, "--patch", "patch", "patch size");
        add(cmd, "--dim", "model_dim", "token embedding width");
        add(cmd, "--hidden", "hidden_dim", "MLP hidden width");
        add(cmd, "--heads", "heads", "attention heads");
        add(cmd, "--rank", "rank", "adapter rank");
        add(cmd, "--offset-scale", "offset_scale", "multiplier on the low-rank offset");
        add(cmd, "--steps", "steps", "optimizer steps (or sampler steps for sample/eval)");
        add(cmd, "--accum", "accumulation", "gradient accumulation per optimizer step");
        add(cmd, "--dropout", "dropout_prob", "per-output-teammate dropout probability");
        add(cmd, "--lr", "lr", "learning rate");
        add(cmd, "--seed", "seed", "random seed");
        add(cmd, "--euler-steps", "euler_steps", "sampler integration steps");
        add(cmd, "--samples", "eval_samples", "evaluation sample count");
        add(cmd, "--count", "count", "dataset sample count");
        add(cmd, "--regions", "num_regions", "albedo voronoi regions");
        add(cmd, "--smoothness", "light_smoothness", "shading frequency bound");
        add(cmd, "--precision", "precision", "f64 or f32");
        add(cmd, "--mode", "mode", "teamwork or per-instance");
        add(cmd, "--adapt", "adapt", "adapt all linear layers or attention only");
        add(cmd, "--mask-policy", "mask_policy", "training mask policy: full or dropout");
        add(cmd, "--threads", "threads", "worker threads for data generation and eval");
        add(cmd, "--data", "data_dir", "dataset directory");
        add(cmd, "--base", "base_path", "base checkpoint path");
        add(cmd, "--checkpoint", "checkpoint_path", "adapter checkpoint path");
        add(cmd, "--out", "out_dir", "output directory");
        cmd->add_flag_function(
            "--timings", [this](std::int64_t) { overrides_.values["timings"] = "true"; },
            "record wall-clock timings in metrics (breaks log byte-identity)");
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path_.empty()) cfg.apply(KvConfig::load(config_path_));
        for (const auto& [key, value] : overrides_.values) cfg.apply_one(key, value);
        cfg.validate();
        return cfg;
    }

  private:
    void add(CLI::App* cmd, const std::string& flag, const std::string& key,
             const std::string& desc) {
        overrides_.bind(cmd, flag, key, desc);
    }

    std::string config_path_;
    mutable FlagOverrides overrides_;
};

fs::path require_out_dir(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) throw ConfigError("--out is required");
    fs::create_directories(cfg.out_dir);
    return cfg.out_dir;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing required path: ") + what);
    if (!fs::exists(path)) throw IoError(std::string(what) + " not found: " + path);
}

fs::path sidecar_path(const fs::path& checkpoint) {
    fs::path p = checkpoint;
    p.replace_extension(".cfg");
    return p;
}

void write_metrics(const fs::path& path, const MetricsLog& log) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write metrics: " + path.string());
    os << log.to_text();
}

// Binary PPM preview of a decoded [0,1] plane, for quick visual checks.
void write_ppm(const fs::path& path, const Plane& plane) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path.string());
    os << "P6\n" << plane.width << " " << plane.height << "\n255\n";
    for (std::size_t y = 0; y < plane.height; ++y)
        for (std::size_t x = 0; x < plane.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double v = plane.at(c, y, x);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                os.put(static_cast<char>(static_cast<int>(v * 255.0 + 0.5)));
            }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
    if (cfg.count == 0) throw ConfigError("count must be positive");
    if (cfg.num_regions < 2) throw ConfigError("num_regions must be at least 2");
    const fs::path out = require_out_dir(cfg);
    SynthSpec spec{cfg.num_regions, cfg.light_smoothness};
    generate_dataset(out, cfg.task, cfg.seed, cfg.count, cfg.height, cfg.width, spec,
                     cfg.threads);
    std::printf("wrote %zu %s samples to %s\n", cfg.count, cfg.task.c_str(),
                out.string().c_str());
    return kExitOk;
}

template <typename T>
int run_pretrain(const RunConfig& cfg) {
    require_file(cfg.data_dir, "--data");
    const fs::path out = require_out_dir(cfg);
    auto data = load_dataset<T>(cfg.data_dir);
    auto pool = pretraining_pool(data);

    PretrainOptions opts;
    opts.steps = cfg.steps;
    opts.accumulation = cfg.accumulation;
    opts.lr = cfg.lr;
    opts.timings = cfg.timings;
    Rng rng(cfg.seed);
    MetricsLog log;
    auto net = pretrain_base(pool, cfg.geometry(), opts, rng, &log);

    save_checkpoint(out / "base.twrk", net.layers);
    cfg.to_kv().save(sidecar_path(out / "base.twrk"));
    write_metrics(out / "pretrain_metrics.txt", log);
    std::printf("pretrained base for %zu steps, final loss %.6g\n", cfg.steps,
                log.final_loss());
    return kExitOk;
}

template <typename T>
DenoiserNet<T> load_net(const std::string& checkpoint, const RunConfig& cfg) {
    DenoiserNet<T> net;
    net.geom = cfg.geometry();
    net.layers = load_checkpoint<T>(checkpoint);
    if (net.layers.size() != kNetLayerCount)
        throw ContractError("checkpoint has " + std::to_string(net.layers.size()) +
                            " layers, expected " + std::to_string(kNetLayerCount));
    auto dims = net_layer_dims(net.geom);
    for (std::size_t l = 0; l < kNetLayerCount; ++l)
        if (net.layers[l].out_dim() != dims[l].first || net.layers[l].in_dim() != dims[l].second)
            throw ContractError("checkpoint layer " + std::string(kNetLayerNames[l]) +
                                " is " + net.layers[l].frozen.shape_str() +
                                ", geometry expects " + std::to_string(dims[l].first) + "x" +
                                std::to_string(dims[l].second));
    for (auto& layer : net.layers) layer.scale = cfg.offset_scale;
    return net;
}

RunConfig merge_sidecar_geometry(const RunConfig& cfg, const std::string& checkpoint) {
    RunConfig merged = cfg;
    const fs::path sc = sidecar_path(checkpoint);
    if (fs::exists(sc)) {
        RunConfig stored = RunConfig::from_kv(KvConfig::load(sc));
        merged.height = stored.height;
        merged.width = stored.width;
        merged.patch = stored.patch;
        merged.model_dim = stored.model_dim;
        merged.hidden_dim = stored.hidden_dim;
        merged.heads = stored.heads;
        merged.precision = stored.precision;
        merged.offset_scale = stored.offset_scale;
        if (merged.task.empty()) merged.task = stored.task;
    }
    return merged;
}

template <typename T>
int run_train(const RunConfig& flag_cfg) {
    require_file(flag_cfg.data_dir, "--data");
    require_file(flag_cfg.base_path, "--base");
    RunConfig cfg = merge_sidecar_geometry(flag_cfg, flag_cfg.base_path);
    const fs::path out = require_out_dir(cfg);

    auto data = load_dataset<T>(cfg.data_dir);
    cfg.task = data.meta.task;  // the dataset manifest is authoritative

    DenoiserNet<T> net = load_net<T>(cfg.base_path, cfg);
    for (const auto& layer : net.layers)
        if (layer.mode != AdapterMode::FrozenOnly)
            throw ContractError("base checkpoint already carries adapters");

    Rng rng(cfg.seed);
    net.attach_adapters(data.team_size(), cfg.rank, rng, cfg.adapter_mode(),
                        cfg.adapt == "attention");
    for (auto& layer : net.layers) layer.scale = cfg.offset_scale;

    TrainOptions opts;
    opts.steps = cfg.steps;
    opts.accumulation = cfg.accumulation;
    opts.lr = cfg.lr;
    opts.mask_policy = cfg.dropout_prob > 0 ? MaskPolicy::Dropout : cfg.policy();
    opts.dropout_prob = cfg.dropout_prob;
    opts.timings = cfg.timings;
    Rng trng = rng.split(1);
    auto log = train_adapter(net, data, opts, trng);

    save_checkpoint(out / "adapter.twrk", net.layers);
    cfg.to_kv().save(sidecar_path(out / "adapter.twrk"));
    write_metrics(out / "train_metrics.txt", log);
    std::printf("trained %s adapters for %zu steps, final loss %.6g\n", cfg.mode.c_str(),
                cfg.steps, log.final_loss());
    return kExitOk;
}

// Mask grammar: "all", "isolated", "only:<name>", "subset:<a,b,...>".
// Input teammates always stay active; named teammates must exist.
ActivationMask parse_mask(const std::string& spec, const DatasetMeta& meta, bool& isolated) {
    isolated = false;
    auto list_names = [&]() {
        std::string names;
        for (const auto& tm : meta.teammates) names += " " + tm.name;
        return names;
    };
    ActivationMask mask(meta.teammates.size(), false);
    for (std::size_t i = 0; i < meta.teammates.size(); ++i)
        if (meta.teammates[i].role == Role::InputTeammate) mask.set(i, true);

    if (spec == "all") return ActivationMask::all(meta.teammates.size());
    if (spec == "isolated") {
        isolated = true;
        return ActivationMask::all(meta.teammates.size());
    }
    auto named = [&](const std::string& name) {
        for (std::size_t i = 0; i < meta.teammates.size(); ++i)
            if (meta.teammates[i].name == name) return i;
        throw ConfigError("unknown teammate '" + name + "'; valid teammates:" + list_names());
    };
    if (spec.rfind("only:", 0) == 0) {
        mask.set(named(spec.substr(5)), true);
        return mask;
    }
    if (spec.rfind("subset:", 0) == 0) {
        std::string rest = spec.substr(7);
        std::size_t start = 0;
        while (start <= rest.size()) {
            auto comma = rest.find(',', start);
            const std::string name =
                rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (name.empty()) throw ConfigError("empty teammate name in subset mask");
            mask.set(named(name), true);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return mask;
    }
    throw ConfigError("mask must be all, isolated, only:<name> or subset:<list>, got '" + spec +
                      "'");
}

std::string format_eval(const EvalMetrics& m) {
    std::string out = "mask=" + m.mask_bits + " samples=" + std::to_string(m.samples) + "\n";
    char buf[160];
    for (const auto& pt : m.teammates) {
        std::snprintf(buf, sizeof(buf), "teammate=%s rmse=%.6f r=%.6f g=%.6f b=%.6f\n",
                      pt.name.c_str(), pt.rmse, pt.channel_rmse[0], pt.channel_rmse[1],
                      pt.channel_rmse[2]);
        out += buf;
    }
    if (!std::isnan(m.recomposition)) {
        std::snprintf(buf, sizeof(buf), "recomposition_rmse=%.6f\n", m.recomposition);
        out += buf;
    }
    return out;
}

template <typename T>
int run_eval(const RunConfig& flag_cfg, const std::string& mask_spec) {
    require_file(flag_cfg.checkpoint_path, "--checkpoint");
    require_file(flag_cfg.data_dir, "--data");
    RunConfig cfg = merge_sidecar_geometry(flag_cfg, flag_cfg.checkpoint_path);

    auto data = load_dataset<T>(cfg.data_dir);
    DenoiserNet<T> net = load_net<T>(cfg.checkpoint_path, cfg);
    if (net.team_size() != data.team_size())
        throw ContractError("checkpoint team size does not match dataset");

    bool isolated = false;
    ActivationMask mask = parse_mask(mask_spec, data.meta, isolated);

    EvalOptions opts;
    opts.samples = cfg.eval_samples;
    opts.euler_steps = cfg.euler_steps;
    opts.seed = cfg.seed;
    opts.threads = cfg.threads;

    EvalMetrics metrics = isolated ? evaluate_isolated(net, data, opts)
                                   : evaluate_masked(net, data, mask, opts);
    const std::string text = format_eval(metrics);
    std::fputs(text.c_str(), stdout);
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        std::ofstream os(fs::path(cfg.out_dir) / "eval.txt");
        os << text;
    }
    return kExitOk;
}

template <typename T>
int run_sample(const RunConfig& flag_cfg, const std::string& mask_spec, std::size_t index) {
    require_file(flag_cfg.checkpoint_path, "--checkpoint");
    require_file(flag_cfg.data_dir, "--data");
    RunConfig cfg = merge_sidecar_geometry(flag_cfg, flag_cfg.checkpoint_path);
    const fs::path out = require_out_dir(cfg);

    auto data = load_dataset<T>(cfg.data_dir, index + 1);
    if (index >= data.samples.size())
        throw ConfigError("sample index " + std::to_string(index) + " out of range");
    DenoiserNet<T> net = load_net<T>(cfg.checkpoint_path, cfg);

    bool isolated = false;
    ActivationMask mask = parse_mask(mask_spec, data.meta, isolated);
    if (isolated) throw ConfigError("sample does not support the isolated mask");

    std::vector<Role> roles;
    for (const auto& tm : data.meta.teammates) roles.push_back(tm.role);
    std::vector<Image<T>> inputs;
    for (std::size_t i = 0; i < roles.size(); ++i)
        if (mask.active(i) && roles[i] == Role::InputTeammate)
            inputs.push_back(data.samples[index].planes[i]);

    Rng rng(cfg.seed);
    auto outputs = sample_team(net, roles, mask, inputs, NoiseSchedule::uniform(cfg.euler_steps),
                               rng);

    std::size_t slot = 0;
    for (std::size_t i = 0; i < roles.size(); ++i) {
        if (!mask.active(i) || roles[i] != Role::OutputTeammate) continue;
        Plane decoded = decode_plane(outputs[slot++]);
        const std::string& name = data.meta.teammates[i].name;
        save_tnsr(out / (name + ".tnsr"), {decoded.channels, decoded.height, decoded.width},
                  decoded.data);
        write_ppm(out / (name + ".ppm"), decoded);
    }
    std::printf("sampled %zu output planes to %s\n", slot, out.string().c_str());
    return kExitOk;
}

int cmd_bench(const RunConfig& cfg, const std::string& t_list, std::string scheme_filter,
              const std::string& plot_path) {
    std::vector<std::size_t> team_sizes;
    std::size_t start = 0;
    while (start <= t_list.size()) {
        auto comma = t_list.find(',', start);
        const std::string tok =
            t_list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!tok.empty()) team_sizes.push_back(std::stoull(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }

    std::vector<CostScheme> schemes;
    if (scheme_filter.empty()) {
        schemes = all_cost_schemes();
    } else {
        if (scheme_filter == "materialized") scheme_filter = "teamwork-mat";
        if (scheme_filter == "unmaterialized") scheme_filter = "teamwork-unmat";
        try {
            schemes = {cost_scheme_from_name(scheme_filter)};
        } catch (const ParamError& e) {
            throw ConfigError(e.what());
        }
    }

    CostDims dims;
    dims.m = cfg.model_dim;
    dims.n = cfg.model_dim;
    dims.r = cfg.rank;
    dims.tokens = (cfg.height / cfg.patch) * (cfg.width / cfg.patch);
    dims.dim = cfg.model_dim / 2;
    dims.heads = cfg.heads;

    SweepResult sweep;
    try {
        sweep = scaling_sweep(team_sizes, dims, schemes, cfg.seed);
    } catch (const ParamError& e) {
        throw ConfigError(e.what());
    }

    std::string text;
    for (const auto& rep : sweep.reports) text += rep.line() + "\n";
    char buf[160];
    for (const auto& [scheme, slope] : sweep.slopes) {
        std::snprintf(buf, sizeof(buf), "slope scheme=%s loglog=%.4f\n",
                      cost_scheme_name(scheme), slope);
        text += buf;
    }
    text +=
        "# macs are multiply-accumulates; flops = 2 x macs; training cost is approximately 3 x "
        "forward\n"
        "# attention rows count score/mix products; per-token projections are metered as frozen "
        "linear work\n";
    std::fputs(text.c_str(), stdout);

    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        std::ofstream os(fs::path(cfg.out_dir) / "bench.txt");
        os << text;
    }
    if (!plot_path.empty()) {
        std::ofstream os(plot_path);
        if (!os) throw IoError("cannot write plot table: " + plot_path);
        write_gnuplot_table(os, sweep);
    }
    return kExitOk;
}

template <typename Fn>
int dispatch_precision(const RunConfig& cfg, Fn&& fn) {
    if (cfg.precision == "f32") return fn(static_cast<float*>(nullptr));
    return fn(static_cast<double*>(nullptr));
}

RunConfig with_checkpoint_precision(RunConfig cfg, const std::string& checkpoint) {
    if (fs::exists(checkpoint))
        cfg.precision = checkpoint_dtype(checkpoint) == Dtype::F32 ? "f32" : "f64";
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"teamwork: coordinated low-rank adaptation toolkit"};
    app.require_subcommand(1);

    ConfigBuilder gen_cfg, pre_cfg, train_cfg, eval_cfg, sample_cfg, bench_cfg;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen_cfg.attach(gen);
    auto* pre = app.add_subcommand("pretrain", "train the frozen base denoiser");
    pre_cfg.attach(pre);
    auto* train = app.add_subcommand("train", "train team adapters on a frozen base");
    train_cfg.attach(train);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against ground truth");
    std::string eval_mask = "all";
    eval->add_option("--mask", eval_mask, "all | isolated | only:<name> | subset:<a,b>");
    eval_cfg.attach(eval);

    auto* sample = app.add_subcommand("sample", "sample output planes for one dataset entry");
    std::string sample_mask = "all";
    std::size_t sample_index = 0;
    sample->add_option("--mask", sample_mask, "all | only:<name> | subset:<a,b>");
    sample->add_option("--index", sample_index, "dataset sample index");
    sample_cfg.attach(sample);

    auto* bench = app.add_subcommand("bench", "instrumented cost sweep over team sizes");
    std::string bench_t = "1,2,4,8,16";
    std::string bench_scheme;
    std::string bench_plot;
    bench->add_option("--T", bench_t, "comma-separated team sizes");
    bench->add_option("--scheme", bench_scheme,
                      "restrict to one scheme (teamwork-unmat, teamwork-mat/materialized, "
                      "per-instance-lora, self-attention, joint-attention)");
    bench->add_option("--plot", bench_plot, "write a gnuplot-compatible two-column table");
    bench_cfg.attach(bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_cfg.resolve());
        if (pre->parsed()) {
            const RunConfig cfg = pre_cfg.resolve();
            return dispatch_precision(cfg, [&](auto* tag) {
                using T = std::remove_pointer_t<decltype(tag)>;
                return run_pretrain<T>(cfg);
            });
        }
        if (train->parsed()) {
            RunConfig cfg = train_cfg.resolve();
            require_file(cfg.base_path, "--base");
            cfg = with_checkpoint_precision(cfg, cfg.base_path);
            return dispatch_precision(cfg, [&](auto* tag) {
                using T = std::remove_pointer_t<decltype(tag)>;
                return run_train<T>(cfg);
            });
        }
        if (eval->parsed()) {
            RunConfig cfg = eval_cfg.resolve();
            require_file(cfg.checkpoint_path, "--checkpoint");
            cfg = with_checkpoint_precision(cfg, cfg.checkpoint_path);
            return dispatch_precision(cfg, [&](auto* tag) {
                using T = std::remove_pointer_t<decltype(tag)>;
                return run_eval<T>(cfg, eval_mask);
            });
        }
        if (sample->parsed()) {
            RunConfig cfg = sample_cfg.resolve();
            require_file(cfg.checkpoint_path, "--checkpoint");
            cfg = with_checkpoint_precision(cfg, cfg.checkpoint_path);
            return dispatch_precision(cfg, [&](auto* tag) {
                using T = std::remove_pointer_t<decltype(tag)>;
                return run_sample<T>(cfg, sample_mask, sample_index);
            });
        }
        if (bench->parsed()) return cmd_bench(bench_cfg.resolve(), bench_t, bench_scheme,
                                              bench_plot);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "teamwork: error: config: %s\n", e.what());
        return kExitConfig;
    } catch (const ParamError& e) {
        std::fprintf(stderr, "teamwork: error: config: %s\n", e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "teamwork: error: io: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "teamwork: error: contract: %s\n", e.what());
        return kExitContract;
    }
}
