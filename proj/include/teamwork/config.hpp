#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "teamwork/common.hpp"
#include "teamwork/denoiser.hpp"
#include "teamwork/synth.hpp"
#include "teamwork/train.hpp"

namespace teamwork {

// Flat key=value configuration. Lines hold one `key = value` pair; blank
// lines and `#` comments are accepted on input and dropped on output, so
// round trips are exact modulo whitespace for comment-free files. Insertion
// order is preserved.
class KvConfig {
  public:
    static KvConfig parse(const std::string& text) {
        KvConfig kv;
        std::istringstream is(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + trimmed + "'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            if (kv.has(key))
                throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                                  key + "'");
            kv.entries_.emplace_back(key, value);
        }
        return kv;
    }

    static KvConfig load(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config: " + path.string());
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        return parse(text);
    }

    std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
        return out;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot write config: " + path.string());
        os << serialize();
    }

    bool has(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return true;
        return false;
    }

    const std::string& get(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        throw ConfigError("missing config key: " + key);
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        return fallback;
    }

    void set(const std::string& key, const std::string& value) {
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = value;
                return;
            }
        entries_.emplace_back(key, value);
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  private:
    static std::string trim(const std::string& s) {
        const auto from = s.find_first_not_of(" \t\r");
        if (from == std::string::npos) return "";
        const auto to = s.find_last_not_of(" \t\r");
        return s.substr(from, to - from + 1);
    }

    std::vector<std::pair<std::string, std::string>> entries_;
};

// Fully resolved run settings shared by the CLI commands. Every field has a
// desk-scale default; config files and command-line flags override them.
struct RunConfig {
    std::string task = "decompose";
    std::size_t height = 16, width = 16, patch = 2;
    std::size_t model_dim = 64, hidden_dim = 128, heads = 4;
    std::size_t rank = 16;
    double offset_scale = 1.0;  // multiplier on the low-rank offset
    std::size_t steps = 1000;
    std::size_t accumulation = 16;
    double dropout_prob = 0.0;
    double lr = 1e-3;
    std::uint64_t seed = 7;
    std::size_t euler_steps = 20;
    std::size_t eval_samples = 64;
    std::size_t count = 1000;
    std::size_t num_regions = 6;
    double light_smoothness = 2.0;
    std::string precision = "f64";     // f64 | f32
    std::string mode = "teamwork";     // teamwork | per-instance
    std::string adapt = "all";         // all | attention
    std::string mask_policy = "full";  // full | dropout
    unsigned threads = 1;
    bool timings = false;
    std::string data_dir, base_path, checkpoint_path, out_dir;

    ToyGeometry geometry() const {
        ToyGeometry g;
        g.height = height;
        g.width = width;
        g.patch = patch;
        g.model_dim = model_dim;
        g.hidden_dim = hidden_dim;
        g.heads = heads;
        return g;
    }

    AdapterMode adapter_mode() const {
        if (mode == "teamwork") return AdapterMode::Teamwork;
        if (mode == "per-instance") return AdapterMode::PerInstanceLora;
        throw ConfigError("mode must be teamwork or per-instance, got '" + mode + "'");
    }

    MaskPolicy policy() const {
        if (mask_policy == "full") return MaskPolicy::Full;
        if (mask_policy == "dropout") return MaskPolicy::Dropout;
        throw ConfigError("mask_policy must be full or dropout, got '" + mask_policy + "'");
    }

    void validate() const {
        topology_for_task(task);  // throws on unknown task
        geometry().validate();
        adapter_mode();
        policy();
        if (precision != "f64" && precision != "f32")
            throw ConfigError("precision must be f64 or f32, got '" + precision + "'");
        if (adapt != "all" && adapt != "attention")
            throw ConfigError("adapt must be all or attention, got '" + adapt + "'");
        if (!(dropout_prob >= 0.0 && dropout_prob < 1.0))
            throw ConfigError("dropout_prob must lie in [0, 1)");
        if (accumulation < 1) throw ConfigError("accumulation must be at least 1");
        if (rank < 1) throw ConfigError("rank must be at least 1");
        if (!(offset_scale > 0.0)) throw ConfigError("offset_scale must be positive");
        if (euler_steps < 1) throw ConfigError("euler_steps must be at least 1");
    }

    KvConfig to_kv() const {
        KvConfig kv;
        kv.set("task", task);
        kv.set("height", std::to_string(height));
        kv.set("width", std::to_string(width));
        kv.set("patch", std::to_string(patch));
        kv.set("model_dim", std::to_string(model_dim));
        kv.set("hidden_dim", std::to_string(hidden_dim));
        kv.set("heads", std::to_string(heads));
        kv.set("rank", std::to_string(rank));
        kv.set("offset_scale", format_double(offset_scale));
        kv.set("steps", std::to_string(steps));
        kv.set("accumulation", std::to_string(accumulation));
        kv.set("dropout_prob", format_double(dropout_prob));
        kv.set("lr", format_double(lr));
        kv.set("seed", std::to_string(seed));
        kv.set("euler_steps", std::to_string(euler_steps));
        kv.set("eval_samples", std::to_string(eval_samples));
        kv.set("count", std::to_string(count));
        kv.set("num_regions", std::to_string(num_regions));
        kv.set("light_smoothness", format_double(light_smoothness));
        kv.set("precision", precision);
        kv.set("mode", mode);
        kv.set("adapt", adapt);
        kv.set("mask_policy", mask_policy);
        kv.set("threads", std::to_string(threads));
        kv.set("timings", timings ? "true" : "false");
        if (!data_dir.empty()) kv.set("data_dir", data_dir);
        if (!base_path.empty()) kv.set("base_path", base_path);
        if (!checkpoint_path.empty()) kv.set("checkpoint_path", checkpoint_path);
        if (!out_dir.empty()) kv.set("out_dir", out_dir);
        return kv;
    }

    void apply(const KvConfig& kv) {
        for (const auto& [key, value] : kv.entries()) apply_one(key, value);
    }

    void apply_one(const std::string& key, const std::string& value) {
        if (key == "task") task = value;
        else if (key == "height") height = parse_size(key, value);
        else if (key == "width") width = parse_size(key, value);
        else if (key == "patch") patch = parse_size(key, value);
        else if (key == "model_dim") model_dim = parse_size(key, value);
        else if (key == "hidden_dim") hidden_dim = parse_size(key, value);
        else if (key == "heads") heads = parse_size(key, value);
        else if (key == "rank") rank = parse_size(key, value);
        else if (key == "offset_scale") offset_scale = parse_double(key, value);
        else if (key == "steps") steps = parse_size(key, value);
        else if (key == "accumulation") accumulation = parse_size(key, value);
        else if (key == "dropout_prob") dropout_prob = parse_double(key, value);
        else if (key == "lr") lr = parse_double(key, value);
        else if (key == "seed") seed = parse_size(key, value);
        else if (key == "euler_steps") euler_steps = parse_size(key, value);
        else if (key == "eval_samples") eval_samples = parse_size(key, value);
        else if (key == "count") count = parse_size(key, value);
        else if (key == "num_regions") num_regions = parse_size(key, value);
        else if (key == "light_smoothness") light_smoothness = parse_double(key, value);
        else if (key == "precision") precision = value;
        else if (key == "mode") mode = value;
        else if (key == "adapt") adapt = value;
        else if (key == "mask_policy") mask_policy = value;
        else if (key == "threads") threads = static_cast<unsigned>(parse_size(key, value));
        else if (key == "timings") timings = parse_bool(key, value);
        else if (key == "data_dir") data_dir = value;
        else if (key == "base_path") base_path = value;
        else if (key == "checkpoint_path") checkpoint_path = value;
        else if (key == "out_dir") out_dir = value;
        else throw ConfigError("unknown config key: " + key);
    }

    static RunConfig from_kv(const KvConfig& kv) {
        RunConfig cfg;
        cfg.apply(kv);
        return cfg;
    }

  private:
    static std::string format_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }
    static std::uint64_t parse_size(const std::string& key, const std::string& value) {
        try {
            std::size_t used = 0;
            const std::uint64_t v = std::stoull(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected an integer, got '" + value + "'");
        }
    }
    static double parse_double(const std::string& key, const std::string& value) {
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected a number, got '" + value + "'");
        }
    }
    static bool parse_bool(const std::string& key, const std::string& value) {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw ConfigError("config key " + key + ": expected true/false, got '" + value + "'");
    }
};

}  // namespace teamwork
