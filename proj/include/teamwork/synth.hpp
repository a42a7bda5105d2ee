#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

#include "teamwork/common.hpp"
#include "teamwork/flops.hpp"
#include "teamwork/rng.hpp"
#include "teamwork/tnsr_io.hpp"

namespace teamwork {

// Channel-major image plane (channels x height x width).
template <typename T>
struct Image {
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<T> data;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w),
                                                         data(c * h * w, T(0)) {
        if (c == 0 || h == 0 || w == 0) throw ShapeError("Image: dimensions must be positive");
    }

    T& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * height + y) * width + x];
    }
    const T& at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

using Plane = Image<double>;

enum class Role : std::uint8_t { InputTeammate = 0, OutputTeammate = 1 };

inline const char* role_name(Role r) {
    return r == Role::InputTeammate ? "input" : "output";
}

// One training element: per-teammate planes plus their input/output roles.
// Planes are stored in the encoded [-1, 1] range used by the denoiser.
template <typename T>
struct TeamSample {
    std::vector<Image<T>> planes;
    std::vector<Role> roles;

    void validate() const {
        if (planes.empty() || planes.size() != roles.size())
            throw ShapeError("TeamSample: planes and roles disagree");
        for (const auto& p : planes)
            if (!p.same_shape(planes[0])) throw ShapeError("TeamSample: plane shapes disagree");
        bool has_output = false;
        for (Role r : roles) has_output |= r == Role::OutputTeammate;
        if (!has_output) throw ParamError("TeamSample: needs at least one output teammate");
    }
};

// [0,1] plane values map to the [-1,1] network range via x -> 2x - 1.
template <typename T>
Image<T> encode_plane(const Image<double>& p) {
    Image<T> out(p.channels, p.height, p.width);
    for (std::size_t i = 0; i < p.size(); ++i) out.data[i] = static_cast<T>(2.0 * p.data[i] - 1.0);
    return out;
}

template <typename T>
Image<double> decode_plane(const Image<T>& p) {
    Image<double> out(p.channels, p.height, p.width);
    for (std::size_t i = 0; i < p.size(); ++i)
        out.data[i] = 0.5 * (static_cast<double>(p.data[i]) + 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Decomposition task: image = albedo * shading with piecewise-constant albedo
// (Voronoi regions of flat color) and a smooth strictly positive gray shading
// field. Recovering both factors coherently requires the output channels to
// agree with each other, which is what makes the task a coordination probe.

struct SynthSpec {
    std::size_t num_regions = 6;
    double light_smoothness = 2.0;  // highest spatial frequency of the shading mixture
};

struct DecompositionSample {
    Plane image, albedo, shading;  // all in [0, 1]
};

inline Plane compose(const Plane& albedo, const Plane& shading) {
    if (!albedo.same_shape(shading)) throw ShapeError("compose: plane shapes disagree");
    Plane out(albedo.channels, albedo.height, albedo.width);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = albedo.data[i] * shading.data[i];
    return out;
}

inline Plane make_albedo(Rng& rng, std::size_t h, std::size_t w, std::size_t num_regions) {
    if (num_regions < 2) throw ParamError("make_albedo: need at least 2 regions");
    std::vector<double> cx(num_regions), cy(num_regions);
    std::vector<std::array<double, 3>> color(num_regions);
    for (std::size_t k = 0; k < num_regions; ++k) {
        cx[k] = rng.uniform() * static_cast<double>(w);
        cy[k] = rng.uniform() * static_cast<double>(h);
        color[k] = {rng.uniform(), rng.uniform(), rng.uniform()};
    }
    Plane albedo(3, h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t best = 0;
            double best_d = 1e300;
            for (std::size_t k = 0; k < num_regions; ++k) {
                const double dx = (static_cast<double>(x) + 0.5) - cx[k];
                const double dy = (static_cast<double>(y) + 0.5) - cy[k];
                const double d = dx * dx + dy * dy;
                if (d < best_d) {  // ties resolve to the lowest region index
                    best_d = d;
                    best = k;
                }
            }
            for (std::size_t c = 0; c < 3; ++c) albedo.at(c, y, x) = color[best][c];
        }
    return albedo;
}

// Normalized positive low-frequency cosine mixture, replicated to 3 channels.
// Values land in [0.25, 1], keeping the field strictly positive.
inline Plane make_shading(Rng& rng, std::size_t h, std::size_t w, double smoothness) {
    if (!(smoothness > 0)) throw ParamError("make_shading: smoothness must be positive");
    constexpr std::size_t kComponents = 4;
    std::vector<double> fx(kComponents), fy(kComponents), amp(kComponents), phase(kComponents);
    for (std::size_t k = 0; k < kComponents; ++k) {
        fx[k] = rng.uniform_in(-smoothness, smoothness);
        fy[k] = rng.uniform_in(-smoothness, smoothness);
        amp[k] = rng.uniform_in(0.5, 1.0);
        phase[k] = rng.uniform_in(0.0, 2.0 * std::numbers::pi);
    }
    std::vector<double> field(h * w);
    double lo = 1e300, hi = -1e300;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double v = 0;
            for (std::size_t k = 0; k < kComponents; ++k)
                v += amp[k] * std::cos(2.0 * std::numbers::pi *
                                           (fx[k] * (static_cast<double>(x) / static_cast<double>(w)) +
                                            fy[k] * (static_cast<double>(y) / static_cast<double>(h))) +
                                       phase[k]);
            field[y * w + x] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double span = hi - lo;
    Plane shading(3, h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double unit = span > 1e-12 ? (field[y * w + x] - lo) / span : 0.5;
            const double v = 0.25 + 0.75 * unit;
            for (std::size_t c = 0; c < 3; ++c) shading.at(c, y, x) = v;
        }
    return shading;
}

inline DecompositionSample generate_decomposition_sample(Rng& rng, std::size_t h, std::size_t w,
                                                         const SynthSpec& spec) {
    if (h < 8 || w < 8) throw ParamError("generate: H and W must be at least 8");
    if (spec.num_regions < 2) throw ParamError("generate: num_regions must be at least 2");
    DecompositionSample s;
    s.albedo = make_albedo(rng, h, w, spec.num_regions);
    s.shading = make_shading(rng, h, w, spec.light_smoothness);
    s.image = compose(s.albedo, s.shading);
    return s;
}

// Deterministic in the seed: sample i always draws from the child stream i,
// so generation may run on any number of worker threads.
inline std::vector<DecompositionSample> generate_decomposition(const Rng& root, std::size_t count,
                                                               std::size_t h, std::size_t w,
                                                               const SynthSpec& spec,
                                                               unsigned threads = 1) {
    if (count == 0) throw ParamError("generate: count must be positive");
    std::vector<DecompositionSample> out(count);
    parallel_for(count, threads, [&](std::size_t i) {
        Rng rng = root.split(i);
        out[i] = generate_decomposition_sample(rng, h, w, spec);
    });
    return out;
}

// Inpainting task variant: a rectangular hole mask plus the masked image as
// conditions, the full image as the generated output.
struct InpaintSample {
    Plane masked, mask, image;
};

inline InpaintSample generate_inpaint_sample(Rng& rng, std::size_t h, std::size_t w,
                                             const SynthSpec& spec) {
    InpaintSample s;
    s.image = generate_decomposition_sample(rng, h, w, spec).image;
    const std::size_t bw = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        rng.uniform_in(0.25, 0.7) * double(w)));
    const std::size_t bh = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        rng.uniform_in(0.25, 0.7) * double(h)));
    const std::size_t x0 = rng.uniform_int(w - bw + 1);
    const std::size_t y0 = rng.uniform_int(h - bh + 1);
    s.mask = Plane(3, h, w);
    for (std::size_t y = y0; y < y0 + bh; ++y)
        for (std::size_t x = x0; x < x0 + bw; ++x)
            for (std::size_t c = 0; c < 3; ++c) s.mask.at(c, y, x) = 1.0;
    s.masked = Plane(3, h, w);
    for (std::size_t i = 0; i < s.image.size(); ++i)
        s.masked.data[i] = s.image.data[i] * (1.0 - s.mask.data[i]);
    return s;
}

inline std::vector<InpaintSample> generate_inpaint(const Rng& root, std::size_t count,
                                                   std::size_t h, std::size_t w,
                                                   const SynthSpec& spec, unsigned threads = 1) {
    if (count == 0) throw ParamError("generate: count must be positive");
    std::vector<InpaintSample> out(count);
    parallel_for(count, threads, [&](std::size_t i) {
        Rng rng = root.split(i);
        out[i] = generate_inpaint_sample(rng, h, w, spec);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Metrics.

// RMSE between pred_albedo * pred_shading and the image, after fitting one
// least-squares scale per channel on the recomposed product. The scale fit
// removes the inherent albedo/shading intensity ambiguity.
inline double recomposition_error(const Plane& pred_albedo, const Plane& pred_shading,
                                  const Plane& image) {
    if (!pred_albedo.same_shape(pred_shading) || !pred_albedo.same_shape(image))
        throw ShapeError("recomposition_error: plane shapes disagree");
    const std::size_t hw = image.height * image.width;
    double sse = 0;
    for (std::size_t c = 0; c < image.channels; ++c) {
        double pp = 0, pi = 0;
        std::vector<double> prod(hw);
        for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t at = c * hw + i;
            prod[i] = pred_albedo.data[at] * pred_shading.data[at];
            pp += prod[i] * prod[i];
            pi += prod[i] * image.data[c * hw + i];
        }
        const double alpha = pp > 1e-300 ? pi / pp : 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            const double d = alpha * prod[i] - image.data[c * hw + i];
            sse += d * d;
        }
    }
    return std::sqrt(sse / static_cast<double>(image.size()));
}

inline double plane_rmse(const Plane& pred, const Plane& truth) {
    if (!pred.same_shape(truth)) throw ShapeError("plane_rmse: shapes disagree");
    double sse = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - truth.data[i];
        sse += d * d;
    }
    return std::sqrt(sse / static_cast<double>(pred.size()));
}

inline std::array<double, 3> per_channel_rmse(const Plane& pred, const Plane& truth) {
    if (!pred.same_shape(truth) || pred.channels != 3)
        throw ShapeError("per_channel_rmse: shapes disagree");
    const std::size_t hw = pred.height * pred.width;
    std::array<double, 3> out{};
    for (std::size_t c = 0; c < 3; ++c) {
        double sse = 0;
        for (std::size_t i = 0; i < hw; ++i) {
            const double d = pred.data[c * hw + i] - truth.data[c * hw + i];
            sse += d * d;
        }
        out[c] = std::sqrt(sse / static_cast<double>(hw));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset persistence: sample_%06d/{plane}.tnsr per sample plus a JSON
// manifest naming the teammates, their roles, the generator spec and seed.

struct TeammateInfo {
    std::string name;
    Role role;
};

struct DatasetMeta {
    std::string task;  // "decompose" or "inpaint"
    std::size_t count = 0, height = 0, width = 0;
    std::uint64_t seed = 0;
    SynthSpec spec;
    std::vector<TeammateInfo> teammates;
};

inline std::vector<TeammateInfo> topology_for_task(const std::string& task) {
    if (task == "decompose")
        return {{"image", Role::InputTeammate},
                {"albedo", Role::OutputTeammate},
                {"shading", Role::OutputTeammate}};
    if (task == "inpaint")
        return {{"masked", Role::InputTeammate},
                {"mask", Role::InputTeammate},
                {"image", Role::OutputTeammate}};
    throw ConfigError("unknown task: " + task + " (expected decompose or inpaint)");
}

inline std::string sample_dir_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%06zu", index);
    return buf;
}

namespace detail {

inline void save_plane(const std::filesystem::path& path, const Plane& p) {
    save_tnsr(path, {p.channels, p.height, p.width}, p.data);
}

inline Plane load_plane(const std::filesystem::path& path) {
    TnsrRecord rec = load_tnsr(path);
    if (rec.dims.size() != 3) throw IoError("plane record is not 3-d: " + path.string());
    Plane p(static_cast<std::size_t>(rec.dims[0]), static_cast<std::size_t>(rec.dims[1]),
            static_cast<std::size_t>(rec.dims[2]));
    p.data = rec.values<double>();
    return p;
}

}  // namespace detail

inline void write_manifest(const std::filesystem::path& dir, const DatasetMeta& meta) {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write manifest in " + dir.string());
    os << "{\n";
    os << "  \"task\": \"" << meta.task << "\",\n";
    os << "  \"count\": " << meta.count << ",\n";
    os << "  \"height\": " << meta.height << ",\n";
    os << "  \"width\": " << meta.width << ",\n";
    os << "  \"seed\": " << meta.seed << ",\n";
    os << "  \"num_regions\": " << meta.spec.num_regions << ",\n";
    os << "  \"light_smoothness\": " << meta.spec.light_smoothness << ",\n";
    os << "  \"teammates\": [";
    for (std::size_t i = 0; i < meta.teammates.size(); ++i) {
        if (i) os << ", ";
        os << "{\"name\": \"" << meta.teammates[i].name << "\", \"role\": \""
           << role_name(meta.teammates[i].role) << "\"}";
    }
    os << "]\n}\n";
}

// Minimal field extraction for the manifest format written above.
inline std::string manifest_text(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw IoError("missing manifest: " + (dir / "manifest.json").string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return text;
}

inline DatasetMeta read_manifest(const std::filesystem::path& dir) {
    const std::string text = manifest_text(dir);
    auto find_number = [&](const std::string& key) -> double {
        auto pos = text.find("\"" + key + "\"");
        if (pos == std::string::npos) throw IoError("manifest missing key: " + key);
        pos = text.find(':', pos);
        return std::stod(text.substr(pos + 1));
    };
    auto find_string = [&](const std::string& key) -> std::string {
        auto pos = text.find("\"" + key + "\"");
        if (pos == std::string::npos) throw IoError("manifest missing key: " + key);
        pos = text.find(':', pos);
        auto start = text.find('"', pos) + 1;
        auto end = text.find('"', start);
        return text.substr(start, end - start);
    };
    DatasetMeta meta;
    meta.task = find_string("task");
    meta.count = static_cast<std::size_t>(find_number("count"));
    meta.height = static_cast<std::size_t>(find_number("height"));
    meta.width = static_cast<std::size_t>(find_number("width"));
    meta.seed = static_cast<std::uint64_t>(find_number("seed"));
    meta.spec.num_regions = static_cast<std::size_t>(find_number("num_regions"));
    meta.spec.light_smoothness = find_number("light_smoothness");
    meta.teammates = topology_for_task(meta.task);
    return meta;
}

// Writes sample directories plus the manifest. Existing files are replaced,
// so regeneration with the same seed is idempotent.
inline void write_dataset(const std::filesystem::path& dir, const DatasetMeta& meta,
                          const std::vector<std::vector<const Plane*>>& samples) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto sdir = dir / sample_dir_name(i);
        std::filesystem::create_directories(sdir);
        for (std::size_t k = 0; k < meta.teammates.size(); ++k)
            detail::save_plane(sdir / (meta.teammates[k].name + ".tnsr"), *samples[i][k]);
    }
    write_manifest(dir, meta);
}

inline void generate_dataset(const std::filesystem::path& dir, const std::string& task,
                             std::uint64_t seed, std::size_t count, std::size_t h, std::size_t w,
                             const SynthSpec& spec, unsigned threads = 1) {
    DatasetMeta meta;
    meta.task = task;
    meta.count = count;
    meta.height = h;
    meta.width = w;
    meta.seed = seed;
    meta.spec = spec;
    meta.teammates = topology_for_task(task);
    Rng root(seed);
    std::vector<std::vector<const Plane*>> rows;
    if (task == "decompose") {
        auto samples = generate_decomposition(root, count, h, w, spec, threads);
        for (const auto& s : samples) rows.push_back({&s.image, &s.albedo, &s.shading});
        write_dataset(dir, meta, rows);
    } else {
        auto samples = generate_inpaint(root, count, h, w, spec, threads);
        for (const auto& s : samples) rows.push_back({&s.masked, &s.mask, &s.image});
        write_dataset(dir, meta, rows);
    }
}

// In-memory dataset in the encoded [-1, 1] range plus ground-truth planes in
// [0, 1] for evaluation.
template <typename T>
struct Dataset {
    DatasetMeta meta;
    std::vector<TeamSample<T>> samples;       // encoded
    std::vector<std::vector<Plane>> truth;    // raw [0,1] planes, teammate order

    std::size_t team_size() const { return meta.teammates.size(); }
};

template <typename T>
Dataset<T> load_dataset(const std::filesystem::path& dir, std::size_t limit = 0) {
    Dataset<T> ds;
    ds.meta = read_manifest(dir);
    const std::size_t count = limit == 0 ? ds.meta.count : std::min(limit, ds.meta.count);
    ds.samples.reserve(count);
    ds.truth.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto sdir = dir / sample_dir_name(i);
        TeamSample<T> sample;
        std::vector<Plane> raw;
        for (const auto& tm : ds.meta.teammates) {
            Plane p = detail::load_plane(sdir / (tm.name + ".tnsr"));
            sample.planes.push_back(encode_plane<T>(p));
            sample.roles.push_back(tm.role);
            raw.push_back(std::move(p));
        }
        sample.validate();
        ds.samples.push_back(std::move(sample));
        ds.truth.push_back(std::move(raw));
    }
    return ds;
}

}  // namespace teamwork
