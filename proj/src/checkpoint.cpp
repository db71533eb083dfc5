#include "aqmm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aqmm {

namespace {

constexpr char kMagic[4] = {'A', 'Q', 'M', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::ostream& out, float v) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

float get_f32(std::istream& in) {
    const std::uint32_t bits = get_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::aquamam: return "aquamam";
        case ModelKind::aquamam_mog: return "aquamam-mog";
        case ModelKind::grid: return "grid";
    }
    throw std::invalid_argument("model_kind_name: unknown kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "aquamam") return ModelKind::aquamam;
    if (name == "aquamam-mog") return ModelKind::aquamam_mog;
    if (name == "grid") return ModelKind::grid;
    throw std::invalid_argument("model kind must be aquamam, aquamam-mog, or grid (got '" +
                                name + "')");
}

ScorerParameters Checkpoint::to_scorer() const {
    if (!scorer_config) {
        throw std::runtime_error("checkpoint: not a scorer model");
    }
    return ScorerParameters(*scorer_config, parameters);
}

GridModel Checkpoint::to_grid_model() const {
    if (!grid_config) {
        throw std::runtime_error("checkpoint: not a grid model");
    }
    return GridModel(*grid_config, parameters);
}

Checkpoint Checkpoint::from_scorer(const ScorerParameters& params, std::string embedded_config) {
    Checkpoint c;
    c.kind = params.config().head == HeadKind::binned ? ModelKind::aquamam : ModelKind::aquamam_mog;
    c.scorer_config = params.config();
    c.parameters = params.flat();
    c.embedded_config = std::move(embedded_config);
    return c;
}

Checkpoint Checkpoint::from_grid_model(const GridModel& model, std::string embedded_config) {
    Checkpoint c;
    c.kind = ModelKind::grid;
    c.grid_config = model.config();
    c.parameters = model.flat();
    c.embedded_config = std::move(embedded_config);
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(checkpoint.kind));
    if (checkpoint.kind == ModelKind::grid) {
        if (!checkpoint.grid_config) {
            throw std::runtime_error("save_checkpoint: grid checkpoint without grid config");
        }
        const GridModelConfig& c = *checkpoint.grid_config;
        put_u32(out, c.context_dim);
        put_u32(out, c.hidden);
        put_u32(out, c.penc_frequencies);
        put_u32(out, c.viewpoints);
    } else {
        if (!checkpoint.scorer_config) {
            throw std::runtime_error("save_checkpoint: scorer checkpoint without scorer config");
        }
        const ScorerConfig& c = *checkpoint.scorer_config;
        if ((checkpoint.kind == ModelKind::aquamam) != (c.head == HeadKind::binned)) {
            throw std::runtime_error("save_checkpoint: model kind and head kind disagree");
        }
        put_u32(out, c.n_bins);
        put_u32(out, c.penc_frequencies);
        put_u32(out, c.context_dim);
        put_u32(out, c.hidden1);
        put_u32(out, c.hidden2);
        put_u32(out, c.head == HeadKind::binned ? 0 : 1);
        put_u32(out, c.mog_components);
        put_u32(out, c.viewpoints);
    }
    put_u32(out, static_cast<std::uint32_t>(checkpoint.embedded_config.size()));
    out.write(checkpoint.embedded_config.data(),
              static_cast<std::streamsize>(checkpoint.embedded_config.size()));
    put_u64(out, static_cast<std::uint64_t>(checkpoint.parameters.size()));
    for (Eigen::Index i = 0; i < checkpoint.parameters.size(); ++i) {
        put_f32(out, static_cast<float>(checkpoint.parameters[i]));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("load_checkpoint: bad magic (not an AQMM checkpoint): " + path);
    }
    const std::uint32_t version = get_u32(in);
    if (version != kFormatVersion) {
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version));
    }
    Checkpoint c;
    const std::uint32_t kind = get_u32(in);
    if (kind > static_cast<std::uint32_t>(ModelKind::grid)) {
        throw std::runtime_error("load_checkpoint: unknown model kind " + std::to_string(kind));
    }
    c.kind = static_cast<ModelKind>(kind);
    if (c.kind == ModelKind::grid) {
        GridModelConfig g;
        g.context_dim = static_cast<int>(get_u32(in));
        g.hidden = static_cast<int>(get_u32(in));
        g.penc_frequencies = static_cast<int>(get_u32(in));
        g.viewpoints = static_cast<int>(get_u32(in));
        g.validate();
        c.grid_config = g;
    } else {
        ScorerConfig s;
        s.n_bins = static_cast<int>(get_u32(in));
        s.penc_frequencies = static_cast<int>(get_u32(in));
        s.context_dim = static_cast<int>(get_u32(in));
        s.hidden1 = static_cast<int>(get_u32(in));
        s.hidden2 = static_cast<int>(get_u32(in));
        const std::uint32_t head = get_u32(in);
        if (head > 1) throw std::runtime_error("load_checkpoint: unknown head kind");
        s.head = head == 0 ? HeadKind::binned : HeadKind::mog;
        s.mog_components = static_cast<int>(get_u32(in));
        s.viewpoints = static_cast<int>(get_u32(in));
        s.validate();
        if ((c.kind == ModelKind::aquamam) != (s.head == HeadKind::binned)) {
            throw std::runtime_error("load_checkpoint: model kind and head kind disagree");
        }
        c.scorer_config = s;
    }
    const std::uint32_t config_len = get_u32(in);
    c.embedded_config.resize(config_len);
    if (config_len > 0 &&
        !in.read(c.embedded_config.data(), static_cast<std::streamsize>(config_len))) {
        throw std::runtime_error("load_checkpoint: truncated embedded config");
    }
    const std::uint64_t count = get_u64(in);
    const std::uint64_t expected =
        c.kind == ModelKind::grid
            ? static_cast<std::uint64_t>(c.grid_config->parameter_count())
            : static_cast<std::uint64_t>(c.scorer_config->parameter_count());
    if (count != expected) {
        throw std::runtime_error("load_checkpoint: parameter count mismatch");
    }
    c.parameters.resize(static_cast<Eigen::Index>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        c.parameters[static_cast<Eigen::Index>(i)] = static_cast<double>(get_f32(in));
    }
    return c;
}

}  // namespace aqmm
