#include "probe/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace probe {

namespace {

Json layer_to_json(const LayerSpec& l) {
    Json j;
    j["kind"] = l.kind_name();
    switch (l.kind) {
        case LayerKind::Dense:
            j["in"] = l.in;
            j["out"] = l.out;
            break;
        case LayerKind::Conv2d:
            j["in_ch"] = l.in_ch;
            j["out_ch"] = l.out_ch;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["pad"] = l.pad;
            break;
        case LayerKind::BatchNorm:
            j["features"] = l.features;
            j["eps"] = l.eps;
            j["momentum"] = l.momentum;
            break;
        case LayerKind::MaxPool:
            j["window"] = l.window;
            break;
        case LayerKind::Residual: {
            Json inner = Json::array();
            for (const auto& il : l.inner) inner.push_back(layer_to_json(il));
            j["inner"] = inner;
            break;
        }
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const Json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") return LayerSpec::dense(j.at("in"), j.at("out"));
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "conv2d")
        return LayerSpec::conv2d(j.at("in_ch"), j.at("out_ch"), j.at("kernel"),
                                 j.value("stride", 1), j.value("pad", 0));
    if (kind == "batchnorm")
        return LayerSpec::batchnorm(j.at("features"), j.value("eps", 1e-5),
                                    j.value("momentum", 0.1));
    if (kind == "maxpool") return LayerSpec::maxpool(j.at("window"));
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "residual") {
        std::vector<LayerSpec> inner;
        for (const auto& ij : j.at("inner")) inner.push_back(layer_from_json(ij));
        return LayerSpec::residual(std::move(inner));
    }
    throw FormatError("unknown layer kind in spec JSON: " + kind);
}

}  // namespace

Json spec_to_json(const NetworkSpec& spec) {
    Json j;
    j["input_shape"] = spec.input_shape.dims;
    j["output_dim"] = spec.output_dim;
    Json layers = Json::array();
    for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
    j["layers"] = layers;
    return j;
}

NetworkSpec spec_from_json(const Json& j) {
    NetworkSpec spec;
    spec.input_shape.dims = j.at("input_shape").get<std::vector<int>>();
    spec.output_dim = j.at("output_dim").get<int>();
    for (const auto& lj : j.at("layers")) spec.layers.push_back(layer_from_json(lj));
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
// magic[8] = "PROBEPV1"
// u32 segment_count
// per segment: u16 name_len, name bytes, u64 offset, u64 length
// u64 total_values
// total_values little-endian doubles

namespace {

constexpr char kMagic[8] = {'P', 'R', 'O', 'B', 'E', 'P', 'V', '1'};

void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}
void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}
void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}
std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

static_assert(sizeof(double) == 8, "64-bit IEEE doubles required");

void put_doubles(std::ostream& os, const double* data, std::size_t count) {
    // Little-endian host assumed (x86-64 / aarch64); bytes written directly.
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamVector& params, const BnState* bn) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open checkpoint for writing: " + path);

    struct Entry {
        std::string name;
        std::uint64_t offset;
        std::uint64_t length;
        const double* data;
    };
    std::vector<Entry> entries;
    for (const auto& seg : params.segments)
        entries.push_back({seg.layer + "/" + role_name(seg.role),
                           static_cast<std::uint64_t>(seg.offset),
                           static_cast<std::uint64_t>(seg.length),
                           params.values.data() + seg.offset});

    std::uint64_t extra_offset = static_cast<std::uint64_t>(params.values.size());
    if (bn) {
        for (const auto& [layer, st] : bn->stats) {
            entries.push_back({layer + "/bn-mean", extra_offset,
                               static_cast<std::uint64_t>(st.mean.size()), st.mean.data()});
            extra_offset += st.mean.size();
            entries.push_back({layer + "/bn-var", extra_offset,
                               static_cast<std::uint64_t>(st.var.size()), st.var.data()});
            extra_offset += st.var.size();
        }
    }

    os.write(kMagic, 8);
    put_u32(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u16(os, static_cast<std::uint16_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u64(os, e.offset);
        put_u64(os, e.length);
    }
    put_u64(os, extra_offset);
    for (const auto& e : entries) put_doubles(os, e.data, e.length);
    if (!os) throw FormatError("checkpoint write failed: " + path);
}

ParamVector load_checkpoint(const std::string& path, const NetworkSpec& spec, BnState* bn) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("bad checkpoint magic in " + path);

    const std::uint32_t count = get_u32(is);
    struct Entry {
        std::string name;
        std::uint64_t offset;
        std::uint64_t length;
    };
    std::vector<Entry> entries(count);
    for (auto& e : entries) {
        const std::uint16_t len = get_u16(is);
        e.name.resize(len);
        is.read(e.name.data(), len);
        e.offset = get_u64(is);
        e.length = get_u64(is);
    }
    const std::uint64_t total = get_u64(is);
    std::vector<double> values(total);
    // Entries are stored back to back in table order.
    for (const auto& e : entries) {
        std::vector<double> buf(e.length);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(e.length * 8));
        if (!is)
            throw FormatError("truncated checkpoint at segment " + e.name + " in " + path);
        if (e.offset + e.length > total) throw FormatError("segment out of bounds: " + e.name);
        std::copy(buf.begin(), buf.end(), values.begin() + static_cast<std::ptrdiff_t>(e.offset));
    }

    ParamVector params = zero_params(spec);
    for (const auto& e : entries) {
        const auto slash = e.name.rfind('/');
        if (slash == std::string::npos) throw FormatError("malformed segment name: " + e.name);
        const std::string layer = e.name.substr(0, slash);
        const std::string role = e.name.substr(slash + 1);
        if (role == "bn-mean" || role == "bn-var") {
            if (!bn) continue;
            auto it = bn->stats.find(layer);
            if (it == bn->stats.end())
                throw FormatError("checkpoint has stats for unknown layer " + layer);
            Vec& target = role == "bn-mean" ? it->second.mean : it->second.var;
            if (static_cast<std::uint64_t>(target.size()) != e.length)
                throw FormatError("checkpoint stat length mismatch at " + e.name);
            for (std::uint64_t i = 0; i < e.length; ++i) target(i) = values[e.offset + i];
            continue;
        }
        const ParamSegment* seg = params.find(layer, role_from_name(role));
        if (!seg) throw FormatError("checkpoint segment " + e.name + " not in network spec");
        if (static_cast<std::uint64_t>(seg->length) != e.length)
            throw FormatError("checkpoint segment length mismatch at " + e.name);
        for (std::uint64_t i = 0; i < e.length; ++i)
            params.values(seg->offset + i) = values[e.offset + i];
    }
    return params;
}

std::string fnv1a_hex(const void* data, std::size_t size) {
    const unsigned char* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string config_hash(const Json& config) {
    // nlohmann objects keep keys sorted, so dump() is canonical.
    const std::string canon = config.dump();
    return fnv1a_hex(canon.data(), canon.size());
}

std::string param_fingerprint(const ParamVector& params) {
    return fnv1a_hex(params.values.data(), static_cast<std::size_t>(params.values.size()) * 8);
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open CSV for writing: " + path);
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
}

}  // namespace probe
