#include "latnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "latnet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in native little-endian order");

namespace latnet {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'L', 'N', 'C', 'P'};

void append_u32(std::string& buf, std::uint32_t v) {
    buf.append(reinterpret_cast<const char*>(&v), 4);
}

void append_u64(std::string& buf, std::uint64_t v) {
    buf.append(reinterpret_cast<const char*>(&v), 8);
}

std::uint32_t read_u32(const std::string& buf, std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + at, 4);
    return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t at) {
    std::uint64_t v;
    std::memcpy(&v, buf.data() + at, 8);
    return v;
}

Index network_param_count(const Network& net) {
    Index total = 0;
    for (const Layer& l : net.layers) total += layer_param_count(l);
    return total;
}

}  // namespace

json architecture_json(const Network& net) {
    json layers = json::array();
    for (const Layer& layer : net.layers) {
        json j;
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayer>) {
                    j = {{"type", "dense"}, {"out", l.weights.dim(0)}, {"in", l.weights.dim(1)}};
                } else if constexpr (std::is_same_v<L, Conv2DLayer>) {
                    j = {{"type", "conv2d"},
                         {"out_channels", l.kernels.dim(0)},
                         {"in_channels", l.kernels.dim(1)},
                         {"kernel", {l.kernels.dim(2), l.kernels.dim(3)}},
                         {"stride", l.stride},
                         {"padding", l.padding}};
                } else if constexpr (std::is_same_v<L, ReluLayer>) {
                    j = {{"type", "relu"}};
                } else if constexpr (std::is_same_v<L, MaxPool2DLayer>) {
                    j = {{"type", "maxpool2d"}, {"window", l.window}, {"stride", l.stride}};
                } else {
                    j = {{"type", "flatten"}};
                }
            },
            layer);
        layers.push_back(std::move(j));
    }
    return json{{"input_shape", net.input_shape},
                {"num_classes", net.num_classes},
                {"layers", std::move(layers)}};
}

Network network_from_architecture(const json& arch) {
    Network net;
    try {
        net.input_shape = arch.at("input_shape").get<Shape>();
        net.num_classes = arch.at("num_classes").get<int>();
        for (const json& j : arch.at("layers")) {
            const std::string type = j.at("type").get<std::string>();
            if (type == "dense") {
                DenseLayer l;
                l.weights = Tensor::zeros({j.at("out").get<Index>(), j.at("in").get<Index>()});
                l.bias = Tensor::zeros({j.at("out").get<Index>()});
                net.layers.push_back(std::move(l));
            } else if (type == "conv2d") {
                Conv2DLayer l;
                const auto k = j.at("kernel").get<std::vector<Index>>();
                if (k.size() != 2) throw ArchitectureError("conv2d kernel needs two extents");
                l.kernels = Tensor::zeros(
                    {j.at("out_channels").get<Index>(), j.at("in_channels").get<Index>(), k[0], k[1]});
                l.bias = Tensor::zeros({j.at("out_channels").get<Index>()});
                l.stride = j.at("stride").get<Index>();
                l.padding = j.at("padding").get<Index>();
                net.layers.push_back(std::move(l));
            } else if (type == "relu") {
                net.layers.push_back(ReluLayer{});
            } else if (type == "maxpool2d") {
                net.layers.push_back(MaxPool2DLayer{j.at("window").get<Index>(),
                                                    j.at("stride").get<Index>()});
            } else if (type == "flatten") {
                net.layers.push_back(FlattenLayer{});
            } else {
                throw ArchitectureError("unknown layer type '" + type + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ArchitectureError(std::string("malformed architecture: ") + e.what());
    }
    validate(net);
    return net;
}

void save_checkpoint(const Network& net, const json& provenance, const std::string& path) {
    const std::string body =
        json{{"architecture", architecture_json(net)}, {"provenance", provenance}}.dump();
    if (body.size() > 0xFFFFFFFFull) throw ArgumentError("checkpoint metadata too large");

    std::string buf;
    buf.append(kMagic, 4);
    append_u32(buf, kCheckpointVersion);
    append_u32(buf, static_cast<std::uint32_t>(body.size()));
    buf += body;
    append_u64(buf, static_cast<std::uint64_t>(network_param_count(net)));
    for (const Layer& layer : net.layers)
        for_each_param(layer, [&](const Tensor& t) {
            buf.append(reinterpret_cast<const char*>(t.data()),
                       static_cast<std::size_t>(t.size()) * sizeof(double));
        });
    const auto crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    append_u32(buf, crc);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename " + tmp + " to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::string buf;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError(path + ": not a checkpoint (bad magic)");
    const std::uint32_t version = read_u32(buf, 4);
    if (version != kCheckpointVersion)
        throw VersionError(path + ": file version " + std::to_string(version) + ", supported " +
                           std::to_string(kCheckpointVersion));
    const std::uint64_t body_len = read_u32(buf, 8);
    const std::size_t params_at = 12 + body_len + 8;
    if (buf.size() < params_at)
        throw ChecksumError(path + ": truncated before parameter payload");
    const std::uint64_t declared = read_u64(buf, 12 + body_len);
    const std::size_t expected = params_at + declared * sizeof(double) + 4;
    if (buf.size() != expected)
        throw ChecksumError(path + ": size " + std::to_string(buf.size()) + ", expected " +
                            std::to_string(expected));
    const std::uint32_t stored_crc = read_u32(buf, buf.size() - 4);
    const auto crc = static_cast<std::uint32_t>(crc32(
        0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
    if (crc != stored_crc)
        throw ChecksumError(path + ": crc mismatch (stored " + std::to_string(stored_crc) +
                            ", computed " + std::to_string(crc) + ")");

    json body;
    try {
        body = json::parse(buf.begin() + 12, buf.begin() + 12 + static_cast<std::ptrdiff_t>(body_len));
    } catch (const json::exception& e) {
        throw FormatError(path + ": metadata is not valid JSON: " + e.what());
    }

    Checkpoint ckpt;
    ckpt.net = network_from_architecture(body.at("architecture"));
    ckpt.provenance = body.value("provenance", json::object());
    if (static_cast<std::uint64_t>(network_param_count(ckpt.net)) != declared)
        throw ArchitectureError(path + ": payload of " + std::to_string(declared) +
                                " parameters, architecture needs " +
                                std::to_string(network_param_count(ckpt.net)));
    const char* src = buf.data() + params_at;
    for (Layer& layer : ckpt.net.layers)
        for_each_param(layer, [&](Tensor& t) {
            std::memcpy(t.data(), src, static_cast<std::size_t>(t.size()) * sizeof(double));
            src += static_cast<std::size_t>(t.size()) * sizeof(double);
        });
    return ckpt;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t model_hash(const Network& net) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const Layer& layer : net.layers)
        for_each_param(layer, [&](const Tensor& t) {
            h = fnv1a(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double), h);
        });
    return h;
}

}  // namespace latnet
