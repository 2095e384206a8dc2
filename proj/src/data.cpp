#include "latnet/data.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <utility>

#include "latnet/errors.hpp"

namespace latnet {

Shape Dataset::example_shape() const {
    if (images.rank() < 2) throw ShapeError("dataset images need a leading example dimension");
    return Shape(images.shape().begin() + 1, images.shape().end());
}

namespace {

struct GzCloser {
    void operator()(gzFile f) const {
        if (f) gzclose(f);
    }
};
using GzPtr = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// gzread handles both gzip-compressed and plain files.
GzPtr open_idx(const std::string& path) {
    GzPtr f(gzopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path);
    return f;
}

void read_exact(gzFile f, const std::string& path, void* dst, std::size_t n) {
    if (gzread(f, dst, static_cast<unsigned>(n)) != static_cast<int>(n))
        throw FormatError("truncated idx file " + path);
}

std::uint32_t read_u32_be(gzFile f, const std::string& path) {
    unsigned char b[4];
    read_exact(f, path, b, 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

std::string hex_magic(std::uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name) {
    constexpr std::uint32_t kImageMagic = 0x00000803;
    constexpr std::uint32_t kLabelMagic = 0x00000801;

    GzPtr imgf = open_idx(images_path);
    const std::uint32_t imagic = read_u32_be(imgf.get(), images_path);
    if (imagic != kImageMagic)
        throw FormatError(images_path + ": magic " + hex_magic(imagic) + ", expected " +
                          hex_magic(kImageMagic) + " (idx3 images)");
    const Index n = read_u32_be(imgf.get(), images_path);
    const Index h = read_u32_be(imgf.get(), images_path);
    const Index w = read_u32_be(imgf.get(), images_path);
    if (n <= 0 || h <= 0 || w <= 0) throw FormatError(images_path + ": empty image set");
    if (h > (1 << 16) || w > (1 << 16) || n * h * w > (Index(1) << 31))
        throw FormatError(images_path + ": implausible dimensions " + std::to_string(n) + "x" +
                          std::to_string(h) + "x" + std::to_string(w));

    Dataset data;
    data.name = name;
    data.images = Tensor({n, 1, h, w});
    {
        std::vector<unsigned char> row(static_cast<std::size_t>(h * w));
        for (Index i = 0; i < n; ++i) {
            read_exact(imgf.get(), images_path, row.data(), row.size());
            double* dst = data.images.data() + i * h * w;
            for (std::size_t j = 0; j < row.size(); ++j) dst[j] = row[j] / 255.0;
        }
    }

    GzPtr labf = open_idx(labels_path);
    const std::uint32_t lmagic = read_u32_be(labf.get(), labels_path);
    if (lmagic != kLabelMagic)
        throw FormatError(labels_path + ": magic " + hex_magic(lmagic) + ", expected " +
                          hex_magic(kLabelMagic) + " (idx1 labels)");
    const Index ln = read_u32_be(labf.get(), labels_path);
    if (ln != n)
        throw FormatError(labels_path + ": " + std::to_string(ln) + " labels for " +
                          std::to_string(n) + " images");
    std::vector<unsigned char> raw(static_cast<std::size_t>(ln));
    read_exact(labf.get(), labels_path, raw.data(), raw.size());
    data.labels.assign(raw.begin(), raw.end());
    return data;
}

Dataset synthetic_two_gaussians(Rng& rng, Index n_per_class, Index dim, double separation) {
    if (n_per_class <= 0 || dim <= 0)
        throw ArgumentError("two-gaussians dataset needs n_per_class > 0 and dim > 0");
    if (!(separation > 0.0)) throw ArgumentError("two-gaussians separation must be > 0");
    const Index n = 2 * n_per_class;
    Dataset data;
    data.name = "two-gaussians";
    data.images = Tensor({n, dim});
    data.labels.resize(static_cast<std::size_t>(n));
    // Raw space: mean +/- separation/2 on coordinate 0, unit variance. The
    // affine map 0.5 + z / (separation + 6) puts means plus three sigmas
    // inside [0,1]; the clip only trims the distribution tails.
    const double half = separation / 2.0;
    const double scale = 1.0 / (separation + 6.0);
    for (Index i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        double* row = data.images.data() + i * dim;
        for (Index j = 0; j < dim; ++j) {
            double z = rng.normal();
            if (j == 0) z += (label == 0 ? -half : half);
            row[j] = std::min(1.0, std::max(0.0, 0.5 + z * scale));
        }
        data.labels[static_cast<std::size_t>(i)] = label;
    }
    return data;
}

Dataset head(const Dataset& data, Index n) {
    if (n <= 0 || n > data.size())
        throw ArgumentError("head of " + std::to_string(n) + " from " + std::to_string(data.size()) +
                            " examples");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    return gather(data, idx);
}

Dataset gather(const Dataset& data, const std::vector<Index>& indices) {
    const Shape ex = data.example_shape();
    Index stride = 1;
    for (Index d : ex) stride *= d;
    Shape out_shape;
    out_shape.push_back(static_cast<Index>(indices.size()));
    out_shape.insert(out_shape.end(), ex.begin(), ex.end());

    Dataset out;
    out.name = data.name;
    out.images = Tensor(out_shape);
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Index src = indices[i];
        if (src < 0 || src >= data.size())
            throw ArgumentError("gather index " + std::to_string(src) + " outside dataset of " +
                                std::to_string(data.size()));
        std::copy_n(data.images.data() + src * stride, stride,
                    out.images.data() + static_cast<Index>(i) * stride);
        out.labels[i] = data.labels[static_cast<std::size_t>(src)];
    }
    return out;
}

std::vector<std::vector<Index>> epoch_batches(Index n, Index batch_size, Rng& rng, bool shuffle) {
    if (n <= 0 || batch_size <= 0) throw ArgumentError("epoch_batches needs n > 0 and batch_size > 0");
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    if (shuffle) {
        for (Index i = n - 1; i > 0; --i) {
            const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
    }
    std::vector<std::vector<Index>> out;
    for (Index at = 0; at < n; at += batch_size) {
        const Index b = std::min(batch_size, n - at);
        out.emplace_back(order.begin() + at, order.begin() + at + b);
    }
    return out;
}

Batch take_batch(const Dataset& data, const std::vector<Index>& indices) {
    Dataset sub = gather(data, indices);
    return Batch{std::move(sub.images), std::move(sub.labels)};
}

std::vector<Batch> batches(const Dataset& data, Index batch_size, Rng& rng, bool shuffle) {
    std::vector<Batch> out;
    for (const auto& idx : epoch_batches(data.size(), batch_size, rng, shuffle))
        out.push_back(take_batch(data, idx));
    return out;
}

}  // namespace latnet
