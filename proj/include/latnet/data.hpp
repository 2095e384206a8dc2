#pragma once

#include <string>
#include <vector>

#include "latnet/rng.hpp"
#include "latnet/tensor.hpp"

namespace latnet {

// A labelled classification dataset. images has a leading example dimension;
// pixel values live in [0, 1].
struct Dataset {
    Tensor images;  // [N, ...]
    std::vector<int> labels;
    std::string name;

    Index size() const { return labels.empty() ? 0 : static_cast<Index>(labels.size()); }
    Shape example_shape() const;
};

// Reads an IDX image/label pair (gzip-compressed files are detected by their
// magic bytes). Images are scaled to [0, 1] doubles and shaped [N, 1, H, W].
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name = "idx");

// Balanced two-class Gaussian blobs: class means at +/- separation/2 along the
// first coordinate, unit variance, affinely rescaled into [0,1] and clipped.
// Exactly n_per_class examples of each class, interleaved 0,1,0,1,...
Dataset synthetic_two_gaussians(Rng& rng, Index n_per_class, Index dim, double separation);

// First n examples.
Dataset head(const Dataset& data, Index n);

// Rows of `data` selected by index, in order.
Dataset gather(const Dataset& data, const std::vector<Index>& indices);

struct Batch {
    Tensor images;  // [B, ...]
    std::vector<int> labels;
};

// Minibatch index order for one epoch, seeded Fisher-Yates when shuffle is on,
// identity order otherwise. The final partial batch is included.
std::vector<std::vector<Index>> epoch_batches(Index n, Index batch_size, Rng& rng, bool shuffle);

// Materializes one minibatch.
Batch take_batch(const Dataset& data, const std::vector<Index>& indices);

// Materialized epoch of minibatches.
std::vector<Batch> batches(const Dataset& data, Index batch_size, Rng& rng, bool shuffle);

}  // namespace latnet
