#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"
#include "fedsim/network.hpp"

namespace fedsim {

struct Sample {
    std::vector<double> features;  // values in [0, 1]
    int label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    Shape shape;  // {1,1,dim} for flat feature vectors, {c,h,w} for images

    int size() const { return static_cast<int>(samples.size()); }
    int dim() const { return shape.elems(); }

    // Batch assembled from a slice of `indices` [begin, end).
    Matrix gather(const std::vector<int>& indices, int begin, int end) const;
    std::vector<int> gather_labels(const std::vector<int>& indices, int begin, int end) const;
    Matrix all_features() const;
    std::vector<int> all_labels() const;
};

struct PartitionPlan {
    std::vector<std::vector<int>> assignments;  // per-agent sorted index lists
    double alpha = 0.0;
};

struct PoisonSplit {
    std::vector<int> clean_indices;  // the agent's full local set
    std::vector<int> bd_indices;     // subset selected for poisoning
    double fraction = 0.0;
};

// C Gaussian clusters with uniform random centers in [0,1]^dim, sample noise
// sd = spread, clipped back into [0,1]. Labels are assigned round-robin so
// every class appears when n >= C.
Dataset gen_synthetic(int num_classes, int n, int dim, double spread, std::uint64_t seed);

// Reinterpret a flat dataset as c x h x w images (dim must match).
Dataset reshape_dataset(Dataset ds, Shape shape);

// IDX binary format (big-endian): images magic 0x00000803, u32 count/rows/cols,
// row-major u8 pixels; labels magic 0x00000801, u32 count, u8 labels.
// Pixels are scaled to [0,1] by /255 on load.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// Per class c: draw p ~ Dir(alpha * 1_{n_agents}) and assign that class's
// indices multinomially by p. Re-draws with seed+1 while any agent is empty.
PartitionPlan dirichlet_partition(const Dataset& ds, int n_agents, double alpha, std::uint64_t seed);

// floor(fraction * |local|) indices sampled without replacement from
// local_indices; clean_indices keeps the full local set.
PoisonSplit poison_split(const std::vector<int>& local_indices, double fraction, std::uint64_t seed);

}  // namespace fedsim
