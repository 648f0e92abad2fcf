#include "fedsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fedsim/rng.hpp"

namespace fedsim {

Matrix Dataset::gather(const std::vector<int>& indices, int begin, int end) const {
    Matrix batch(end - begin, dim());
    for (int r = begin; r < end; ++r) {
        const Sample& s = samples[indices[r]];
        std::copy(s.features.begin(), s.features.end(), batch.row(r - begin));
    }
    return batch;
}

std::vector<int> Dataset::gather_labels(const std::vector<int>& indices, int begin, int end) const {
    std::vector<int> labels(end - begin);
    for (int r = begin; r < end; ++r) labels[r - begin] = samples[indices[r]].label;
    return labels;
}

Matrix Dataset::all_features() const {
    Matrix batch(size(), dim());
    for (int r = 0; r < size(); ++r) std::copy(samples[r].features.begin(), samples[r].features.end(), batch.row(r));
    return batch;
}

std::vector<int> Dataset::all_labels() const {
    std::vector<int> labels(size());
    for (int r = 0; r < size(); ++r) labels[r] = samples[r].label;
    return labels;
}

Dataset gen_synthetic(int num_classes, int n, int dim, double spread, std::uint64_t seed) {
    require(num_classes >= 2, ErrorCode::invalid_argument, "gen_synthetic: need at least 2 classes");
    require(n >= num_classes, ErrorCode::invalid_argument, "gen_synthetic: need n >= num_classes");
    require(spread > 0.0, ErrorCode::invalid_argument, "gen_synthetic: spread must be positive");

    Rng rng(seed);
    std::vector<std::vector<double>> centers(num_classes, std::vector<double>(dim));
    for (auto& c : centers)
        for (double& v : c) v = rng.uniform();

    Dataset ds;
    ds.num_classes = num_classes;
    ds.shape = {1, 1, dim};
    ds.samples.resize(n);
    for (int i = 0; i < n; ++i) {
        int cls = i % num_classes;
        Sample& s = ds.samples[i];
        s.label = cls;
        s.features.resize(dim);
        for (int j = 0; j < dim; ++j)
            s.features[j] = std::clamp(centers[cls][j] + spread * rng.normal(), 0.0, 1.0);
    }
    return ds;
}

Dataset reshape_dataset(Dataset ds, Shape shape) {
    require(shape.elems() == ds.dim(), ErrorCode::invalid_argument, "reshape_dataset: element count mismatch");
    ds.shape = shape;
    return ds;
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, const std::string& field, const std::string& path) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    require(static_cast<bool>(in), ErrorCode::format, "idx: truncated " + field + " in " + path);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) | (std::uint32_t(buf[2]) << 8) |
           std::uint32_t(buf[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    require(static_cast<bool>(img), ErrorCode::io, "idx: cannot open image file " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    require(static_cast<bool>(lab), ErrorCode::io, "idx: cannot open label file " + labels_path);

    std::uint32_t img_magic = read_u32_be(img, "image magic", images_path);
    require(img_magic == kImagesMagic, ErrorCode::format,
            "idx: bad image magic number (expected 0x00000803) in " + images_path);
    std::uint32_t count = read_u32_be(img, "image count", images_path);
    std::uint32_t rows = read_u32_be(img, "image rows", images_path);
    std::uint32_t cols = read_u32_be(img, "image cols", images_path);

    std::uint32_t lab_magic = read_u32_be(lab, "label magic", labels_path);
    require(lab_magic == kLabelsMagic, ErrorCode::format,
            "idx: bad label magic number (expected 0x00000801) in " + labels_path);
    std::uint32_t lab_count = read_u32_be(lab, "label count", labels_path);
    require(count == lab_count, ErrorCode::format,
            "idx: image count " + std::to_string(count) + " does not match label count " + std::to_string(lab_count));

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    Dataset ds;
    ds.shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
    ds.samples.resize(count);
    std::vector<unsigned char> buf(pixels);
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
        require(static_cast<bool>(img), ErrorCode::format,
                "idx: truncated pixel payload at image " + std::to_string(i) + " in " + images_path);
        Sample& s = ds.samples[i];
        s.features.resize(pixels);
        for (std::size_t p = 0; p < pixels; ++p) s.features[p] = buf[p] / 255.0;
        int c = lab.get();
        require(c != EOF, ErrorCode::format, "idx: truncated label payload at " + std::to_string(i) + " in " + labels_path);
        s.label = c;
        max_label = std::max(max_label, c);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    require(ds.shape.channels == 1, ErrorCode::invalid_argument, "idx: only single-channel datasets");
    std::ofstream img(images_path, std::ios::binary);
    require(static_cast<bool>(img), ErrorCode::io, "idx: cannot write image file " + images_path);
    std::ofstream lab(labels_path, std::ios::binary);
    require(static_cast<bool>(lab), ErrorCode::io, "idx: cannot write label file " + labels_path);

    write_u32_be(img, kImagesMagic);
    write_u32_be(img, static_cast<std::uint32_t>(ds.size()));
    write_u32_be(img, static_cast<std::uint32_t>(ds.shape.height));
    write_u32_be(img, static_cast<std::uint32_t>(ds.shape.width));
    write_u32_be(lab, kLabelsMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(ds.size()));

    std::vector<unsigned char> buf;
    for (const Sample& s : ds.samples) {
        buf.resize(s.features.size());
        for (std::size_t p = 0; p < s.features.size(); ++p)
            buf[p] = static_cast<unsigned char>(std::lround(std::clamp(s.features[p], 0.0, 1.0) * 255.0));
        img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        lab.put(static_cast<char>(s.label));
    }
}

PartitionPlan dirichlet_partition(const Dataset& ds, int n_agents, double alpha, std::uint64_t seed) {
    require(n_agents >= 1, ErrorCode::invalid_argument, "dirichlet_partition: need at least one agent");
    require(alpha > 0.0, ErrorCode::invalid_argument, "dirichlet_partition: alpha must be positive");
    require(n_agents <= ds.size(), ErrorCode::invalid_argument,
            "dirichlet_partition: more agents than samples");

    std::vector<std::vector<int>> by_class(ds.num_classes);
    for (int i = 0; i < ds.size(); ++i) by_class[ds.samples[i].label].push_back(i);

    for (int attempt = 0; attempt < 1000; ++attempt) {
        Rng rng(seed + static_cast<std::uint64_t>(attempt));
        PartitionPlan plan;
        plan.alpha = alpha;
        plan.assignments.assign(n_agents, {});
        for (int c = 0; c < ds.num_classes; ++c) {
            if (by_class[c].empty()) continue;
            std::vector<double> p = rng.dirichlet(alpha, n_agents);
            std::vector<double> cdf(n_agents);
            double acc = 0.0;
            for (int a = 0; a < n_agents; ++a) {
                acc += p[a];
                cdf[a] = acc;
            }
            cdf[n_agents - 1] = 1.0;
            for (int idx : by_class[c]) {
                double u = rng.uniform();
                int agent = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
                plan.assignments[agent].push_back(idx);
            }
        }
        bool ok = true;
        for (const std::vector<int>& a : plan.assignments)
            if (a.empty()) ok = false;
        if (!ok) continue;
        for (std::vector<int>& a : plan.assignments) std::sort(a.begin(), a.end());
        return plan;
    }
    raise(ErrorCode::internal, "dirichlet_partition: could not produce a non-empty assignment for every agent");
}

PoisonSplit poison_split(const std::vector<int>& local_indices, double fraction, std::uint64_t seed) {
    require(fraction >= 0.0 && fraction <= 1.0, ErrorCode::invalid_argument,
            "poison_split: fraction must be in [0, 1]");
    PoisonSplit split;
    split.clean_indices = local_indices;
    split.fraction = fraction;
    int k = static_cast<int>(std::floor(fraction * static_cast<double>(local_indices.size())));
    if (k == 0) return split;
    Rng rng(seed);
    std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(local_indices.size()), k);
    split.bd_indices.reserve(k);
    for (int pos : picks) split.bd_indices.push_back(local_indices[pos]);
    std::sort(split.bd_indices.begin(), split.bd_indices.end());
    return split;
}

}  // namespace fedsim
