#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "salt/tensor.hpp"

namespace salt {

// In-memory labeled image set. `ids` are stable global sample ids that
// survive subtask filtering; the protocol uses them to reference labels
// without ever moving label values to the client.
struct Dataset {
    Shape sample_shape; // [C,H,W]
    std::vector<float> images;
    std::vector<int32_t> labels;
    std::vector<uint32_t> ids;
    int32_t num_classes = 0;

    int64_t count() const { return static_cast<int64_t>(labels.size()); }
    const float* sample(int64_t row) const {
        return images.data() + row * shape_numel(sample_shape);
    }
};

// Standard CIFAR binary distributions: 3073-byte records (label + 3072
// pixels) for CIFAR-10, 3074-byte records (coarse + fine label) for
// CIFAR-100. Pixels scale to [0,1].
Dataset load_cifar10(const std::string& dir, bool train);
Dataset load_cifar100(const std::string& dir, bool train);

// Gaussian class blobs in image space: per-class centers drawn once from the
// seed, samples = center + noise * N(0,1). Train and test come from the same
// centers. Labels are balanced round-robin.
std::pair<Dataset, Dataset> make_blobs(int32_t classes, int64_t n_train, int64_t n_test,
                                       double noise, uint64_t seed, Shape sample_shape = {3, 32, 32});

struct Standardizer {
    std::vector<double> mean;   // per channel
    std::vector<double> stddev; // per channel
};

Standardizer fit_standardizer(const Dataset& train);
void standardize(Dataset& ds, const Standardizer& st);

// Declarative dataset source. `root` falls back to SALT_DATA_DIR. Loading
// always standardizes both splits with the train-split statistics.
struct DatasetSpec {
    std::string source = "synthetic-blobs"; // cifar10-binary | cifar100-binary | synthetic-blobs
    std::string root;
    int32_t blob_classes = 10;
    int64_t blob_train = 6000;
    int64_t blob_test = 2000;
    double blob_noise = 6.0;
    uint64_t blob_seed = 7;

    bool operator==(const DatasetSpec&) const = default;
};

std::pair<Dataset, Dataset> load_dataset(const DatasetSpec& spec);

struct SubtaskSpec {
    std::vector<int32_t> class_subset; // ordered original labels
    double val_fraction = 0.1;         // carved from train, stratified
    int64_t train_cap = 0;             // 0 = keep all; otherwise stratified cap before the val carve
};

struct Subtask {
    Dataset train;
    Dataset val;
    Dataset test;
};

// Filters both splits to the class subset, optionally caps the train split,
// then carves a stratified validation set. Labels keep their original
// indices; predictions stay over the full logit head.
Subtask make_subtask(const Dataset& full_train, const Dataset& full_test, const SubtaskSpec& spec,
                     uint64_t seed);

} // namespace salt
