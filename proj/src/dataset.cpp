#include "salt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "salt/rng.hpp"

namespace salt {

namespace {

constexpr int64_t kCifarPixels = 3 * 32 * 32;

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open " + path);
    const auto size = static_cast<size_t>(f.tellg());
    f.seekg(0);
    std::vector<uint8_t> bytes(size);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f) throw IoError("short read on " + path);
    return bytes;
}

void append_cifar_records(Dataset& ds, const std::string& path, int64_t record_size,
                          int label_offset) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % static_cast<size_t>(record_size) != 0) {
        throw IoError(path + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of the record size " + std::to_string(record_size));
    }
    const int64_t n = static_cast<int64_t>(bytes.size()) / record_size;
    for (int64_t r = 0; r < n; ++r) {
        const uint8_t* rec = bytes.data() + r * record_size;
        ds.labels.push_back(static_cast<int32_t>(rec[label_offset]));
        ds.ids.push_back(static_cast<uint32_t>(ds.ids.size()));
        const uint8_t* px = rec + (record_size - kCifarPixels);
        for (int64_t i = 0; i < kCifarPixels; ++i) {
            ds.images.push_back(static_cast<float>(px[i]) / 255.0f);
        }
    }
}

} // namespace

Dataset load_cifar10(const std::string& dir, bool train) {
    Dataset ds;
    ds.sample_shape = {3, 32, 32};
    ds.num_classes = 10;
    if (train) {
        for (int i = 1; i <= 5; ++i) {
            append_cifar_records(ds, dir + "/data_batch_" + std::to_string(i) + ".bin", 3073, 0);
        }
    } else {
        append_cifar_records(ds, dir + "/test_batch.bin", 3073, 0);
    }
    return ds;
}

Dataset load_cifar100(const std::string& dir, bool train) {
    Dataset ds;
    ds.sample_shape = {3, 32, 32};
    ds.num_classes = 100;
    // records carry coarse then fine label; the fine label is used
    append_cifar_records(ds, dir + (train ? "/train.bin" : "/test.bin"), 3074, 1);
    return ds;
}

std::pair<Dataset, Dataset> make_blobs(int32_t classes, int64_t n_train, int64_t n_test,
                                       double noise, uint64_t seed, Shape sample_shape) {
    if (classes <= 0 || n_train <= 0 || n_test <= 0 || noise < 0.0) {
        throw ConfigurationError("bad blob parameters");
    }
    const int64_t elems = shape_numel(sample_shape);
    Rng rng(seed);
    std::vector<float> centers(static_cast<size_t>(classes * elems));
    for (auto& v : centers) v = static_cast<float>(rng.normal());

    auto draw = [&](int64_t n, uint32_t id_base) {
        Dataset ds;
        ds.sample_shape = sample_shape;
        ds.num_classes = classes;
        ds.images.reserve(static_cast<size_t>(n * elems));
        for (int64_t i = 0; i < n; ++i) {
            const int32_t label = static_cast<int32_t>(i % classes);
            ds.labels.push_back(label);
            ds.ids.push_back(id_base + static_cast<uint32_t>(i));
            const float* c = centers.data() + static_cast<int64_t>(label) * elems;
            for (int64_t e = 0; e < elems; ++e) {
                ds.images.push_back(c[e] + static_cast<float>(noise * rng.normal()));
            }
        }
        return ds;
    };
    Dataset train = draw(n_train, 0);
    Dataset test = draw(n_test, static_cast<uint32_t>(n_train));
    return {std::move(train), std::move(test)};
}

Standardizer fit_standardizer(const Dataset& train) {
    if (train.count() == 0) throw ConfigurationError("cannot standardize an empty dataset");
    const int64_t C = train.sample_shape.at(0);
    const int64_t per_ch = shape_numel(train.sample_shape) / C;
    Standardizer st;
    st.mean.assign(static_cast<size_t>(C), 0.0);
    st.stddev.assign(static_cast<size_t>(C), 0.0);
    const int64_t n = train.count();
    for (int64_t c = 0; c < C; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int64_t r = 0; r < n; ++r) {
            const float* px = train.sample(r) + c * per_ch;
            for (int64_t i = 0; i < per_ch; ++i) {
                sum += px[i];
                sq += static_cast<double>(px[i]) * px[i];
            }
        }
        const double m = sum / static_cast<double>(n * per_ch);
        const double var = std::max(0.0, sq / static_cast<double>(n * per_ch) - m * m);
        st.mean[static_cast<size_t>(c)] = m;
        st.stddev[static_cast<size_t>(c)] = std::sqrt(var) > 0.0 ? std::sqrt(var) : 1.0;
    }
    return st;
}

void standardize(Dataset& ds, const Standardizer& st) {
    const int64_t C = ds.sample_shape.at(0);
    const int64_t per_ch = shape_numel(ds.sample_shape) / C;
    for (int64_t r = 0; r < ds.count(); ++r) {
        float* px = ds.images.data() + r * shape_numel(ds.sample_shape);
        for (int64_t c = 0; c < C; ++c) {
            const auto m = static_cast<float>(st.mean[static_cast<size_t>(c)]);
            const auto s = static_cast<float>(st.stddev[static_cast<size_t>(c)]);
            for (int64_t i = 0; i < per_ch; ++i) px[c * per_ch + i] = (px[c * per_ch + i] - m) / s;
        }
    }
}

std::pair<Dataset, Dataset> load_dataset(const DatasetSpec& spec) {
    std::string root = spec.root;
    if (root.empty()) {
        if (const char* env = std::getenv("SALT_DATA_DIR")) root = env;
    }
    std::pair<Dataset, Dataset> out;
    if (spec.source == "cifar10-binary") {
        out = {load_cifar10(root, true), load_cifar10(root, false)};
    } else if (spec.source == "cifar100-binary") {
        out = {load_cifar100(root, true), load_cifar100(root, false)};
    } else if (spec.source == "synthetic-blobs") {
        out = make_blobs(spec.blob_classes, spec.blob_train, spec.blob_test, spec.blob_noise,
                         spec.blob_seed);
    } else {
        throw ConfigurationError("unknown dataset source '" + spec.source + "'");
    }
    const Standardizer st = fit_standardizer(out.first);
    standardize(out.first, st);
    standardize(out.second, st);
    return out;
}

namespace {

Dataset take_rows(const Dataset& src, const std::vector<int64_t>& rows) {
    Dataset out;
    out.sample_shape = src.sample_shape;
    out.num_classes = src.num_classes;
    const int64_t elems = shape_numel(src.sample_shape);
    out.images.reserve(rows.size() * static_cast<size_t>(elems));
    for (int64_t r : rows) {
        out.labels.push_back(src.labels[static_cast<size_t>(r)]);
        out.ids.push_back(src.ids[static_cast<size_t>(r)]);
        const float* px = src.sample(r);
        out.images.insert(out.images.end(), px, px + elems);
    }
    return out;
}

} // namespace

Subtask make_subtask(const Dataset& full_train, const Dataset& full_test, const SubtaskSpec& spec,
                     uint64_t seed) {
    if (spec.class_subset.empty()) throw ConfigurationError("subtask class subset is empty");
    std::vector<bool> in_subset(static_cast<size_t>(full_train.num_classes), false);
    for (int32_t c : spec.class_subset) {
        if (c < 0 || c >= full_train.num_classes) {
            throw ConfigurationError("subtask class " + std::to_string(c) + " not in dataset");
        }
        in_subset[static_cast<size_t>(c)] = true;
    }

    // per-class row lists in original order
    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(full_train.num_classes));
    for (int64_t r = 0; r < full_train.count(); ++r) {
        const int32_t lab = full_train.labels[static_cast<size_t>(r)];
        if (in_subset[static_cast<size_t>(lab)]) by_class[static_cast<size_t>(lab)].push_back(r);
    }
    int64_t subtask_total = 0;
    for (int32_t c : spec.class_subset) subtask_total += static_cast<int64_t>(by_class[static_cast<size_t>(c)].size());
    if (subtask_total == 0) throw ConfigurationError("subtask matches no training samples");

    Rng rng(Rng::derive(seed, 0x5b7a5c));
    std::vector<int64_t> train_rows, val_rows;
    for (int32_t c : spec.class_subset) {
        auto rows = by_class[static_cast<size_t>(c)];
        // stratified cap, proportional to the class share
        if (spec.train_cap > 0) {
            const auto keep = static_cast<int64_t>(
                (spec.train_cap * static_cast<int64_t>(rows.size()) + subtask_total / 2) / subtask_total);
            const auto order = rng.permutation(static_cast<int64_t>(rows.size()));
            std::vector<int64_t> kept;
            for (int64_t i = 0; i < std::min<int64_t>(keep, static_cast<int64_t>(rows.size())); ++i) {
                kept.push_back(rows[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            }
            std::sort(kept.begin(), kept.end());
            rows = std::move(kept);
        }
        // stratified validation carve
        const auto n = static_cast<int64_t>(rows.size());
        int64_t n_val = static_cast<int64_t>(std::floor(spec.val_fraction * static_cast<double>(n)));
        if (spec.val_fraction > 0.0 && n_val == 0 && n >= 2) n_val = 1;
        const auto order = rng.permutation(n);
        std::vector<bool> is_val(static_cast<size_t>(n), false);
        for (int64_t i = 0; i < n_val; ++i) is_val[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;
        for (int64_t i = 0; i < n; ++i) {
            (is_val[static_cast<size_t>(i)] ? val_rows : train_rows).push_back(rows[static_cast<size_t>(i)]);
        }
    }

    std::vector<int64_t> test_rows;
    for (int64_t r = 0; r < full_test.count(); ++r) {
        if (in_subset[static_cast<size_t>(full_test.labels[static_cast<size_t>(r)])]) test_rows.push_back(r);
    }

    Subtask out;
    out.train = take_rows(full_train, train_rows);
    out.val = take_rows(full_train, val_rows);
    out.test = take_rows(full_test, test_rows);
    return out;
}

} // namespace salt
