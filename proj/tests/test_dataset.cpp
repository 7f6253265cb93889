#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "helpers.hpp"
#include "salt/dataset.hpp"

using namespace salt;

namespace {

// writes a tiny synthetic CIFAR-style binary file
void write_fake_cifar10(const std::string& path, int records, uint8_t label_base) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    for (int r = 0; r < records; ++r) {
        f.put(static_cast<char>((label_base + r) % 10));
        for (int i = 0; i < 3072; ++i) f.put(static_cast<char>((r + i) % 256));
    }
}

void write_fake_cifar100(const std::string& path, int records) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    for (int r = 0; r < records; ++r) {
        f.put(static_cast<char>(r % 20));  // coarse
        f.put(static_cast<char>(r % 100)); // fine
        for (int i = 0; i < 3072; ++i) f.put(static_cast<char>(i % 256));
    }
}

} // namespace

TEST_CASE("cifar10 binary loader parses records and scales pixels") {
    const std::string dir = "/tmp/salt_fake_cifar10";
    [[maybe_unused]] int rc = std::system(("mkdir -p " + dir).c_str());
    for (int i = 1; i <= 5; ++i) {
        write_fake_cifar10(dir + "/data_batch_" + std::to_string(i) + ".bin", 4,
                           static_cast<uint8_t>(i));
    }
    write_fake_cifar10(dir + "/test_batch.bin", 6, 0);

    const Dataset train = load_cifar10(dir, true);
    CHECK(train.count() == 20);
    CHECK(train.sample_shape == Shape{3, 32, 32});
    CHECK(train.num_classes == 10);
    CHECK(train.labels[0] == 1); // first record of batch 1
    for (float v : train.images) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    const Dataset test = load_cifar10(dir, false);
    CHECK(test.count() == 6);

    SUBCASE("record size mismatch is rejected") {
        std::ofstream f(dir + "/test_batch.bin", std::ios::binary | std::ios::app);
        f.put(0); // now truncated mid-record
        f.close();
        CHECK_THROWS_AS(load_cifar10(dir, false), IoError);
    }
    SUBCASE("missing file is rejected") {
        CHECK_THROWS_AS(load_cifar10("/tmp/no_such_dir_salt", true), IoError);
    }
}

TEST_CASE("cifar100 binary loader reads the fine label") {
    const std::string dir = "/tmp/salt_fake_cifar100";
    [[maybe_unused]] int rc = std::system(("mkdir -p " + dir).c_str());
    write_fake_cifar100(dir + "/train.bin", 10);
    write_fake_cifar100(dir + "/test.bin", 5);
    const Dataset train = load_cifar100(dir, true);
    CHECK(train.count() == 10);
    CHECK(train.num_classes == 100);
    CHECK(train.labels[7] == 7);
}

TEST_CASE("blobs have exact requested shape and balanced labels") {
    auto [train, test] = make_blobs(5, 50, 20, 1.0, 42, {3, 16, 16});
    CHECK(train.count() == 50);
    CHECK(test.count() == 20);
    CHECK(train.sample_shape == Shape{3, 16, 16});
    CHECK(train.num_classes == 5);
    std::vector<int> counts(5, 0);
    for (int32_t lab : train.labels) counts[static_cast<size_t>(lab)]++;
    for (int c : counts) CHECK(c == 10);
    // ids unique across splits
    CHECK(train.ids.front() == 0);
    CHECK(test.ids.front() == 50);

    auto [t2, e2] = make_blobs(5, 50, 20, 1.0, 42, {3, 16, 16});
    CHECK(t2.images == train.images); // seed determinism
    CHECK_THROWS_AS(make_blobs(0, 10, 10, 1.0, 1), ConfigurationError);
}

TEST_CASE("standardization drives per-channel moments to (0,1) on the train split") {
    DatasetSpec spec;
    spec.source = "synthetic-blobs";
    spec.blob_classes = 10;
    spec.blob_train = 1000;
    spec.blob_test = 200;
    spec.blob_noise = 4.0;
    spec.blob_seed = 9;
    auto [train, test] = load_dataset(spec);

    const int64_t per_ch = 32 * 32;
    for (int64_t c = 0; c < 3; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int64_t r = 0; r < train.count(); ++r) {
            const float* px = train.sample(r) + c * per_ch;
            for (int64_t i = 0; i < per_ch; ++i) {
                sum += px[i];
                sq += static_cast<double>(px[i]) * px[i];
            }
        }
        const double n = static_cast<double>(train.count() * per_ch);
        const double mean = sum / n;
        const double stddev = std::sqrt(sq / n - mean * mean);
        CHECK(std::abs(mean) < 0.01);
        CHECK(std::abs(stddev - 1.0) < 0.01);
    }
}

TEST_CASE("subtask filtering follows the class-fraction rule") {
    auto [train, test] = make_blobs(10, 1000, 200, 2.0, 5);
    SubtaskSpec spec;
    spec.class_subset = {0, 1, 2, 3, 4};
    spec.val_fraction = 0.0;
    const Subtask task = make_subtask(train, test, spec, 1);
    // 5 of 10 balanced classes -> half of each split
    CHECK(task.train.count() == 500);
    CHECK(task.test.count() == 100);
    CHECK(task.val.count() == 0);
    for (int32_t lab : task.train.labels) CHECK(lab <= 4); // original labels kept
}

TEST_CASE("subtask validation carve is stratified and capped") {
    auto [train, test] = make_blobs(10, 1000, 200, 2.0, 6);
    SubtaskSpec spec;
    spec.class_subset = {0, 1, 2, 3, 4};
    spec.val_fraction = 0.1;
    spec.train_cap = 200;
    const Subtask task = make_subtask(train, test, spec, 2);
    CHECK(task.train.count() + task.val.count() == 200);
    CHECK(task.val.count() == 20);
    std::vector<int> val_counts(10, 0);
    for (int32_t lab : task.val.labels) val_counts[static_cast<size_t>(lab)]++;
    for (int c = 0; c < 5; ++c) CHECK(val_counts[static_cast<size_t>(c)] == 4);

    // different seeds draw different carves
    const Subtask other = make_subtask(train, test, spec, 3);
    CHECK(other.val.ids != task.val.ids);
    // same seed reproduces exactly
    const Subtask again = make_subtask(train, test, spec, 2);
    CHECK(again.val.ids == task.val.ids);
    CHECK(again.train.ids == task.train.ids);
}

TEST_CASE("subtask over all classes equals the full dataset") {
    auto [train, test] = make_blobs(4, 100, 40, 2.0, 7);
    SubtaskSpec spec;
    spec.class_subset = {0, 1, 2, 3};
    spec.val_fraction = 0.0;
    const Subtask task = make_subtask(train, test, spec, 1);
    CHECK(task.train.count() == 100);
    CHECK(task.test.count() == 40);
}

TEST_CASE("empty or invalid subsets are rejected") {
    auto [train, test] = make_blobs(4, 40, 12, 2.0, 8);
    CHECK_THROWS_AS(make_subtask(train, test, {{}, 0.1, 0}, 1), ConfigurationError);
    CHECK_THROWS_AS(make_subtask(train, test, {{7}, 0.1, 0}, 1), ConfigurationError);
}

TEST_CASE("unknown dataset source is rejected") {
    DatasetSpec spec;
    spec.source = "imagenet";
    CHECK_THROWS_AS(load_dataset(spec), ConfigurationError);
}
