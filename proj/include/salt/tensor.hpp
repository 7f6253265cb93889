#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "salt/errors.hpp"

namespace salt {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

// Dense rank-N array of 32-bit reals with optional gradient tracking.
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets tape closures accumulate gradients visible to the caller.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from_data(Shape shape, std::vector<float> data);
    static Tensor scalar(float value);

    bool defined() const { return st_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    int64_t dim(size_t i) const;
    size_t rank() const;

    float* data();
    const float* data() const;
    std::vector<float>& vec();
    const std::vector<float>& vec() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    bool has_grad() const;
    float* grad();
    const float* grad() const;
    std::vector<float>& grad_vec();
    // allocate a zeroed gradient buffer if absent
    void ensure_grad();
    // drop the gradient buffer
    void clear_grad();

    // deep copy of data (gradient buffer and tracking flag are not copied)
    Tensor clone() const;
    float item() const;
    bool all_finite() const;
    bool same_storage(const Tensor& other) const { return st_ == other.st_; }

  private:
    struct Storage {
        Shape shape;
        std::vector<float> data;
        std::vector<float> grad; // empty unless materialized
        bool requires_grad = false;
    };
    explicit Tensor(std::shared_ptr<Storage> st) : st_(std::move(st)) {}
    Storage& st();
    const Storage& st() const;
    std::shared_ptr<Storage> st_;
};

// Ordered record of executed operations. backward() replays the closures in
// exact reverse execution order, seeding d(loss)/d(loss) = 1. A tape is
// consumed by one backward pass; replaying a spent tape throws TapeError.
class Tape {
  public:
    void record(std::function<void()> backward_fn);
    size_t size() const { return ops_.size(); }
    bool spent() const { return spent_; }

    // loss must be a scalar tensor produced on this tape
    void backward(Tensor loss);
    // seed d(root)/d(root) = seed instead of 1 (input-gradient probes)
    void backward_seeded(Tensor root, const Tensor& seed);

  private:
    void run_reverse();
    std::vector<std::function<void()>> ops_;
    bool spent_ = false;
};

// A named, optionally frozen trainable tensor. Freezing a parameter turns
// gradient tracking off, so no tape ever records a gradient path into it.
struct Parameter {
    Tensor tensor;
    std::string name;
    bool frozen = false;

    void set_frozen(bool v) {
        frozen = v;
        tensor.set_requires_grad(!v);
    }
};

} // namespace salt
