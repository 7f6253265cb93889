#include "salt/tensor.hpp"

#include <cmath>
#include <sstream>

namespace salt {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape) {
    return full(std::move(shape), 0.0f);
}

Tensor Tensor::full(Shape shape, float value) {
    for (int64_t d : shape) {
        if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    }
    auto st = std::make_shared<Storage>();
    const int64_t n = shape_numel(shape);
    st->shape = std::move(shape);
    st->data.assign(static_cast<size_t>(n), value);
    return Tensor(std::move(st));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    for (int64_t d : shape) {
        if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto st = std::make_shared<Storage>();
    st->shape = std::move(shape);
    st->data = std::move(data);
    return Tensor(std::move(st));
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

Tensor::Storage& Tensor::st() {
    if (!st_) throw DimensionError("use of undefined tensor");
    return *st_;
}

const Tensor::Storage& Tensor::st() const {
    if (!st_) throw DimensionError("use of undefined tensor");
    return *st_;
}

const Shape& Tensor::shape() const { return st().shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(st().data.size()); }
int64_t Tensor::dim(size_t i) const { return st().shape.at(i); }
size_t Tensor::rank() const { return st().shape.size(); }

float* Tensor::data() { return st().data.data(); }
const float* Tensor::data() const { return st().data.data(); }
std::vector<float>& Tensor::vec() { return st().data; }
const std::vector<float>& Tensor::vec() const { return st().data; }

bool Tensor::requires_grad() const { return st().requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    st().requires_grad = v;
    if (!v) st().grad.clear();
    return *this;
}

bool Tensor::has_grad() const { return !st().grad.empty(); }

float* Tensor::grad() { return st().grad.empty() ? nullptr : st().grad.data(); }
const float* Tensor::grad() const { return st().grad.empty() ? nullptr : st().grad.data(); }

std::vector<float>& Tensor::grad_vec() { return st().grad; }

void Tensor::ensure_grad() {
    auto& s = st();
    if (s.grad.empty()) s.grad.assign(s.data.size(), 0.0f);
}

void Tensor::clear_grad() { st().grad.clear(); }

Tensor Tensor::clone() const {
    auto copy = std::make_shared<Storage>();
    copy->shape = st().shape;
    copy->data = st().data;
    return Tensor(std::move(copy));
}

float Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return st().data[0];
}

bool Tensor::all_finite() const {
    for (float v : st().data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tape::record(std::function<void()> backward_fn) {
    if (spent_) throw TapeError("recording onto a spent tape");
    ops_.push_back(std::move(backward_fn));
}

void Tape::run_reverse() {
    if (spent_) throw TapeError("backward on a spent tape");
    spent_ = true;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
}

void Tape::backward(Tensor loss) {
    if (loss.numel() != 1) throw TapeError("backward root must be scalar, got " + shape_str(loss.shape()));
    loss.ensure_grad();
    loss.grad()[0] += 1.0f;
    run_reverse();
}

void Tape::backward_seeded(Tensor root, const Tensor& seed) {
    if (!same_shape(root.shape(), seed.shape())) {
        throw DimensionError("backward seed shape " + shape_str(seed.shape()) +
                             " does not match root " + shape_str(root.shape()));
    }
    root.ensure_grad();
    float* g = root.grad();
    const float* s = seed.data();
    for (int64_t i = 0; i < root.numel(); ++i) g[i] += s[i];
    run_reverse();
}

} // namespace salt
