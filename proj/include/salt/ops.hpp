#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "salt/tensor.hpp"

namespace salt {

// Global multiply-accumulate counter. Conv and linear ops add the MACs they
// actually execute (forward and backward paths separately); the harness
// snapshots it to derive a deterministic compute-latency model.
std::atomic<uint64_t>& mac_counter();

// 2-D cross-correlation. x:[N,C,H,W], w:[K,C,kh,kw], b:[K] -> [N,K,H',W']
// with H' = (H + 2*pad - kh) / stride + 1, which must divide exactly.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int padding);

// Batch normalization over [N,C,H,W]. Train mode normalizes by batch
// statistics (biased variance, eps guard) and updates running stats with
// momentum; eval mode normalizes by the running stats. running_mean and
// running_var are rank-1 [C] tensors owned by the calling layer.
Tensor batchnorm2d(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool train,
                   float momentum = 0.1f, float eps = 1e-5f);

Tensor relu(Tape* tape, const Tensor& x);

// Max pooling with square kernel; backward routes the gradient to the first
// maximum position in each window.
Tensor maxpool2d(Tape* tape, const Tensor& x, int kernel, int stride);

// x:[N,F] @ w:[O,F]^T + b:[O] -> [N,O]
Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);

// [N,C,H,W] -> [N,C], mean over the spatial extent
Tensor global_avg_pool(Tape* tape, const Tensor& x);

// elementwise sum of two same-shape tensors
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

// Mean cross-entropy over the batch, log-sum-exp stabilized.
// logits:[N,K], labels in [0,K). Returns a scalar tensor.
Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int32_t>& labels);

// Tape-free loss + d(loss)/d(logits) in one call, for callers that own no
// tape (the serving side computes its gradient seed with this).
struct CeWithGrad {
    float loss = 0.0f;
    Tensor logit_grad;
};
CeWithGrad softmax_cross_entropy_with_grad(const Tensor& logits, const std::vector<int32_t>& labels);

} // namespace salt
