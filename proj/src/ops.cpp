#include "salt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "salt/parallel.hpp"

namespace salt {

std::atomic<uint64_t>& mac_counter() {
    static std::atomic<uint64_t> counter{0};
    return counter;
}

namespace {

void check_rank(const Tensor& t, size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) +
                             ", got " + shape_str(t.shape()));
    }
}

// Single-sample patch matrix in [C*kh*kw x Ho*Wo] layout: one row per
// kernel slot (c,u,v). Out-of-bounds reads are zero. Small enough to stay
// cache-resident, which is what makes the per-sample GEMM fast.
void im2col_sample(const float* xn, int64_t C, int64_t H, int64_t W,
                   int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                   int64_t Ho, int64_t Wo, float* col) {
    const int64_t rows = C * kh * kw;
    float* out = col;
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t c = r / (kh * kw);
        const int64_t u = (r / kw) % kh;
        const int64_t v = r % kw;
        const float* xc = xn + c * H * W;
        for (int64_t oi = 0; oi < Ho; ++oi, out += Wo) {
            const int64_t h = oi * stride - pad + u;
            if (h < 0 || h >= H) {
                std::memset(out, 0, sizeof(float) * static_cast<size_t>(Wo));
                continue;
            }
            const float* src = xc + h * W;
            const int64_t w0 = -pad + v;
            if (stride == 1) {
                const int64_t lo = std::max<int64_t>(0, -w0);
                const int64_t hi = std::min<int64_t>(Wo, W - w0);
                for (int64_t oj = 0; oj < lo; ++oj) out[oj] = 0.0f;
                for (int64_t oj = lo; oj < hi; ++oj) out[oj] = src[w0 + oj];
                for (int64_t oj = hi; oj < Wo; ++oj) out[oj] = 0.0f;
            } else {
                for (int64_t oj = 0; oj < Wo; ++oj) {
                    const int64_t ww = w0 + oj * stride;
                    out[oj] = (ww < 0 || ww >= W) ? 0.0f : src[ww];
                }
            }
        }
    }
}

// Position-major variant: [Ho*Wo x C*kh*kw], one row per output position.
// Used by the weight-gradient kernel, which accumulates rank-1 updates.
void im2colT_sample(const float* xn, int64_t C, int64_t H, int64_t W,
                    int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                    int64_t Ho, int64_t Wo, float* colT) {
    const int64_t rows = C * kh * kw;
    float* out = colT;
    for (int64_t oi = 0; oi < Ho; ++oi) {
        const int64_t h0 = oi * stride - pad;
        for (int64_t oj = 0; oj < Wo; ++oj, out += rows) {
            const int64_t w0 = oj * stride - pad;
            float* o = out;
            for (int64_t c = 0; c < C; ++c) {
                const float* xc = xn + c * H * W;
                for (int64_t u = 0; u < kh; ++u) {
                    const int64_t h = h0 + u;
                    if (h < 0 || h >= H) {
                        for (int64_t v = 0; v < kw; ++v) *o++ = 0.0f;
                        continue;
                    }
                    const float* src = xc + h * W;
                    for (int64_t v = 0; v < kw; ++v) {
                        const int64_t ww = w0 + v;
                        *o++ = (ww < 0 || ww >= W) ? 0.0f : src[ww];
                    }
                }
            }
        }
    }
}

// Scatter-add of one sample's patch-matrix gradient back to input layout.
void col2im_sample_add(const float* col, int64_t C, int64_t H, int64_t W,
                       int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                       int64_t Ho, int64_t Wo, float* xg) {
    const int64_t rows = C * kh * kw;
    const float* src = col;
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t c = r / (kh * kw);
        const int64_t u = (r / kw) % kh;
        const int64_t v = r % kw;
        float* gc = xg + c * H * W;
        for (int64_t oi = 0; oi < Ho; ++oi, src += Wo) {
            const int64_t h = oi * stride - pad + u;
            if (h < 0 || h >= H) continue;
            float* dst = gc + h * W;
            const int64_t w0 = -pad + v;
            if (stride == 1) {
                const int64_t lo = std::max<int64_t>(0, -w0);
                const int64_t hi = std::min<int64_t>(Wo, W - w0);
                for (int64_t oj = lo; oj < hi; ++oj) dst[w0 + oj] += src[oj];
            } else {
                for (int64_t oj = 0; oj < Wo; ++oj) {
                    const int64_t ww = w0 + oj * stride;
                    if (ww >= 0 && ww < W) dst[ww] += src[oj];
                }
            }
        }
    }
}

// C[rows x width] = A[rows x inner] . B[inner x width] (+ optional per-row
// bias), axpy form over the inner dimension. Accumulation order is fixed.
void gemm_axpy(int64_t rows, int64_t inner, int64_t width,
               const float* A, const float* B, float* C, const float* bias) {
    for (int64_t r = 0; r < rows; ++r) {
        float* c = C + r * width;
        if (bias) {
            const float bv = bias[r];
            for (int64_t j = 0; j < width; ++j) c[j] = bv;
        } else {
            std::memset(c, 0, sizeof(float) * static_cast<size_t>(width));
        }
        const float* a = A + r * inner;
        for (int64_t k = 0; k < inner; ++k) {
            const float av = a[k];
            if (av == 0.0f) continue;
            const float* b = B + k * width;
            for (int64_t j = 0; j < width; ++j) c[j] += av * b[j];
        }
    }
}

struct ConvGeom {
    int64_t N, C, H, W, K, kh, kw, stride, pad, Ho, Wo;
    int64_t rows() const { return C * kh * kw; }
    int64_t hw() const { return Ho * Wo; }
};

} // namespace

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int padding) {
    check_rank(x, 4, "conv2d input");
    check_rank(w, 4, "conv2d weight");
    check_rank(b, 1, "conv2d bias");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != C) {
        throw DimensionError("conv2d weight channels " + std::to_string(w.dim(1)) +
                             " != input channels " + std::to_string(C));
    }
    if (b.dim(0) != K) throw DimensionError("conv2d bias length != output channels");
    if (stride < 1 || padding < 0) throw ConfigurationError("conv2d stride/padding out of range");
    // floor convention: positions whose window would run off the padded
    // input are dropped, as in every mainstream conv implementation
    const int64_t hspan = H + 2 * padding - kh;
    const int64_t wspan = W + 2 * padding - kw;
    if (hspan < 0 || wspan < 0) throw ConfigurationError("conv2d kernel larger than padded input");
    const ConvGeom g{N, C, H, W, K, kh, kw, stride, padding, hspan / stride + 1, wspan / stride + 1};

    Tensor y = Tensor::zeros({N, K, g.Ho, g.Wo});
    parallel_for(N, [&](int64_t n0, int64_t n1) {
        std::vector<float> col(static_cast<size_t>(g.rows() * g.hw()));
        for (int64_t n = n0; n < n1; ++n) {
            im2col_sample(x.data() + n * C * H * W, C, H, W, kh, kw, g.stride, g.pad, g.Ho, g.Wo,
                          col.data());
            gemm_axpy(K, g.rows(), g.hw(), w.data(), col.data(), y.data() + n * K * g.hw(), b.data());
        }
    });
    mac_counter() += static_cast<uint64_t>(N * g.hw() * g.rows() * K);

    const bool track = tape && (x.requires_grad() || w.requires_grad() || b.requires_grad());
    if (track) {
        y.set_requires_grad(true);
        Tensor xc = x, wc = w, bc = b, yc = y;
        tape->record([xc, wc, bc, yc, g]() mutable {
            if (!yc.has_grad()) return;
            const float* gy = yc.grad();
            const int64_t hw = g.hw(), rows = g.rows();

            if (bc.requires_grad()) {
                bc.ensure_grad();
                float* gb = bc.grad();
                for (int64_t n = 0; n < g.N; ++n) {
                    for (int64_t k = 0; k < g.K; ++k) {
                        const float* row = gy + (n * g.K + k) * hw;
                        double acc = 0.0;
                        for (int64_t q = 0; q < hw; ++q) acc += row[q];
                        gb[k] += static_cast<float>(acc);
                    }
                }
            }

            if (wc.requires_grad()) {
                // dW[k] accumulates rank-1 updates dy[n][k][pos] * patch(pos)
                // over positions and samples; k-ranges are split across
                // workers so each dW row keeps one fixed accumulation order
                wc.ensure_grad();
                float* gw = wc.grad();
                parallel_for(g.K, [&](int64_t k0, int64_t k1) {
                    std::vector<float> colT(static_cast<size_t>(hw * rows));
                    for (int64_t n = 0; n < g.N; ++n) {
                        im2colT_sample(xc.data() + n * g.C * g.H * g.W, g.C, g.H, g.W, g.kh, g.kw,
                                       g.stride, g.pad, g.Ho, g.Wo, colT.data());
                        for (int64_t k = k0; k < k1; ++k) {
                            const float* dk = gy + (n * g.K + k) * hw;
                            float* gr = gw + k * rows;
                            for (int64_t q = 0; q < hw; ++q) {
                                const float dv = dk[q];
                                if (dv == 0.0f) continue;
                                const float* patch = colT.data() + q * rows;
                                for (int64_t r = 0; r < rows; ++r) gr[r] += dv * patch[r];
                            }
                        }
                    }
                });
                mac_counter() += static_cast<uint64_t>(g.N * hw * rows * g.K);
            }

            if (xc.requires_grad()) {
                // colgrad_n = W^T . dy_n, then scatter-add per sample
                std::vector<float> wT(static_cast<size_t>(rows * g.K));
                for (int64_t k = 0; k < g.K; ++k)
                    for (int64_t r = 0; r < rows; ++r)
                        wT[static_cast<size_t>(r * g.K + k)] = wc.data()[k * rows + r];
                xc.ensure_grad();
                parallel_for(g.N, [&](int64_t n0, int64_t n1) {
                    std::vector<float> cg(static_cast<size_t>(rows * hw));
                    for (int64_t n = n0; n < n1; ++n) {
                        gemm_axpy(rows, g.K, hw, wT.data(), gy + n * g.K * hw, cg.data(), nullptr);
                        col2im_sample_add(cg.data(), g.C, g.H, g.W, g.kh, g.kw, g.stride, g.pad,
                                          g.Ho, g.Wo, xc.grad() + n * g.C * g.H * g.W);
                    }
                });
                mac_counter() += static_cast<uint64_t>(g.N * hw * rows * g.K);
            }
        });
    }
    return y;
}

Tensor batchnorm2d(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool train,
                   float momentum, float eps) {
    check_rank(x, 4, "batchnorm2d input");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C) {
        throw DimensionError("batchnorm2d parameter length != channel count " + std::to_string(C));
    }
    const int64_t M = N * H * W;
    if (train && M < 2) throw DegenerateBatchError("batchnorm2d train mode needs N*H*W >= 2");

    std::vector<float> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
    if (train) {
        for (int64_t c = 0; c < C; ++c) {
            double sum = 0.0, sq = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const float* xc = x.data() + (n * C + c) * H * W;
                for (int64_t q = 0; q < H * W; ++q) {
                    sum += xc[q];
                    sq += static_cast<double>(xc[q]) * xc[q];
                }
            }
            const double mu = sum / static_cast<double>(M);
            const double var = std::max(0.0, sq / static_cast<double>(M) - mu * mu);
            mean[static_cast<size_t>(c)] = static_cast<float>(mu);
            invstd[static_cast<size_t>(c)] = static_cast<float>(1.0 / std::sqrt(var + eps));
            const double unbiased = var * static_cast<double>(M) / static_cast<double>(M - 1);
            running_mean.data()[c] = (1.0f - momentum) * running_mean.data()[c] + momentum * static_cast<float>(mu);
            running_var.data()[c] = (1.0f - momentum) * running_var.data()[c] + momentum * static_cast<float>(unbiased);
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean[static_cast<size_t>(c)] = running_mean.data()[c];
            invstd[static_cast<size_t>(c)] = 1.0f / std::sqrt(running_var.data()[c] + eps);
        }
    }

    Tensor y = Tensor::zeros(x.shape());
    parallel_for(N * C, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const int64_t c = i % C;
            const float g = gamma.data()[c], bb = beta.data()[c];
            const float mu = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
            const float* xc = x.data() + i * H * W;
            float* yc = y.data() + i * H * W;
            for (int64_t q = 0; q < H * W; ++q) yc[q] = (xc[q] - mu) * is * g + bb;
        }
    });

    const bool track = tape && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    if (track) {
        y.set_requires_grad(true);
        Tensor xc = x, gc = gamma, bc = beta, yc = y;
        auto mean_c = std::make_shared<std::vector<float>>(std::move(mean));
        auto invstd_c = std::make_shared<std::vector<float>>(std::move(invstd));
        tape->record([xc, gc, bc, yc, mean_c, invstd_c, train, N, C, H, W, M]() mutable {
            if (!yc.has_grad()) return;
            const float* gy = yc.grad();
            const int64_t HW = H * W;
            const bool need_dx = xc.requires_grad();
            if (need_dx) xc.ensure_grad();
            if (gc.requires_grad()) gc.ensure_grad();
            if (bc.requires_grad()) bc.ensure_grad();
            // channels are independent; gradients land in channel-disjoint
            // slices, so the split is race-free and order-stable
            parallel_for(C, [&](int64_t c0, int64_t c1) {
                for (int64_t c = c0; c < c1; ++c) {
                    const float mu = (*mean_c)[static_cast<size_t>(c)];
                    const float is = (*invstd_c)[static_cast<size_t>(c)];
                    const float g = gc.data()[c];
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (int64_t n = 0; n < N; ++n) {
                        const float* dyc = gy + (n * C + c) * HW;
                        const float* xcc = xc.data() + (n * C + c) * HW;
                        for (int64_t q = 0; q < HW; ++q) {
                            const float xhat = (xcc[q] - mu) * is;
                            sum_dy += dyc[q];
                            sum_dy_xhat += static_cast<double>(dyc[q]) * xhat;
                        }
                    }
                    if (gc.requires_grad()) gc.grad()[c] += static_cast<float>(sum_dy_xhat);
                    if (bc.requires_grad()) bc.grad()[c] += static_cast<float>(sum_dy);
                    if (!need_dx) continue;
                    if (train) {
                        const float mdy = static_cast<float>(sum_dy / static_cast<double>(M));
                        const float mdyx = static_cast<float>(sum_dy_xhat / static_cast<double>(M));
                        for (int64_t n = 0; n < N; ++n) {
                            const float* dyc = gy + (n * C + c) * HW;
                            const float* xcc = xc.data() + (n * C + c) * HW;
                            float* gx = xc.grad() + (n * C + c) * HW;
                            for (int64_t q = 0; q < HW; ++q) {
                                const float xhat = (xcc[q] - mu) * is;
                                gx[q] += g * is * (dyc[q] - mdy - xhat * mdyx);
                            }
                        }
                    } else {
                        for (int64_t n = 0; n < N; ++n) {
                            const float* dyc = gy + (n * C + c) * HW;
                            float* gx = xc.grad() + (n * C + c) * HW;
                            for (int64_t q = 0; q < HW; ++q) gx[q] += dyc[q] * g * is;
                        }
                    }
                }
            });
        });
    }
    return y;
}

Tensor relu(Tape* tape, const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const float* xd = x.data();
    float* yd = y.data();
    const int64_t n = x.numel();
    parallel_for(n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) yd[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
    });
    if (tape && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape->record([xc, yc]() mutable {
            if (!yc.has_grad()) return;
            xc.ensure_grad();
            const float* gy = yc.grad();
            const float* xd2 = xc.data();
            float* gx = xc.grad();
            parallel_for(xc.numel(), [&](int64_t i0, int64_t i1) {
                for (int64_t i = i0; i < i1; ++i)
                    if (xd2[i] > 0.0f) gx[i] += gy[i];
            });
        });
    }
    return y;
}

Tensor maxpool2d(Tape* tape, const Tensor& x, int kernel, int stride) {
    check_rank(x, 4, "maxpool2d input");
    if (kernel < 1 || stride < 1) throw ConfigurationError("maxpool2d kernel/stride out of range");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < kernel || W < kernel) throw DimensionError("maxpool2d kernel larger than input");
    const int64_t Ho = (H - kernel) / stride + 1;
    const int64_t Wo = (W - kernel) / stride + 1;

    Tensor y = Tensor::zeros({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * C * Ho * Wo));
    parallel_for(N * C, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const float* xc = x.data() + i * H * W;
            float* yc = y.data() + i * Ho * Wo;
            int64_t* am = argmax->data() + i * Ho * Wo;
            for (int64_t oi = 0; oi < Ho; ++oi) {
                for (int64_t oj = 0; oj < Wo; ++oj) {
                    float best = -std::numeric_limits<float>::infinity();
                    int64_t best_at = 0;
                    for (int64_t u = 0; u < kernel; ++u) {
                        for (int64_t v = 0; v < kernel; ++v) {
                            const int64_t at = (oi * stride + u) * W + (oj * stride + v);
                            if (xc[at] > best) {
                                best = xc[at];
                                best_at = at;
                            }
                        }
                    }
                    yc[oi * Wo + oj] = best;
                    am[oi * Wo + oj] = best_at;
                }
            }
        }
    });

    if (tape && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape->record([xc, yc, argmax, N, C, H, W, Ho, Wo]() mutable {
            if (!yc.has_grad()) return;
            xc.ensure_grad();
            const float* gy = yc.grad();
            for (int64_t i = 0; i < N * C; ++i) {
                float* gx = xc.grad() + i * H * W;
                const int64_t* am = argmax->data() + i * Ho * Wo;
                const float* gyc = gy + i * Ho * Wo;
                for (int64_t q = 0; q < Ho * Wo; ++q) gx[am[q]] += gyc[q];
            }
        });
    }
    return y;
}

Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    check_rank(x, 2, "linear input");
    check_rank(w, 2, "linear weight");
    check_rank(b, 1, "linear bias");
    const int64_t N = x.dim(0), F = x.dim(1), O = w.dim(0);
    if (w.dim(1) != F || b.dim(0) != O) {
        throw DimensionError("linear shapes x" + shape_str(x.shape()) + " w" + shape_str(w.shape()));
    }
    Tensor y = Tensor::zeros({N, O});
    for (int64_t n = 0; n < N; ++n) {
        const float* xr = x.data() + n * F;
        float* yr = y.data() + n * O;
        std::memcpy(yr, b.data(), sizeof(float) * static_cast<size_t>(O));
        for (int64_t f = 0; f < F; ++f) {
            const float xv = xr[f];
            if (xv == 0.0f) continue;
            for (int64_t o = 0; o < O; ++o) yr[o] += xv * w.data()[o * F + f];
        }
    }
    mac_counter() += static_cast<uint64_t>(N * F * O);

    const bool track = tape && (x.requires_grad() || w.requires_grad() || b.requires_grad());
    if (track) {
        y.set_requires_grad(true);
        Tensor xc = x, wc = w, bc = b, yc = y;
        tape->record([xc, wc, bc, yc, N, F, O]() mutable {
            if (!yc.has_grad()) return;
            const float* gy = yc.grad();
            if (bc.requires_grad()) {
                bc.ensure_grad();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < O; ++o) bc.grad()[o] += gy[n * O + o];
            }
            if (wc.requires_grad()) {
                wc.ensure_grad();
                float* gw = wc.grad();
                for (int64_t n = 0; n < N; ++n) {
                    const float* xr = xc.data() + n * F;
                    const float* gr = gy + n * O;
                    for (int64_t o = 0; o < O; ++o) {
                        const float gv = gr[o];
                        if (gv == 0.0f) continue;
                        float* gwr = gw + o * F;
                        for (int64_t f = 0; f < F; ++f) gwr[f] += gv * xr[f];
                    }
                }
                mac_counter() += static_cast<uint64_t>(N * F * O);
            }
            if (xc.requires_grad()) {
                xc.ensure_grad();
                float* gx = xc.grad();
                for (int64_t n = 0; n < N; ++n) {
                    const float* gr = gy + n * O;
                    float* gxr = gx + n * F;
                    for (int64_t o = 0; o < O; ++o) {
                        const float gv = gr[o];
                        if (gv == 0.0f) continue;
                        const float* wr = wc.data() + o * F;
                        for (int64_t f = 0; f < F; ++f) gxr[f] += gv * wr[f];
                    }
                }
                mac_counter() += static_cast<uint64_t>(N * F * O);
            }
        });
    }
    return y;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
    check_rank(x, 4, "global_avg_pool input");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor y = Tensor::zeros({N, C});
    for (int64_t i = 0; i < N * C; ++i) {
        const float* xc = x.data() + i * HW;
        double acc = 0.0;
        for (int64_t q = 0; q < HW; ++q) acc += xc[q];
        y.data()[i] = static_cast<float>(acc / static_cast<double>(HW));
    }
    if (tape && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape->record([xc, yc, N, C, HW]() mutable {
            if (!yc.has_grad()) return;
            xc.ensure_grad();
            const float* gy = yc.grad();
            for (int64_t i = 0; i < N * C; ++i) {
                const float gv = gy[i] / static_cast<float>(HW);
                float* gx = xc.grad() + i * HW;
                for (int64_t q = 0; q < HW; ++q) gx[q] += gv;
            }
        });
    }
    return y;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (!same_shape(a.shape(), b.shape())) {
        throw DimensionError("add shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor y = Tensor::zeros(a.shape());
    const float* ad = a.data();
    const float* bd = b.data();
    float* yd = y.data();
    const int64_t n = a.numel();
    parallel_for(n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) yd[i] = ad[i] + bd[i];
    });
    const bool track = tape && (a.requires_grad() || b.requires_grad());
    if (track) {
        y.set_requires_grad(true);
        Tensor ac = a, bc = b, yc = y;
        tape->record([ac, bc, yc]() mutable {
            if (!yc.has_grad()) return;
            const float* gy = yc.grad();
            const int64_t m = yc.numel();
            if (ac.requires_grad()) {
                ac.ensure_grad();
                float* ga = ac.grad();
                parallel_for(m, [&](int64_t i0, int64_t i1) {
                    for (int64_t i = i0; i < i1; ++i) ga[i] += gy[i];
                });
            }
            if (bc.requires_grad()) {
                bc.ensure_grad();
                float* gb = bc.grad();
                parallel_for(m, [&](int64_t i0, int64_t i1) {
                    for (int64_t i = i0; i < i1; ++i) gb[i] += gy[i];
                });
            }
        });
    }
    return y;
}

namespace {

// shared kernel: mean CE loss and softmax probabilities
float ce_forward(const Tensor& logits, const std::vector<int32_t>& labels, std::vector<float>& probs) {
    const int64_t N = logits.dim(0), K = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != N) {
        throw DimensionError("label count " + std::to_string(labels.size()) + " != batch " + std::to_string(N));
    }
    probs.resize(static_cast<size_t>(N * K));
    double total = 0.0;
    for (int64_t n = 0; n < N; ++n) {
        const int32_t lab = labels[static_cast<size_t>(n)];
        if (lab < 0 || lab >= K) {
            throw LabelError("label " + std::to_string(lab) + " outside [0," + std::to_string(K) + ")");
        }
        const float* row = logits.data() + n * K;
        float mx = row[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double denom = 0.0;
        for (int64_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k] - mx));
        const double lse = static_cast<double>(mx) + std::log(denom);
        total += lse - static_cast<double>(row[lab]);
        float* prow = probs.data() + n * K;
        for (int64_t k = 0; k < K; ++k)
            prow[k] = static_cast<float>(std::exp(static_cast<double>(row[k] - mx)) / denom);
    }
    return static_cast<float>(total / static_cast<double>(N));
}

} // namespace

Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int32_t>& labels) {
    check_rank(logits, 2, "softmax_cross_entropy logits");
    auto probs = std::make_shared<std::vector<float>>();
    Tensor loss = Tensor::scalar(ce_forward(logits, labels, *probs));
    if (tape && logits.requires_grad()) {
        loss.set_requires_grad(true);
        Tensor lc = logits, out = loss;
        auto labs = std::make_shared<std::vector<int32_t>>(labels);
        tape->record([lc, out, probs, labs]() mutable {
            if (!out.has_grad()) return;
            const float g = out.grad()[0];
            const int64_t N = lc.dim(0), K = lc.dim(1);
            lc.ensure_grad();
            float* gl = lc.grad();
            const float invn = 1.0f / static_cast<float>(N);
            for (int64_t n = 0; n < N; ++n) {
                const float* prow = probs->data() + n * K;
                float* grow = gl + n * K;
                const int32_t lab = (*labs)[static_cast<size_t>(n)];
                for (int64_t k = 0; k < K; ++k) {
                    const float ind = (k == lab) ? 1.0f : 0.0f;
                    grow[k] += g * (prow[k] - ind) * invn;
                }
            }
        });
    }
    return loss;
}

CeWithGrad softmax_cross_entropy_with_grad(const Tensor& logits, const std::vector<int32_t>& labels) {
    check_rank(logits, 2, "softmax_cross_entropy logits");
    std::vector<float> probs;
    CeWithGrad out;
    out.loss = ce_forward(logits, labels, probs);
    const int64_t N = logits.dim(0), K = logits.dim(1);
    out.logit_grad = Tensor::zeros(logits.shape());
    float* g = out.logit_grad.data();
    const float invn = 1.0f / static_cast<float>(N);
    for (int64_t n = 0; n < N; ++n) {
        const int32_t lab = labels[static_cast<size_t>(n)];
        for (int64_t k = 0; k < K; ++k) {
            const float ind = (k == lab) ? 1.0f : 0.0f;
            g[n * K + k] = (probs[static_cast<size_t>(n * K + k)] - ind) * invn;
        }
    }
    return out;
}

} // namespace salt
