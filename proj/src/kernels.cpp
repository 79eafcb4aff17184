#include "centeratt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "centeratt/errors.hpp"
#include "centeratt/fp16.hpp"

namespace centeratt {

namespace {

inline float maybe_half(float v, bool half) { return half ? quantize_half(v) : v; }

// LayerNorm over the last axis of [N, D]. Runs and emits fp32 regardless of
// the input tag; the next dense re-quantizes when its weights are half.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    const size_t n = x.dim(0), d = x.dim(1);
    if (gamma.numel() != d || beta.numel() != d) {
        throw ShapeError("layer norm parameter length " + std::to_string(gamma.numel()) +
                         " vs model_dim " + std::to_string(d));
    }
    Tensor out({n, d});
#pragma omp parallel for
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
        float mean = 0.0f;
        for (size_t j = 0; j < d; ++j) mean += x(i, j);
        mean /= static_cast<float>(d);
        float var = 0.0f;
        for (size_t j = 0; j < d; ++j) {
            const float c = x(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float inv = 1.0f / std::sqrt(var + 1e-5f);
        for (size_t j = 0; j < d; ++j) {
            out(i, j) = gamma(j) * (x(i, j) - mean) * inv + beta(j);
        }
    }
    return out;
}

// y = x * W^T + b on [N, in] with W [out, in]. The half path engages when
// either operand carries the tag: operands and the final element rounded,
// fp32 accumulation in between.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    const bool half = x.precision == Precision::kHalf || w.precision == Precision::kHalf;
    const size_t n = x.dim(0), in = x.dim(1);
    if (w.rank() != 2 || w.dim(1) != in) {
        throw ShapeError("dense weight in-dim " + std::to_string(w.rank() == 2 ? w.dim(1) : 0) +
                         " vs input dim " + std::to_string(in));
    }
    const size_t out_dim = w.dim(0);
    if (b.numel() != out_dim) {
        throw ShapeError("dense bias length " + std::to_string(b.numel()) + " vs out dim " +
                         std::to_string(out_dim));
    }
    Tensor y({n, out_dim}, half ? Precision::kHalf : Precision::kFloat32);
#pragma omp parallel for
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
        for (size_t o = 0; o < out_dim; ++o) {
            float acc = maybe_half(b(o), half);
            for (size_t j = 0; j < in; ++j) {
                acc += maybe_half(x(i, j), half) * maybe_half(w(o, j), half);
            }
            y(i, o) = maybe_half(acc, half);
        }
    }
    return y;
}

Tensor add(const Tensor& a, const Tensor& b, bool half) {
    check_same_shape(a, b, "residual add");
    Tensor out(a.shape, a.precision);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = maybe_half(a.data[i] + b.data[i], half);
    return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
    if (input.rank() != 3) throw ShapeError("conv2d input rank " + std::to_string(input.rank()) + ", expected 3");
    if (weight.rank() != 4) throw ShapeError("conv2d weight rank " + std::to_string(weight.rank()) + ", expected 4");
    const size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const size_t c_out = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != c_in) {
        throw ShapeError("conv2d weight C_in " + std::to_string(weight.dim(1)) + " vs input C " +
                         std::to_string(c_in));
    }
    if (bias.numel() != c_out) {
        throw ShapeError("conv2d bias length " + std::to_string(bias.numel()) + " vs C_out " +
                         std::to_string(c_out));
    }
    if (stride < 1) throw ShapeError("conv2d stride " + std::to_string(stride) + " < 1");
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw ShapeError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " must be odd");
    }
    const int64_t ih = static_cast<int64_t>(h), iw = static_cast<int64_t>(w);
    const int64_t oh = (ih + 2 * padding - static_cast<int64_t>(kh)) / stride + 1;
    const int64_t ow = (iw + 2 * padding - static_cast<int64_t>(kw)) / stride + 1;
    if (oh < 1 || ow < 1) {
        throw ShapeError("conv2d output dims " + std::to_string(oh) + "x" + std::to_string(ow) +
                         " collapse for input " + input.shape_str());
    }
    const bool half =
        input.precision == Precision::kHalf || weight.precision == Precision::kHalf;

    Tensor out({c_out, static_cast<size_t>(oh), static_cast<size_t>(ow)},
               half ? Precision::kHalf : Precision::kFloat32);
#pragma omp parallel for collapse(2)
    for (int64_t co = 0; co < static_cast<int64_t>(c_out); ++co) {
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                float acc = maybe_half(bias(static_cast<size_t>(co)), half);
                for (size_t ci = 0; ci < c_in; ++ci) {
                    for (size_t ky = 0; ky < kh; ++ky) {
                        const int64_t y = oy * stride - padding + static_cast<int64_t>(ky);
                        if (y < 0 || y >= ih) continue;
                        for (size_t kx = 0; kx < kw; ++kx) {
                            const int64_t x = ox * stride - padding + static_cast<int64_t>(kx);
                            if (x < 0 || x >= iw) continue;
                            acc += maybe_half(input(ci, static_cast<size_t>(y), static_cast<size_t>(x)), half) *
                                   maybe_half(weight(static_cast<size_t>(co), ci, ky, kx), half);
                        }
                    }
                }
                out(static_cast<size_t>(co), static_cast<size_t>(oy), static_cast<size_t>(ox)) =
                    maybe_half(acc, half);
            }
        }
    }
    return out;
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  const Tensor& mean, const Tensor& var, float eps) {
    if (input.rank() != 3) throw ShapeError("batch_norm input rank " + std::to_string(input.rank()) + ", expected 3");
    if (eps <= 0.0f) throw ShapeError("batch_norm eps must be > 0");
    const size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    for (const Tensor* t : {&gamma, &beta, &mean, &var}) {
        if (t->numel() != c) {
            throw ShapeError("batch_norm channel parameter length " + std::to_string(t->numel()) +
                             " vs C " + std::to_string(c));
        }
    }
    // runs and emits fp32 whatever the input tag; the next conv re-quantizes
    Tensor out(input.shape);
#pragma omp parallel for
    for (int64_t ci = 0; ci < static_cast<int64_t>(c); ++ci) {
        const float scale = gamma(static_cast<size_t>(ci)) /
                            std::sqrt(var(static_cast<size_t>(ci)) + eps);
        const float shift = beta(static_cast<size_t>(ci));
        const float mu = mean(static_cast<size_t>(ci));
        for (size_t i = 0; i < h * w; ++i) {
            const size_t idx = static_cast<size_t>(ci) * h * w + i;
            out.data[idx] = (input.data[idx] - mu) * scale + shift;
        }
    }
    return out;
}

Tensor mlp_forward(const Tensor& input, const std::vector<DenseLayer>& layers) {
    if (input.rank() != 2) throw ShapeError("mlp input rank " + std::to_string(input.rank()) + ", expected 2");
    Tensor x = input;
    for (size_t li = 0; li < layers.size(); ++li) {
        const DenseLayer& layer = layers[li];
        if (layer.weight.rank() != 2 || layer.weight.dim(1) != x.dim(1)) {
            throw ShapeError("mlp layer " + std::to_string(li) + " expects dim " +
                             std::to_string(layer.weight.rank() == 2 ? layer.weight.dim(1) : 0) +
                             ", got " + std::to_string(x.dim(1)));
        }
        x = dense(x, layer.weight, layer.bias);
        if (layer.activation == Activation::kRelu) {
            for (float& v : x.data) v = v > 0.0f ? v : 0.0f;
        }
    }
    return x;
}

std::vector<float> bilinear_sample(const Tensor& feature, float x, float y) {
    const size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
    const float fx = std::fmin(std::fmax(x, 0.0f), static_cast<float>(w - 1));
    const float fy = std::fmin(std::fmax(y, 0.0f), static_cast<float>(h - 1));
    const size_t x0 = static_cast<size_t>(fx);
    const size_t y0 = static_cast<size_t>(fy);
    const size_t x1 = x0 + 1 < w ? x0 + 1 : x0;
    const size_t y1 = y0 + 1 < h ? y0 + 1 : y0;
    const float ax = fx - static_cast<float>(x0);
    const float ay = fy - static_cast<float>(y0);
    std::vector<float> out(c);
    for (size_t ci = 0; ci < c; ++ci) {
        const float v00 = feature(ci, y0, x0), v01 = feature(ci, y0, x1);
        const float v10 = feature(ci, y1, x0), v11 = feature(ci, y1, x1);
        out[ci] = (1.0f - ay) * ((1.0f - ax) * v00 + ax * v01) +
                  ay * ((1.0f - ax) * v10 + ax * v11);
    }
    return out;
}

void AttentionConfig::validate() const {
    if (num_heads < 1) throw ConfigError("attention num_heads must be >= 1");
    if (model_dim % num_heads != 0) {
        throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by num_heads " +
                          std::to_string(num_heads));
    }
    if (pe_dim % 4 != 0) {
        throw ConfigError("pe_dim " + std::to_string(pe_dim) + " not divisible by 4");
    }
    if (layers < 1) throw ConfigError("attention layers must be >= 1");
}

Tensor sine_position_embedding(double x, double y, const AttentionConfig& cfg,
                               double temperature) {
    if (cfg.pe_dim % 4 != 0) {
        throw ConfigError("pe_dim " + std::to_string(cfg.pe_dim) + " not divisible by 4");
    }
    const size_t quarter = static_cast<size_t>(cfg.pe_dim) / 4;
    Tensor out({static_cast<size_t>(cfg.pe_dim)});
    const double axes[2] = {x, y};
    for (size_t axis = 0; axis < 2; ++axis) {
        const size_t base = axis * 2 * quarter;
        for (size_t i = 0; i < quarter; ++i) {
            const double freq = std::pow(temperature, 4.0 * static_cast<double>(i) /
                                                          static_cast<double>(cfg.pe_dim));
            const double v = axes[axis] / freq;
            out(base + 2 * i) = static_cast<float>(std::sin(v));
            out(base + 2 * i + 1) = static_cast<float>(std::cos(v));
        }
    }
    return out;
}

namespace {

// Summation in ascending value order, so token permutations cannot change
// the rounding of cross-token reductions.
float sorted_sum(std::vector<float>& vals) {
    std::sort(vals.begin(), vals.end());
    float acc = 0.0f;
    for (float v : vals) acc += v;
    return acc;
}

}  // namespace

Tensor multi_head_self_attention(const Tensor& tokens, const AttentionConfig& cfg,
                                 const AttentionWeights& weights, Tensor* attn_probs) {
    cfg.validate();
    if (tokens.rank() != 2 || tokens.dim(1) != static_cast<size_t>(cfg.model_dim)) {
        throw ShapeError("attention tokens shape " + tokens.shape_str() + " vs model_dim " +
                         std::to_string(cfg.model_dim));
    }
    const size_t n = tokens.dim(0);
    if (n < 1) throw ShapeError("attention requires at least one token");
    const size_t d = static_cast<size_t>(cfg.model_dim);
    const size_t heads = static_cast<size_t>(cfg.num_heads);
    const size_t hd = d / heads;
    const bool half =
        tokens.precision == Precision::kHalf || weights.wq.precision == Precision::kHalf;

    const Tensor q = dense(tokens, weights.wq, weights.bq);
    const Tensor k = dense(tokens, weights.wk, weights.bk);
    const Tensor v = dense(tokens, weights.wv, weights.bv);

    if (attn_probs) *attn_probs = Tensor({heads, n, n});

    // scaled dot-product attention per head; scores and softmax in fp32
    Tensor ctx({n, d}, half ? Precision::kHalf : Precision::kFloat32);
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
#pragma omp parallel for collapse(2)
    for (int64_t hi = 0; hi < static_cast<int64_t>(heads); ++hi) {
        for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
            const size_t off = static_cast<size_t>(hi) * hd;
            std::vector<float> scores(n);
            float max_score = -1e30f;
            for (size_t j = 0; j < n; ++j) {
                float s = 0.0f;
                for (size_t t = 0; t < hd; ++t) {
                    s += q(static_cast<size_t>(i), off + t) * k(j, off + t);
                }
                scores[j] = s * scale;
                max_score = std::fmax(max_score, scores[j]);
            }
            for (size_t j = 0; j < n; ++j) scores[j] = std::exp(scores[j] - max_score);
            std::vector<float> addends(scores);
            const float denom = sorted_sum(addends);
            for (size_t j = 0; j < n; ++j) {
                scores[j] /= denom;
                if (attn_probs) (*attn_probs)(static_cast<size_t>(hi), static_cast<size_t>(i), j) = scores[j];
            }
            for (size_t t = 0; t < hd; ++t) {
                for (size_t j = 0; j < n; ++j) addends[j] = scores[j] * v(j, off + t);
                ctx(static_cast<size_t>(i), off + t) = maybe_half(sorted_sum(addends), half);
            }
        }
    }

    const Tensor attended = dense(ctx, weights.wo, weights.bo);
    const Tensor x1 = layer_norm(add(tokens, attended, half), weights.ln1_gamma, weights.ln1_beta);

    Tensor hidden = dense(x1, weights.ffn_w1, weights.ffn_b1);
    for (float& val : hidden.data) val = val > 0.0f ? val : 0.0f;
    const Tensor ffn = dense(hidden, weights.ffn_w2, weights.ffn_b2);

    return layer_norm(add(x1, ffn, half), weights.ln2_gamma, weights.ln2_beta);
}

Tensor quantize_fp16(const Tensor& t) {
    Tensor out = t;
    out.precision = Precision::kHalf;
    for (float& v : out.data) v = quantize_half(v);
    return out;
}

}  // namespace centeratt
