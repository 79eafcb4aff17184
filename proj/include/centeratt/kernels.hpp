#pragma once

#include <vector>

#include "centeratt/tensor.hpp"

namespace centeratt {

// Dense numeric kernels behind the detection pipeline. All of them are pure
// functions and OpenMP-parallel over independent output elements, so results
// are bit-identical for any thread count.
//
// Half path contract: when the input tensor is tagged kHalf, operands are
// rounded to binary16 on read, each output element is accumulated in fp32,
// and the final per-element result is rounded back to binary16. Normalization
// statistics and softmax always run in fp32.

// Cross-correlation with zero padding. input [C_in,H,W], weight
// [C_out,C_in,kh,kw] (kh, kw odd), bias [C_out]. Output [C_out,H',W'] with
// H' = (H + 2*padding - kh)/stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// Per-channel y = gamma*(x - mean)/sqrt(var + eps) + beta on [C,H,W].
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  const Tensor& mean, const Tensor& var, float eps);

enum class Activation { kNone, kRelu };

// One affine layer, weight stored [out, in]: y = x * W^T + b.
struct DenseLayer {
    Tensor weight;
    Tensor bias;
    Activation activation = Activation::kNone;
};

// Row-wise affine+activation chain on [N, D_in] -> [N, D_out].
Tensor mlp_forward(const Tensor& input, const std::vector<DenseLayer>& layers);

// Bilinear blend of the 4 cells around (x, y) in cell coordinates on
// [C,H,W]; coordinates are clamped to the border. Total function.
std::vector<float> bilinear_sample(const Tensor& feature, float x, float y);

struct AttentionConfig {
    int num_heads = 8;
    int model_dim = 128;
    int ffn_dim = 2048;
    int pe_dim = 128;
    int layers = 1;
    void validate() const;
};

// Sine embedding of a BEV position normalized to [0,1]^2. Layout: the first
// pe_dim/2 values encode x as interleaved (sin, cos) over pe_dim/4
// frequencies 1/T^(4i/pe_dim), the second half encodes y the same way.
Tensor sine_position_embedding(double x, double y, const AttentionConfig& cfg,
                               double temperature = 10000.0);

// One post-norm transformer encoder layer. Projection weights are [D, D]
// stored [out, in]; ffn_w1 is [ffn_dim, D], ffn_w2 [D, ffn_dim].
struct AttentionWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_gamma, ln1_beta;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_gamma, ln2_beta;
};

// tokens [N, model_dim] -> [N, model_dim]. Q/K/V heads, scaled dot-product
// softmax, output projection, residual + layer norm, relu FFN, residual +
// layer norm. When attn_probs is non-null it receives the softmax weights
// as [num_heads, N, N].
Tensor multi_head_self_attention(const Tensor& tokens, const AttentionConfig& cfg,
                                 const AttentionWeights& weights, Tensor* attn_probs = nullptr);

// Rounds every value to the nearest binary16 (ties to even) and tags the
// result kHalf. Values beyond 65504 become +-infinity. Idempotent.
Tensor quantize_fp16(const Tensor& t);

}  // namespace centeratt
