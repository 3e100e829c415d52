#pragma once

#include <functional>
#include <string>
#include <vector>

#include "transt/attention.hpp"
#include "transt/tensor.hpp"

namespace transt {

// 2-D sinusoidal positional encoding over an HxW grid, flattened row-major
// to (H*W) x d. The first d/2 channels encode the row coordinate, the second
// d/2 the column coordinate, as interleaved sin/cos pairs:
//   pe[y*W+x][2i]         = sin(y / T^(2i/(d/2)))
//   pe[y*W+x][2i+1]       = cos(y / T^(2i/(d/2)))
//   pe[y*W+x][d/2 + 2i]   = sin(x / T^(2i/(d/2)))
//   pe[y*W+x][d/2 + 2i+1] = cos(x / T^(2i/(d/2)))
// Coordinates are raw 0-based indices; T defaults to 10000.
struct PosEncoding2D {
    int d = 0;
    int height = 0;
    int width = 0;
    double temperature = 10000.0;
    Tensor values;  // (height*width) x d, off-tape constant
};

PosEncoding2D sine_pos_encoding(int d, int height, int width, double temperature = 10000.0);
// All-zero encoding of the same layout (used to probe permutation behavior).
PosEncoding2D zero_pos_encoding(int d, int height, int width);

// Two linear maps with a ReLU between: max(0, x W1 + b1) W2 + b2.
struct FfnParams {
    Tensor w1;  // d x d_ff
    Tensor b1;  // d_ff
    Tensor w2;  // d_ff x d
    Tensor b2;  // d

    static FfnParams init(Rng& rng, int d, int d_ff);
    void for_each(const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);
    void validate(int d) const;
    std::int64_t param_count() const;
};

struct CfaParams {
    MhaParams mha;
    FfnParams ffn;

    static CfaParams init(Rng& rng, int n_heads, int d, int d_ff);
    void for_each(const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);
    std::int64_t param_count() const;
};

// One fusion layer: a self-attention block per branch followed by a
// cross-attention block per branch.
struct FusionLayerParams {
    MhaParams eca_search;
    MhaParams eca_template;
    CfaParams cfa_search;
    CfaParams cfa_template;
};

struct FusionParams {
    std::vector<FusionLayerParams> layers;
    CfaParams decode;  // final cross block: search queries, template keys/values
    // Off by default: the blocks are pure residual sums. When set, a
    // parameter-free row normalization follows every residual add.
    bool post_norm = false;

    static FusionParams init(Rng& rng, int d, int n_heads, int layer_count, int d_ff);
    void for_each(const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);
    void validate(int d) const;
    int layer_count() const { return static_cast<int>(layers.size()); }
    std::int64_t param_count() const;
};

// x + MultiHead(x+pe, x+pe, x)
Tensor eca_forward(Tape& tape, const MhaParams& params, const Tensor& x, const PosEncoding2D& pe,
                   bool post_norm = false, AttentionRecord* record = nullptr);

Tensor ffn_forward(Tape& tape, const FfnParams& params, const Tensor& x);

// xt = x_q + MultiHead(x_q+p_q, x_kv+p_kv, x_kv); result = xt + FFN(xt)
Tensor cfa_forward(Tape& tape, const CfaParams& params, const Tensor& x_q,
                   const PosEncoding2D& p_q, const Tensor& x_kv, const PosEncoding2D& p_kv,
                   bool post_norm = false, AttentionRecord* record = nullptr);

struct FusionResult {
    Tensor fused;  // (H_x*W_x) x d, search-branch decoding
    std::vector<AttentionRecord> records;
};

// The N-layer dual-branch stack plus the final decoding cross block. Within
// a layer both branches read the frozen layer inputs: the two self blocks
// are independent, and both cross blocks consume the two self outputs.
FusionResult fusion_forward(Tape& tape, const FusionParams& params, const Tensor& f_template,
                            const PosEncoding2D& pe_template, const Tensor& f_search,
                            const PosEncoding2D& pe_search, bool record = false);

}  // namespace transt
