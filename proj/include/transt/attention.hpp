#pragma once

#include <functional>
#include <string>
#include <vector>

#include "transt/rng.hpp"
#include "transt/tensor.hpp"

namespace transt {

// Per-head projection matrices. Projections carry no biases; attention is a
// pure composition of matrix products and softmax.
struct MhaParams {
    int n_heads = 0;
    int d_model = 0;
    int d_k = 0;
    int d_v = 0;
    std::vector<Tensor> w_q;  // n_heads matrices, d_model x d_k
    std::vector<Tensor> w_k;  // d_model x d_k
    std::vector<Tensor> w_v;  // d_model x d_v
    Tensor w_o;               // (n_heads * d_v) x d_model

    // Default split d_k = d_v = d_model / n_heads, Xavier-initialized.
    static MhaParams init(Rng& rng, int n_heads, int d_model);

    void for_each(const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);
    void validate() const;
    std::int64_t param_count() const;
};

// Attention weights captured during one multi-head call, one matrix per head
// (rows are queries and sum to 1). layer/tag and the kv grid are filled by
// the caller that knows where the call sits in the network.
struct AttentionRecord {
    std::string tag;
    int layer = 0;
    int kv_height = 0;
    int kv_width = 0;
    std::vector<Tensor> head_weights;
};

struct SdpResult {
    Tensor output;   // N_q x d_v
    Tensor weights;  // N_q x N_kv
};

// softmax(q k^T / sqrt(d_k)) v
SdpResult sdp_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v);

// Concat(H_1..H_n) W_O. When record is non-null its head_weights are filled
// with detached copies of every head's attention matrix.
Tensor multi_head(Tape& tape, const MhaParams& params, const Tensor& q_in, const Tensor& k_in,
                  const Tensor& v_in, AttentionRecord* record = nullptr);

}  // namespace transt
