#include "transt/attention.hpp"

#include <cmath>

namespace transt {

MhaParams MhaParams::init(Rng& rng, int n_heads, int d_model) {
    if (n_heads <= 0 || d_model <= 0 || d_model % n_heads != 0)
        throw ConfigError(msg("multi-head attention: d_model ", d_model,
                              " must be a positive multiple of n_heads ", n_heads));
    MhaParams p;
    p.n_heads = n_heads;
    p.d_model = d_model;
    p.d_k = d_model / n_heads;
    p.d_v = d_model / n_heads;
    for (int h = 0; h < n_heads; ++h) {
        p.w_q.push_back(Tensor::xavier(rng, d_model, p.d_k));
        p.w_k.push_back(Tensor::xavier(rng, d_model, p.d_k));
        p.w_v.push_back(Tensor::xavier(rng, d_model, p.d_v));
    }
    p.w_o = Tensor::xavier(rng, n_heads * p.d_v, d_model);
    return p;
}

void MhaParams::for_each(const std::string& prefix,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
    for (int h = 0; h < n_heads; ++h) {
        fn(prefix + ".wq" + std::to_string(h), w_q[h]);
        fn(prefix + ".wk" + std::to_string(h), w_k[h]);
        fn(prefix + ".wv" + std::to_string(h), w_v[h]);
    }
    fn(prefix + ".wo", w_o);
}

void MhaParams::validate() const {
    if (n_heads <= 0) throw ConfigError("multi-head attention: n_heads must be positive");
    if (static_cast<int>(w_q.size()) != n_heads || static_cast<int>(w_k.size()) != n_heads ||
        static_cast<int>(w_v.size()) != n_heads)
        throw ConfigError(msg("multi-head attention: expected ", n_heads,
                              " projection triples, got ", w_q.size(), "/", w_k.size(), "/",
                              w_v.size()));
    for (int h = 0; h < n_heads; ++h) {
        if (w_q[h].shape != std::vector<int>{d_model, d_k})
            throw ConfigError(msg("multi-head attention: wq", h, " has shape ",
                                  shape_str(w_q[h].shape), ", expected [", d_model, "x", d_k, "]"));
        if (w_k[h].shape != std::vector<int>{d_model, d_k})
            throw ConfigError(msg("multi-head attention: wk", h, " has shape ",
                                  shape_str(w_k[h].shape), ", expected [", d_model, "x", d_k, "]"));
        if (w_v[h].shape != std::vector<int>{d_model, d_v})
            throw ConfigError(msg("multi-head attention: wv", h, " has shape ",
                                  shape_str(w_v[h].shape), ", expected [", d_model, "x", d_v, "]"));
    }
    if (w_o.shape != std::vector<int>{n_heads * d_v, d_model})
        throw ConfigError(msg("multi-head attention: wo has shape ", shape_str(w_o.shape),
                              ", expected [", n_heads * d_v, "x", d_model, "]"));
}

std::int64_t MhaParams::param_count() const {
    std::int64_t n = w_o.size();
    for (int h = 0; h < n_heads; ++h) n += w_q[h].size() + w_k[h].size() + w_v[h].size();
    return n;
}

SdpResult sdp_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw ShapeError(msg("attention: q/k/v must be rank 2, got ", shape_str(q.shape), ", ",
                             shape_str(k.shape), ", ", shape_str(v.shape)));
    if (q.shape[1] != k.shape[1])
        throw ShapeError(msg("attention: q ", shape_str(q.shape), " and k ", shape_str(k.shape),
                             " disagree on key dimension"));
    if (k.shape[0] != v.shape[0])
        throw ShapeError(msg("attention: k ", shape_str(k.shape), " and v ", shape_str(v.shape),
                             " disagree on row count"));
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.shape[1]));
    Tensor logits = tape.mul_scalar(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk);
    SdpResult r;
    r.weights = tape.softmax_rows(logits);
    r.output = tape.matmul(r.weights, v);
    return r;
}

Tensor multi_head(Tape& tape, const MhaParams& params, const Tensor& q_in, const Tensor& k_in,
                  const Tensor& v_in, AttentionRecord* record) {
    params.validate();
    if (q_in.cols() != params.d_model || k_in.cols() != params.d_model ||
        v_in.cols() != params.d_model)
        throw ShapeError(msg("multi-head attention: inputs must have ", params.d_model,
                             " columns, got ", shape_str(q_in.shape), ", ", shape_str(k_in.shape),
                             ", ", shape_str(v_in.shape)));
    std::vector<Tensor> heads;
    heads.reserve(params.n_heads);
    if (record) record->head_weights.clear();
    for (int h = 0; h < params.n_heads; ++h) {
        SdpResult r = sdp_attention(tape, tape.matmul(q_in, params.w_q[h]),
                                    tape.matmul(k_in, params.w_k[h]),
                                    tape.matmul(v_in, params.w_v[h]));
        if (record) {
            Tensor w = r.weights;  // detach: export copies never join the graph
            w.node = -1;
            w.requires_grad = false;
            record->head_weights.push_back(std::move(w));
        }
        heads.push_back(std::move(r.output));
    }
    return tape.matmul(tape.concat_cols(heads), params.w_o);
}

}  // namespace transt
