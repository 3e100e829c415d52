#include "transt/fusion.hpp"

#include <cmath>

namespace transt {

PosEncoding2D sine_pos_encoding(int d, int height, int width, double temperature) {
    if (d <= 0 || d % 4 != 0)
        throw ConfigError(msg("positional encoding: d must be a positive multiple of 4, got ", d));
    if (height <= 0 || width <= 0)
        throw ConfigError(msg("positional encoding: bad grid ", height, "x", width));
    PosEncoding2D pe;
    pe.d = d;
    pe.height = height;
    pe.width = width;
    pe.temperature = temperature;
    pe.values = Tensor::zeros({height * width, d});
    const int half = d / 2;
    const int pairs = half / 2;
    std::vector<double> inv_freq(pairs);
    for (int i = 0; i < pairs; ++i)
        inv_freq[i] = 1.0 / std::pow(temperature, (2.0 * i) / half);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int row = y * width + x;
            for (int i = 0; i < pairs; ++i) {
                pe.values.at(row, 2 * i) = std::sin(y * inv_freq[i]);
                pe.values.at(row, 2 * i + 1) = std::cos(y * inv_freq[i]);
                pe.values.at(row, half + 2 * i) = std::sin(x * inv_freq[i]);
                pe.values.at(row, half + 2 * i + 1) = std::cos(x * inv_freq[i]);
            }
        }
    }
    return pe;
}

PosEncoding2D zero_pos_encoding(int d, int height, int width) {
    if (d <= 0 || d % 4 != 0)
        throw ConfigError(msg("positional encoding: d must be a positive multiple of 4, got ", d));
    PosEncoding2D pe;
    pe.d = d;
    pe.height = height;
    pe.width = width;
    pe.values = Tensor::zeros({height * width, d});
    return pe;
}

FfnParams FfnParams::init(Rng& rng, int d, int d_ff) {
    if (d <= 0 || d_ff <= 0)
        throw ConfigError(msg("ffn: bad dimensions d=", d, " d_ff=", d_ff));
    FfnParams p;
    p.w1 = Tensor::xavier(rng, d, d_ff);
    p.b1 = Tensor::zeros({d_ff});
    p.w2 = Tensor::xavier(rng, d_ff, d);
    p.b2 = Tensor::zeros({d});
    return p;
}

void FfnParams::for_each(const std::string& prefix,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
}

void FfnParams::validate(int d) const {
    if (w1.rank() != 2 || w1.shape[0] != d)
        throw ConfigError(msg("ffn: w1 has shape ", shape_str(w1.shape), ", expected [", d, "x*]"));
    const int d_ff = w1.shape[1];
    if (b1.shape != std::vector<int>{d_ff} || w2.shape != std::vector<int>{d_ff, d} ||
        b2.shape != std::vector<int>{d})
        throw ConfigError(msg("ffn: inconsistent shapes w1=", shape_str(w1.shape), " b1=",
                              shape_str(b1.shape), " w2=", shape_str(w2.shape), " b2=",
                              shape_str(b2.shape)));
}

std::int64_t FfnParams::param_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
}

CfaParams CfaParams::init(Rng& rng, int n_heads, int d, int d_ff) {
    CfaParams p;
    p.mha = MhaParams::init(rng, n_heads, d);
    p.ffn = FfnParams::init(rng, d, d_ff);
    return p;
}

void CfaParams::for_each(const std::string& prefix,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
    mha.for_each(prefix + ".mha", fn);
    ffn.for_each(prefix + ".ffn", fn);
}

std::int64_t CfaParams::param_count() const { return mha.param_count() + ffn.param_count(); }

FusionParams FusionParams::init(Rng& rng, int d, int n_heads, int layer_count, int d_ff) {
    if (layer_count < 1)
        throw ConfigError(msg("fusion: layer count must be >= 1, got ", layer_count));
    FusionParams p;
    for (int n = 0; n < layer_count; ++n) {
        FusionLayerParams layer;
        layer.eca_search = MhaParams::init(rng, n_heads, d);
        layer.eca_template = MhaParams::init(rng, n_heads, d);
        layer.cfa_search = CfaParams::init(rng, n_heads, d, d_ff);
        layer.cfa_template = CfaParams::init(rng, n_heads, d, d_ff);
        p.layers.push_back(std::move(layer));
    }
    p.decode = CfaParams::init(rng, n_heads, d, d_ff);
    return p;
}

void FusionParams::for_each(const std::string& prefix,
                            const std::function<void(const std::string&, Tensor&)>& fn) {
    for (std::size_t n = 0; n < layers.size(); ++n) {
        const std::string lp = prefix + ".layer" + std::to_string(n);
        layers[n].eca_search.for_each(lp + ".eca_search", fn);
        layers[n].eca_template.for_each(lp + ".eca_template", fn);
        layers[n].cfa_search.for_each(lp + ".cfa_search", fn);
        layers[n].cfa_template.for_each(lp + ".cfa_template", fn);
    }
    decode.for_each(prefix + ".decode", fn);
}

void FusionParams::validate(int d) const {
    if (layers.empty()) throw ConfigError("fusion: needs at least one layer");
    for (const auto& layer : layers) {
        layer.eca_search.validate();
        layer.eca_template.validate();
        layer.cfa_search.mha.validate();
        layer.cfa_search.ffn.validate(d);
        layer.cfa_template.mha.validate();
        layer.cfa_template.ffn.validate(d);
        if (layer.eca_search.d_model != d)
            throw ConfigError(msg("fusion: block d_model ", layer.eca_search.d_model,
                                  " does not match d ", d));
    }
    decode.mha.validate();
    decode.ffn.validate(d);
}

std::int64_t FusionParams::param_count() const {
    std::int64_t n = decode.param_count();
    for (const auto& layer : layers)
        n += layer.eca_search.param_count() + layer.eca_template.param_count() +
             layer.cfa_search.param_count() + layer.cfa_template.param_count();
    return n;
}

namespace {
void require_pe_match(const Tensor& x, const PosEncoding2D& pe, const char* site) {
    if (pe.values.shape != std::vector<int>{x.rows(), x.cols()})
        throw ShapeError(msg(site, ": positional encoding ", shape_str(pe.values.shape),
                             " does not match input ", shape_str(x.shape)));
}
}  // namespace

Tensor eca_forward(Tape& tape, const MhaParams& params, const Tensor& x, const PosEncoding2D& pe,
                   bool post_norm, AttentionRecord* record) {
    require_pe_match(x, pe, "eca");
    Tensor xp = tape.add(x, pe.values);
    Tensor out = tape.add(x, multi_head(tape, params, xp, xp, x, record));
    return post_norm ? tape.layer_norm_rows(out) : out;
}

Tensor ffn_forward(Tape& tape, const FfnParams& params, const Tensor& x) {
    params.validate(x.cols());
    Tensor hidden = tape.relu(tape.add_row(tape.matmul(x, params.w1), params.b1));
    return tape.add_row(tape.matmul(hidden, params.w2), params.b2);
}

Tensor cfa_forward(Tape& tape, const CfaParams& params, const Tensor& x_q,
                   const PosEncoding2D& p_q, const Tensor& x_kv, const PosEncoding2D& p_kv,
                   bool post_norm, AttentionRecord* record) {
    require_pe_match(x_q, p_q, "cfa(query)");
    require_pe_match(x_kv, p_kv, "cfa(kv)");
    Tensor attended = multi_head(tape, params.mha, tape.add(x_q, p_q.values),
                                 tape.add(x_kv, p_kv.values), x_kv, record);
    Tensor mixed = tape.add(x_q, attended);
    if (post_norm) mixed = tape.layer_norm_rows(mixed);
    Tensor out = tape.add(mixed, ffn_forward(tape, params.ffn, mixed));
    return post_norm ? tape.layer_norm_rows(out) : out;
}

FusionResult fusion_forward(Tape& tape, const FusionParams& params, const Tensor& f_template,
                            const PosEncoding2D& pe_template, const Tensor& f_search,
                            const PosEncoding2D& pe_search, bool record) {
    if (f_template.cols() != f_search.cols())
        throw ConfigError(msg("fusion: branch widths differ, ", shape_str(f_template.shape),
                              " vs ", shape_str(f_search.shape)));
    params.validate(f_search.cols());
    require_pe_match(f_template, pe_template, "fusion(template)");
    require_pe_match(f_search, pe_search, "fusion(search)");

    FusionResult result;
    result.records.reserve(4 * params.layer_count() + 1);
    auto sink = [&](const char* tag, int layer, const PosEncoding2D& kv) -> AttentionRecord* {
        if (!record) return nullptr;
        AttentionRecord rec;
        rec.tag = tag;
        rec.layer = layer;
        rec.kv_height = kv.height;
        rec.kv_width = kv.width;
        result.records.push_back(std::move(rec));
        return &result.records.back();
    };

    Tensor z = f_template;
    Tensor x = f_search;
    for (int n = 0; n < params.layer_count(); ++n) {
        const FusionLayerParams& layer = params.layers[n];
        Tensor x_self = eca_forward(tape, layer.eca_search, x, pe_search, params.post_norm,
                                    sink("search_self", n + 1, pe_search));
        Tensor z_self = eca_forward(tape, layer.eca_template, z, pe_template, params.post_norm,
                                    sink("template_self", n + 1, pe_template));
        Tensor x_cross = cfa_forward(tape, layer.cfa_search, x_self, pe_search, z_self,
                                     pe_template, params.post_norm,
                                     sink("search_cross", n + 1, pe_template));
        Tensor z_cross = cfa_forward(tape, layer.cfa_template, z_self, pe_template, x_self,
                                     pe_search, params.post_norm,
                                     sink("template_cross", n + 1, pe_search));
        x = std::move(x_cross);
        z = std::move(z_cross);
    }
    result.fused = cfa_forward(tape, params.decode, x, pe_search, z, pe_template,
                               params.post_norm,
                               sink("decode", params.layer_count() + 1, pe_template));
    return result;
}

}  // namespace transt
