#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "transt/backbone.hpp"
#include "transt/fusion.hpp"
#include "transt/head_loss.hpp"

namespace transt {

// Network dimensions. Defaults are the full-size configuration; tests and
// the toy trainer shrink them.
struct ModelConfig {
    int d = 256;        // fusion width
    int n_heads = 8;
    int layers = 4;     // fusion layer count N
    int channels = 32;  // backbone output channels C
    int d_ff = 2048;    // FFN hidden width
    bool post_norm = false;

    void validate() const {
        if (d < 4 || d % 4 != 0)
            throw ConfigError(msg("model: d must be a positive multiple of 4, got ", d));
        if (n_heads < 1 || d % n_heads != 0)
            throw ConfigError(msg("model: d ", d, " must divide evenly into ", n_heads, " heads"));
        if (layers < 1) throw ConfigError(msg("model: layer count must be >= 1, got ", layers));
        if (channels < 1) throw ConfigError(msg("model: channels must be >= 1, got ", channels));
        if (d_ff < 1) throw ConfigError(msg("model: d_ff must be >= 1, got ", d_ff));
    }
};

// Every learnable weight of the network, addressable by a stable name
// through for_each (names look like "backbone.conv1.w",
// "fusion.layer0.eca_search.wq0", "head.cls.w3").
struct ModelParams {
    BackboneParams backbone;
    FusionParams fusion;
    HeadParams head;

    static ModelParams init(Rng& rng, const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        p.backbone = BackboneParams::init(rng, cfg.channels, cfg.d);
        p.fusion = FusionParams::init(rng, cfg.d, cfg.n_heads, cfg.layers, cfg.d_ff);
        p.fusion.post_norm = cfg.post_norm;
        p.head = HeadParams::init(rng, cfg.d);
        return p;
    }

    void for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
        backbone.for_each("backbone", fn);
        fusion.for_each("fusion", fn);
        head.for_each("head", fn);
    }

    void for_each_const(const std::function<void(const std::string&, const Tensor&)>& fn) const {
        const_cast<ModelParams*>(this)->for_each(
            [&](const std::string& name, Tensor& t) { fn(name, t); });
    }

    void validate(const ModelConfig& cfg) const {
        backbone.validate();
        fusion.validate(cfg.d);
        head.validate(cfg.d);
    }
};

// A copy of the model whose tensors are differentiable leaves of the given
// tape, plus the name -> node mapping needed to read gradients back out.
struct WatchedParams {
    ModelParams params;
    std::vector<std::pair<std::string, int>> nodes;
};

inline WatchedParams watch(Tape& tape, const ModelParams& source) {
    WatchedParams w;
    w.params = source;
    w.params.for_each([&](const std::string& name, Tensor& t) {
        t = tape.leaf(t, true);
        w.nodes.emplace_back(name, t.node);
    });
    return w;
}

}  // namespace transt
