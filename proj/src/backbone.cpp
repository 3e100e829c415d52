#include "transt/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace transt {

namespace {
Tensor conv_init(Rng& rng, int c_out, int c_in, int k) {
    // Xavier over the per-output fan
    const double limit = std::sqrt(6.0 / (c_in * k * k + c_out * k * k));
    return Tensor::uniform(rng, {c_out, c_in, k, k}, -limit, limit);
}
}  // namespace

BackboneParams BackboneParams::init(Rng& rng, int channels, int d) {
    if (channels < 1 || d < 1)
        throw ConfigError(msg("backbone: bad dimensions C=", channels, " d=", d));
    BackboneParams p;
    p.channels = channels;
    p.d = d;
    const int c1 = std::max(1, channels / 4);
    const int c2 = std::max(1, channels / 2);
    // Non-zero bias init keeps pre-activations of all-zero ReLU regions off
    // the kink, which matters for finite-difference gradient verification.
    p.conv1_w = conv_init(rng, c1, 3, 3);
    p.conv1_b = Tensor::uniform(rng, {c1}, -0.1, 0.1);
    p.conv2_w = conv_init(rng, c2, c1, 3);
    p.conv2_b = Tensor::uniform(rng, {c2}, -0.1, 0.1);
    p.conv3_w = conv_init(rng, channels, c2, 3);
    p.conv3_b = Tensor::uniform(rng, {channels}, -0.1, 0.1);
    p.reduce_w = Tensor::xavier(rng, channels, d);
    p.reduce_b = Tensor::zeros({d});
    return p;
}

void BackboneParams::for_each(const std::string& prefix,
                              const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".conv1.w", conv1_w);
    fn(prefix + ".conv1.b", conv1_b);
    fn(prefix + ".conv2.w", conv2_w);
    fn(prefix + ".conv2.b", conv2_b);
    fn(prefix + ".conv3.w", conv3_w);
    fn(prefix + ".conv3.b", conv3_b);
    fn(prefix + ".reduce.w", reduce_w);
    fn(prefix + ".reduce.b", reduce_b);
}

void BackboneParams::validate() const {
    if (conv1_w.rank() != 4 || conv1_w.shape[1] != 3)
        throw ConfigError(msg("backbone: conv1 expects 3 input channels, weight is ",
                              shape_str(conv1_w.shape)));
    if (conv2_w.shape[1] != conv1_w.shape[0] || conv3_w.shape[1] != conv2_w.shape[0])
        throw ConfigError("backbone: conv stage channels do not chain");
    if (conv3_w.shape[0] != channels)
        throw ConfigError(msg("backbone: conv3 emits ", conv3_w.shape[0], " channels, expected ",
                              channels));
    if (reduce_w.shape != std::vector<int>{channels, d} || reduce_b.shape != std::vector<int>{d})
        throw ConfigError(msg("backbone: reduction shapes ", shape_str(reduce_w.shape), "/",
                              shape_str(reduce_b.shape), " do not match C=", channels, " d=", d));
}

Tensor extract(Tape& tape, const BackboneParams& params, const Tensor& image) {
    params.validate();
    if (image.rank() != 3 || image.shape[0] != 3)
        throw ContractError(msg("backbone: image must be 3xHxW, got ", shape_str(image.shape)));
    if (image.shape[1] % 8 != 0 || image.shape[2] % 8 != 0)
        throw ContractError(msg("backbone: image sides must be divisible by 8, got ",
                                image.shape[1], "x", image.shape[2]));
    Tensor h1 = tape.relu(tape.conv2d(image, params.conv1_w, params.conv1_b, 2));
    Tensor h2 = tape.relu(tape.conv2d(h1, params.conv2_w, params.conv2_b, 2));
    return tape.relu(tape.conv2d(h2, params.conv3_w, params.conv3_b, 2));
}

Tensor reduce_and_flatten(Tape& tape, const BackboneParams& params, const Tensor& features) {
    if (features.rank() != 3 || features.shape[0] != params.channels)
        throw ShapeError(msg("backbone: reduction expects ", params.channels,
                             " channels, got ", shape_str(features.shape)));
    Tensor rows = tape.flatten_spatial(features);  // (H*W) x C
    return tape.add_row(tape.matmul(rows, params.reduce_w), params.reduce_b);
}

}  // namespace transt
