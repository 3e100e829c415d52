#pragma once

#include <functional>
#include <string>

#include "transt/tensor.hpp"

namespace transt {

// Three stride-2 3x3 conv stages (total stride 8) followed by a per-pixel
// linear reduction to the fusion width d. The channel plan runs
// 3 -> C/4 -> C/2 -> C.
struct BackboneParams {
    int channels = 0;  // C
    int d = 0;
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor conv3_w, conv3_b;
    Tensor reduce_w;  // C x d
    Tensor reduce_b;  // d

    static BackboneParams init(Rng& rng, int channels, int d);
    void for_each(const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);
    void validate() const;
};

// 3 x H0 x W0 (values in [0,1]) -> C x H0/8 x W0/8. H0 and W0 must be
// divisible by 8.
Tensor extract(Tape& tape, const BackboneParams& params, const Tensor& image);

// C x H x W -> (H*W) x d: 1x1 linear map plus bias, flattened row-major.
Tensor reduce_and_flatten(Tape& tape, const BackboneParams& params, const Tensor& features);

}  // namespace transt
