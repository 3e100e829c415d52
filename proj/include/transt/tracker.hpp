#pragma once

#include <vector>

#include "transt/bbox.hpp"
#include "transt/model.hpp"

namespace transt {

// Crop geometry and post-processing knobs. The score grid side is fixed by
// the backbone stride: search_size / 8.
struct TrackerConfig {
    double template_factor = 2.0;  // template side = factor * sqrt(w*h)
    double search_factor = 4.0;
    int template_size = 128;
    int search_size = 256;
    double window_weight = 0.49;
    ModelConfig model;

    static constexpr int stride = 8;
    int search_grid() const { return search_size / stride; }
    int template_grid() const { return template_size / stride; }

    void validate() const {
        model.validate();
        if (template_size < stride || template_size % stride != 0)
            throw ConfigError(msg("tracker: template_size ", template_size,
                                  " must be a positive multiple of ", stride));
        if (search_size < stride || search_size % stride != 0)
            throw ConfigError(msg("tracker: search_size ", search_size,
                                  " must be a positive multiple of ", stride));
        if (template_factor <= 0.0 || search_factor <= 0.0)
            throw ConfigError("tracker: crop factors must be positive");
        if (window_weight < 0.0 || window_weight > 1.0)
            throw ConfigError(msg("tracker: window weight ", window_weight,
                                  " must lie in [0,1]"));
    }
};

// Square pixel-space window a patch was cut from.
struct CropWindow {
    double cx = 0.0;
    double cy = 0.0;
    double side = 0.0;
    double x0() const { return cx - side / 2.0; }
    double y0() const { return cy - side / 2.0; }
};

// Square bilinear crop resized to out_size x out_size; samples outside the
// image are filled with the per-channel image mean.
Tensor crop_patch(const Tensor& image, double cx, double cy, double side, int out_size);

// Pixel box <-> crop-normalized box. Exact inverses of each other.
BBox box_to_crop(const BBox& pixel_box, const CropWindow& crop);
BBox box_from_crop(const BBox& normalized_box, const CropWindow& crop);

// Side of the square crop around a possibly rectangular target:
// factor * sqrt(w*h), floored at 2 pixels.
double square_crop_side(double factor, const BBox& box);

// Symmetric Hann window: 0.5 * (1 - cos(2 pi n / (N-1))), n = 0..N-1.
std::vector<double> hann_window(int n);

// Blends scores (row-major square grid) with the outer product of two Hann
// windows: (1-w) * score + w * hann2d. weight must lie in [0,1] and the
// score count must be a perfect square.
std::vector<double> window_penalty(const std::vector<double>& scores, double weight);

struct TrackState {
    Tensor template_feat;  // (Hz*Wz) x d, never changes after init
    BBox prev_box;         // pixel frame
    CropWindow last_search_crop;
    bool initialized = false;
};

TrackState tracker_init(const TrackerConfig& cfg, const ModelParams& params,
                        const Tensor& image, const BBox& init_box);

struct TrackOutput {
    BBox box;  // pixel frame, clipped to the image, sides >= 1
    std::vector<double> scores;  // post-penalty, row-major over the grid
    int best_index = -1;
    std::vector<AttentionRecord> records;
};

TrackOutput track_frame(TrackState& state, const TrackerConfig& cfg, const ModelParams& params,
                        const Tensor& image, bool record_attention = false);

}  // namespace transt
