#include "transt/tracker.hpp"

#include <algorithm>
#include <cmath>

namespace transt {

Tensor crop_patch(const Tensor& image, double cx, double cy, double side, int out_size) {
    if (image.rank() != 3 || image.shape[0] != 3)
        throw InputError(msg("crop_patch: image must be 3xHxW, got ", shape_str(image.shape)));
    if (side <= 0.0) throw InputError(msg("crop_patch: side must be positive, got ", side));
    if (out_size < 1) throw InputError(msg("crop_patch: bad output size ", out_size));
    const int h = image.shape[1], w = image.shape[2];

    double mean[3] = {0.0, 0.0, 0.0};
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) mean[c] += image.data[c * plane + i];
        mean[c] /= static_cast<double>(plane);
    }

    const double scale = side / out_size;
    const double ox = cx - side / 2.0;
    const double oy = cy - side / 2.0;
    Tensor out = Tensor::zeros({3, out_size, out_size});
    for (int c = 0; c < 3; ++c) {
        const double* src = image.data.data() + c * plane;
        const double fill = mean[c];
        auto fetch = [&](int yi, int xi) {
            if (yi < 0 || yi >= h || xi < 0 || xi >= w) return fill;
            return src[static_cast<std::size_t>(yi) * w + xi];
        };
        double* dst = out.data.data() + static_cast<std::size_t>(c) * out_size * out_size;
        for (int v = 0; v < out_size; ++v) {
            const double sy = oy + (v + 0.5) * scale - 0.5;
            const int y0 = static_cast<int>(std::floor(sy));
            const double fy = sy - y0;
            for (int u = 0; u < out_size; ++u) {
                const double sx = ox + (u + 0.5) * scale - 0.5;
                const int x0 = static_cast<int>(std::floor(sx));
                const double fx = sx - x0;
                const double top = fetch(y0, x0) * (1.0 - fx) + fetch(y0, x0 + 1) * fx;
                const double bot = fetch(y0 + 1, x0) * (1.0 - fx) + fetch(y0 + 1, x0 + 1) * fx;
                dst[static_cast<std::size_t>(v) * out_size + u] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    return out;
}

BBox box_to_crop(const BBox& pixel_box, const CropWindow& crop) {
    BBox out;
    out.frame = Frame::normalized;
    out.cx = (pixel_box.cx - crop.x0()) / crop.side;
    out.cy = (pixel_box.cy - crop.y0()) / crop.side;
    out.w = pixel_box.w / crop.side;
    out.h = pixel_box.h / crop.side;
    return out;
}

BBox box_from_crop(const BBox& normalized_box, const CropWindow& crop) {
    BBox out;
    out.frame = Frame::pixel;
    out.cx = crop.x0() + normalized_box.cx * crop.side;
    out.cy = crop.y0() + normalized_box.cy * crop.side;
    out.w = normalized_box.w * crop.side;
    out.h = normalized_box.h * crop.side;
    return out;
}

std::vector<double> hann_window(int n) {
    if (n < 1) throw ContractError(msg("hann_window: bad length ", n));
    std::vector<double> w(n, 1.0);
    if (n == 1) return w;
    // Mirror the first half so the symmetry is exact in floating point and
    // ties at the twin peak resolve deterministically.
    for (int i = 0; i < n / 2; ++i) {
        w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / (n - 1)));
        w[n - 1 - i] = w[i];
    }
    if (n % 2 == 1) w[n / 2] = 1.0;
    return w;
}

std::vector<double> window_penalty(const std::vector<double>& scores, double weight) {
    if (weight < 0.0 || weight > 1.0)
        throw ContractError(msg("window_penalty: weight ", weight, " outside [0,1]"));
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(scores.size()))));
    if (side < 1 || static_cast<std::size_t>(side) * side != scores.size())
        throw ContractError(msg("window_penalty: score count ", scores.size(),
                                " is not a square grid"));
    const std::vector<double> hann = hann_window(side);
    std::vector<double> out(scores.size());
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * side + j;
            out[idx] = (1.0 - weight) * scores[idx] + weight * hann[i] * hann[j];
        }
    return out;
}

double square_crop_side(double factor, const BBox& box) {
    return std::max(2.0, factor * std::sqrt(box.w * box.h));
}

namespace {

Tensor patch_features(Tape& tape, const ModelParams& params, const Tensor& patch) {
    return reduce_and_flatten(tape, params.backbone, extract(tape, params.backbone, patch));
}

BBox clip_to_image(BBox box, int img_w, int img_h) {
    box.w = std::max(1.0, std::min(box.w, static_cast<double>(img_w)));
    box.h = std::max(1.0, std::min(box.h, static_cast<double>(img_h)));
    box.cx = std::min(std::max(box.cx, box.w / 2.0), img_w - box.w / 2.0);
    box.cy = std::min(std::max(box.cy, box.h / 2.0), img_h - box.h / 2.0);
    return box;
}

}  // namespace

TrackState tracker_init(const TrackerConfig& cfg, const ModelParams& params,
                        const Tensor& image, const BBox& init_box) {
    cfg.validate();
    params.validate(cfg.model);
    if (!init_box.valid() || init_box.frame != Frame::pixel)
        throw InputError(msg("tracker_init: initial box must be a valid pixel box, got ",
                             init_box.w, "x", init_box.h));

    const double side = square_crop_side(cfg.template_factor, init_box);
    Tensor patch = crop_patch(image, init_box.cx, init_box.cy, side, cfg.template_size);
    Tape tape;
    TrackState state;
    state.template_feat = patch_features(tape, params, patch);
    state.prev_box = init_box;
    state.initialized = true;
    return state;
}

TrackOutput track_frame(TrackState& state, const TrackerConfig& cfg, const ModelParams& params,
                        const Tensor& image, bool record_attention) {
    if (!state.initialized) throw ContractError("track_frame: tracker state not initialized");
    const int grid = cfg.search_grid();

    CropWindow crop{state.prev_box.cx, state.prev_box.cy,
                    square_crop_side(cfg.search_factor, state.prev_box)};
    Tensor patch = crop_patch(image, crop.cx, crop.cy, crop.side, cfg.search_size);

    Tape tape;
    Tensor fx = patch_features(tape, params, patch);
    PosEncoding2D pe_z = sine_pos_encoding(cfg.model.d, cfg.template_grid(), cfg.template_grid());
    PosEncoding2D pe_x = sine_pos_encoding(cfg.model.d, grid, grid);
    FusionResult fused = fusion_forward(tape, params.fusion, state.template_feat, pe_z, fx, pe_x,
                                        record_attention);
    Prediction pred = predict(tape, params.head, fused.fused);

    std::vector<double> raw(pred.scores.data.begin(), pred.scores.data.end());
    if (static_cast<int>(raw.size()) != grid * grid)
        throw ContractError(msg("track_frame: ", raw.size(), " scores for a ", grid, "x", grid,
                                " grid"));
    TrackOutput out;
    out.scores = window_penalty(raw, cfg.window_weight);
    out.best_index = 0;
    for (std::size_t i = 1; i < out.scores.size(); ++i)
        if (out.scores[i] > out.scores[out.best_index]) out.best_index = static_cast<int>(i);

    BBox norm{pred.boxes.at(out.best_index, 0), pred.boxes.at(out.best_index, 1),
              pred.boxes.at(out.best_index, 2), pred.boxes.at(out.best_index, 3),
              Frame::normalized};
    out.box = clip_to_image(box_from_crop(norm, crop), image.shape[2], image.shape[1]);
    out.records = std::move(fused.records);

    state.prev_box = out.box;
    state.last_search_crop = crop;
    return out;
}

}  // namespace transt
