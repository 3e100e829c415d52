#pragma once

#include <functional>
#include <string>
#include <vector>

#include "transt/bbox.hpp"
#include "transt/tensor.hpp"

namespace transt {

// Three linear layers with ReLU between the hidden ones.
struct MlpParams {
    Tensor w1, b1;  // d x d
    Tensor w2, b2;  // d x d
    Tensor w3, b3;  // d x out
    static MlpParams init(Rng& rng, int d, int out);
    void for_each(const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);
    void validate(int d, int out) const;
};

// Classification branch ends in 1 logit per vector, regression in 4;
// both are squashed with sigmoid, so scores and coordinates live in (0,1).
struct HeadParams {
    MlpParams cls;
    MlpParams reg;
    static HeadParams init(Rng& rng, int d);
    void for_each(const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);
    void validate(int d) const;
};

struct Prediction {
    Tensor scores;  // (H*W) x 1, foreground probability
    Tensor boxes;   // (H*W) x 4, (cx, cy, w, h) normalized to the search region
};

Prediction predict(Tape& tape, const HeadParams& params, const Tensor& fused);

// Binary labels over the score grid: a cell is positive iff its center lies
// inside the ground-truth box; when no center does, the cell nearest the box
// center becomes the single positive, so positives are never empty.
struct SampleAssignment {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<int> labels;            // H*W entries of 0/1, row-major
    std::vector<int> positive_indices;  // ascending
    int positive_count = 0;
};

SampleAssignment assign_samples(const BBox& gt_normalized, int grid_h, int grid_w);

struct LossConfig {
    double lambda_giou = 2.0;
    double lambda_l1 = 5.0;
    double negative_weight = 1.0 / 16.0;
    bool average_positives = true;  // false: plain sum over positives
};

// Weighted binary cross-entropy over every cell: full weight on positives,
// negative_weight on negatives. Probabilities are clamped to
// [1e-7, 1 - 1e-7] before the logs.
Tensor classification_loss(Tape& tape, const Tensor& scores, const SampleAssignment& assignment,
                           double negative_weight = 1.0 / 16.0);

// Over positives only: lambda_giou * (1 - GIoU(b_j, gt)) + lambda_l1 * |b_j - gt|_1,
// in normalized (cx,cy,w,h) coordinates, averaged (or summed) over positives.
Tensor regression_loss(Tape& tape, const Tensor& boxes, const BBox& gt_normalized,
                       const SampleAssignment& assignment, const LossConfig& cfg = {});

Tensor total_loss(Tape& tape, const Prediction& pred, const SampleAssignment& assignment,
                  const BBox& gt_normalized, const LossConfig& cfg = {});

}  // namespace transt
