#include "transt/head_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace transt {

namespace {
constexpr double kProbEps = 1e-7;
}

MlpParams MlpParams::init(Rng& rng, int d, int out) {
    MlpParams p;
    p.w1 = Tensor::xavier(rng, d, d);
    p.b1 = Tensor::zeros({d});
    p.w2 = Tensor::xavier(rng, d, d);
    p.b2 = Tensor::zeros({d});
    p.w3 = Tensor::xavier(rng, d, out);
    p.b3 = Tensor::zeros({out});
    return p;
}

void MlpParams::for_each(const std::string& prefix,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
    fn(prefix + ".w3", w3);
    fn(prefix + ".b3", b3);
}

void MlpParams::validate(int d, int out) const {
    if (w1.shape != std::vector<int>{d, d} || b1.shape != std::vector<int>{d} ||
        w2.shape != std::vector<int>{d, d} || b2.shape != std::vector<int>{d} ||
        w3.shape != std::vector<int>{d, out} || b3.shape != std::vector<int>{out})
        throw ConfigError(msg("head: mlp shapes inconsistent for d=", d, " out=", out,
                              ": w1=", shape_str(w1.shape), " w2=", shape_str(w2.shape),
                              " w3=", shape_str(w3.shape)));
}

HeadParams HeadParams::init(Rng& rng, int d) {
    HeadParams p;
    p.cls = MlpParams::init(rng, d, 1);
    p.reg = MlpParams::init(rng, d, 4);
    return p;
}

void HeadParams::for_each(const std::string& prefix,
                          const std::function<void(const std::string&, Tensor&)>& fn) {
    cls.for_each(prefix + ".cls", fn);
    reg.for_each(prefix + ".reg", fn);
}

void HeadParams::validate(int d) const {
    cls.validate(d, 1);
    reg.validate(d, 4);
}

namespace {
Tensor mlp_forward(Tape& tape, const MlpParams& p, const Tensor& x) {
    Tensor h = tape.relu(tape.add_row(tape.matmul(x, p.w1), p.b1));
    h = tape.relu(tape.add_row(tape.matmul(h, p.w2), p.b2));
    return tape.add_row(tape.matmul(h, p.w3), p.b3);
}
}  // namespace

Prediction predict(Tape& tape, const HeadParams& params, const Tensor& fused) {
    params.validate(fused.cols());
    Prediction pred;
    pred.scores = tape.sigmoid(mlp_forward(tape, params.cls, fused));
    pred.boxes = tape.sigmoid(mlp_forward(tape, params.reg, fused));
    return pred;
}

SampleAssignment assign_samples(const BBox& gt, int grid_h, int grid_w) {
    if (!gt.valid())
        throw InputError(msg("assign_samples: degenerate ground-truth box ", gt.w, "x", gt.h));
    if (gt.frame != Frame::normalized)
        throw InputError("assign_samples: ground truth must be in normalized coordinates");
    if (grid_h < 1 || grid_w < 1)
        throw ContractError(msg("assign_samples: bad grid ", grid_h, "x", grid_w));

    SampleAssignment a;
    a.grid_h = grid_h;
    a.grid_w = grid_w;
    a.labels.assign(static_cast<std::size_t>(grid_h) * grid_w, 0);
    for (int i = 0; i < grid_h; ++i) {
        for (int j = 0; j < grid_w; ++j) {
            const double cx = (j + 0.5) / grid_w;
            const double cy = (i + 0.5) / grid_h;
            if (std::fabs(cx - gt.cx) <= gt.w / 2.0 && std::fabs(cy - gt.cy) <= gt.h / 2.0) {
                const int idx = i * grid_w + j;
                a.labels[idx] = 1;
                a.positive_indices.push_back(idx);
            }
        }
    }
    if (a.positive_indices.empty()) {
        // Sub-cell box: promote the cell whose center is nearest the target.
        double best = std::numeric_limits<double>::max();
        int best_idx = 0;
        for (int i = 0; i < grid_h; ++i) {
            for (int j = 0; j < grid_w; ++j) {
                const double dx = (j + 0.5) / grid_w - gt.cx;
                const double dy = (i + 0.5) / grid_h - gt.cy;
                const double d2 = dx * dx + dy * dy;
                if (d2 < best) {
                    best = d2;
                    best_idx = i * grid_w + j;
                }
            }
        }
        a.labels[best_idx] = 1;
        a.positive_indices.push_back(best_idx);
    }
    a.positive_count = static_cast<int>(a.positive_indices.size());
    return a;
}

Tensor classification_loss(Tape& tape, const Tensor& scores, const SampleAssignment& assignment,
                           double negative_weight) {
    const int n = static_cast<int>(assignment.labels.size());
    if (scores.rank() != 2 || scores.shape[0] != n || scores.shape[1] != 1)
        throw ShapeError(msg("classification_loss: scores ", shape_str(scores.shape),
                             " do not match ", n, " assigned cells"));
    Tensor y = Tensor::zeros({n, 1});
    Tensor weights = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i) {
        y.data[i] = assignment.labels[i];
        weights.data[i] = assignment.labels[i] ? 1.0 : negative_weight;
    }
    Tensor ones = Tensor::full({n, 1}, 1.0);
    Tensor p = tape.clamp(scores, kProbEps, 1.0 - kProbEps);
    Tensor pos = tape.mul(y, tape.log(p));
    Tensor neg = tape.mul(tape.sub(ones, y), tape.log(tape.sub(ones, p)));
    return tape.mul_scalar(tape.sum(tape.mul(weights, tape.add(pos, neg))), -1.0);
}

namespace {
struct ColumnCorners {
    Tensor x0, y0, x1, y1;  // each P x 1
};

ColumnCorners to_corners(Tape& tape, const Tensor& boxes) {
    Tensor cx = tape.slice_cols(boxes, 0, 1);
    Tensor cy = tape.slice_cols(boxes, 1, 1);
    Tensor hw = tape.mul_scalar(tape.slice_cols(boxes, 2, 1), 0.5);
    Tensor hh = tape.mul_scalar(tape.slice_cols(boxes, 3, 1), 0.5);
    return {tape.sub(cx, hw), tape.sub(cy, hh), tape.add(cx, hw), tape.add(cy, hh)};
}
}  // namespace

Tensor regression_loss(Tape& tape, const Tensor& boxes, const BBox& gt,
                       const SampleAssignment& assignment, const LossConfig& cfg) {
    if (assignment.positive_count < 1)
        throw ContractError("regression_loss: no positive samples");
    if (!gt.valid())
        throw InputError(msg("regression_loss: degenerate ground-truth box ", gt.w, "x", gt.h));
    if (boxes.rank() != 2 || boxes.shape[1] != 4)
        throw ShapeError(msg("regression_loss: boxes must be Nx4, got ", shape_str(boxes.shape)));

    const int p_count = assignment.positive_count;
    Tensor pred = tape.gather_rows(boxes, assignment.positive_indices);  // P x 4
    Tensor gt_tile = Tensor::zeros({p_count, 4});
    for (int i = 0; i < p_count; ++i) {
        gt_tile.at(i, 0) = gt.cx;
        gt_tile.at(i, 1) = gt.cy;
        gt_tile.at(i, 2) = gt.w;
        gt_tile.at(i, 3) = gt.h;
    }

    ColumnCorners a = to_corners(tape, pred);
    ColumnCorners b = to_corners(tape, gt_tile);
    Tensor iw = tape.relu(tape.sub(tape.minimum(a.x1, b.x1), tape.maximum(a.x0, b.x0)));
    Tensor ih = tape.relu(tape.sub(tape.minimum(a.y1, b.y1), tape.maximum(a.y0, b.y0)));
    Tensor inter = tape.mul(iw, ih);
    Tensor area_a = tape.mul(tape.slice_cols(pred, 2, 1), tape.slice_cols(pred, 3, 1));
    Tensor area_b = Tensor::full({p_count, 1}, gt.area());
    Tensor uni = tape.sub(tape.add(area_a, area_b), inter);
    Tensor overlap = tape.div(inter, uni);
    Tensor ew = tape.sub(tape.maximum(a.x1, b.x1), tape.minimum(a.x0, b.x0));
    Tensor eh = tape.sub(tape.maximum(a.y1, b.y1), tape.minimum(a.y0, b.y0));
    Tensor enclosure = tape.mul(ew, eh);
    Tensor g = tape.sub(overlap, tape.div(tape.sub(enclosure, uni), enclosure));

    Tensor ones = Tensor::full({p_count, 1}, 1.0);
    Tensor giou_term = tape.sum(tape.sub(ones, g));
    Tensor l1_term = tape.sum(tape.abs(tape.sub(pred, gt_tile)));
    Tensor loss = tape.add(tape.mul_scalar(giou_term, cfg.lambda_giou),
                           tape.mul_scalar(l1_term, cfg.lambda_l1));
    return cfg.average_positives ? tape.mul_scalar(loss, 1.0 / p_count) : loss;
}

Tensor total_loss(Tape& tape, const Prediction& pred, const SampleAssignment& assignment,
                  const BBox& gt, const LossConfig& cfg) {
    return tape.add(classification_loss(tape, pred.scores, assignment, cfg.negative_weight),
                    regression_loss(tape, pred.boxes, gt, assignment, cfg));
}

}  // namespace transt
