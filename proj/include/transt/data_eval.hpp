#pragma once

#include <string>
#include <vector>

#include "transt/bbox.hpp"
#include "transt/tensor.hpp"

namespace transt {

// Frames are 3xHxW tensors with values k/255 (written and read losslessly
// as binary PPM). gt boxes are pixel-frame, one per frame.
struct Sequence {
    std::string name;
    std::vector<Tensor> frames;
    std::vector<BBox> gt;
};

// Deterministic synthetic video: a textured warm-colored target rectangle
// moving with constant velocity plus bounded jitter over a static textured
// background, optionally with cool-colored distractor rectangles and a
// sweeping occluder bar.
struct SynthSpec {
    std::uint64_t seed = 0;
    int frame_count = 30;
    int width = 128;
    int height = 128;
    int distractors = 2;
    bool occluder = false;
    std::string name = "synth";
};

Sequence synth_sequence(const SynthSpec& spec);

struct MetricReport {
    double success_auc = 0.0;        // mean over 101 IoU thresholds of fraction(IoU >= t)
    double precision_at_20px = 0.0;  // fraction(center error <= 20)
    double norm_precision_auc = 0.0; // 101 thresholds in [0,0.5], error scaled by gt w/h
    double ao = 0.0;                 // mean IoU
    double sr_050 = 0.0;             // fraction(IoU > 0.5), strict
    double sr_075 = 0.0;
    std::vector<double> frame_iou;
};

MetricReport compute_metrics(const std::vector<BBox>& results, const std::vector<BBox>& gt);

std::string metric_report_text(const MetricReport& report);
std::string metric_report_json(const MetricReport& report);

// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// Binary PGM (P5) of a row-major value grid, min-max normalized to 0..255
// (constant grids map to 0).
void write_pgm(const std::string& path, int height, int width,
               const std::vector<double>& values);

// Directory layout: frame_000001.ppm ... plus groundtruth.txt with one
// "x,y,w,h" line per frame (pixels, top-left origin, LF endings).
void write_sequence(const std::string& dir, const Sequence& seq);
Sequence read_sequence(const std::string& dir);

std::vector<BBox> read_boxes_file(const std::string& path);
void write_boxes_file(const std::string& path, const std::vector<BBox>& boxes);

}  // namespace transt
