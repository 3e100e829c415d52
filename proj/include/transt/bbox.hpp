#pragma once

#include "transt/error.hpp"

namespace transt {

enum class Frame { pixel, normalized };

// Axis-aligned box, center + size. frame says which coordinate system the
// numbers live in: image pixels or [0,1] relative to a search region.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
    Frame frame = Frame::pixel;

    static BBox from_xywh(double x, double y, double w, double h, Frame frame = Frame::pixel) {
        return BBox{x + w / 2.0, y + h / 2.0, w, h, frame};
    }
    static BBox from_corners(double x0, double y0, double x1, double y1,
                             Frame frame = Frame::pixel) {
        return BBox{(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0, frame};
    }

    double x0() const { return cx - w / 2.0; }
    double y0() const { return cy - h / 2.0; }
    double x1() const { return cx + w / 2.0; }
    double y1() const { return cy + h / 2.0; }
    double area() const { return w * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }
};

// Intersection over union, in [0, 1]. Degenerate boxes are rejected.
double iou(const BBox& a, const BBox& b);

// Generalized IoU: IoU - |enclosure \ union| / |enclosure|, in (-1, 1].
double giou(const BBox& a, const BBox& b);

}  // namespace transt
