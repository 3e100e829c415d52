#include "transt/bbox.hpp"

#include <algorithm>

namespace transt {

namespace {
void require_valid(const BBox& a, const BBox& b, const char* op) {
    if (!a.valid() || !b.valid())
        throw InputError(msg(op, ": boxes must have positive area, got ", a.w, "x", a.h, " and ",
                             b.w, "x", b.h));
    if (a.frame != b.frame)
        throw InputError(msg(op, ": boxes live in different coordinate frames"));
}

double intersection_area(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
    const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
    return std::max(0.0, iw) * std::max(0.0, ih);
}
}  // namespace

double iou(const BBox& a, const BBox& b) {
    require_valid(a, b, "iou");
    const double inter = intersection_area(a, b);
    return inter / (a.area() + b.area() - inter);
}

double giou(const BBox& a, const BBox& b) {
    require_valid(a, b, "giou");
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    const double ew = std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0());
    const double eh = std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0());
    const double enclosure = ew * eh;
    return inter / uni - (enclosure - uni) / enclosure;
}

}  // namespace transt
