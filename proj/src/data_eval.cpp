#include "transt/data_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "transt/rng.hpp"

namespace fs = std::filesystem;

namespace transt {

namespace {

struct Rect {
    double cx, cy;  // float center
    int w, h;       // rasterized size for the current frame
    double vx, vy;
    double base_w, base_h;
    double scale_period, scale_phase_w, scale_phase_h;
};

struct Palette {
    int a[3];
    int b[3];
};

void draw_checker(Tensor& img, const Rect& r, const Palette& pal, int cell) {
    const int h = img.shape[1], w = img.shape[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int x0 = static_cast<int>(std::lround(r.cx - r.w / 2.0));
    const int y0 = static_cast<int>(std::lround(r.cy - r.h / 2.0));
    for (int y = y0; y < y0 + r.h; ++y) {
        if (y < 0 || y >= h) continue;
        for (int x = x0; x < x0 + r.w; ++x) {
            if (x < 0 || x >= w) continue;
            const bool border = (y == y0 || y == y0 + r.h - 1 || x == x0 || x == x0 + r.w - 1);
            const bool odd = (((y - y0) / cell) + ((x - x0) / cell)) % 2 == 1;
            for (int c = 0; c < 3; ++c) {
                int byte = border ? 25 : (odd ? pal.b[c] : pal.a[c]);
                img.data[c * plane + static_cast<std::size_t>(y) * w + x] = byte / 255.0;
            }
        }
    }
}

Rect random_rect(Rng& rng, int img_w, int img_h) {
    Rect r;
    r.base_w = 16.0 + rng.uniform(0.0, 10.0);
    r.base_h = 16.0 + rng.uniform(0.0, 10.0);
    // slow size breathing so normalized target size varies within a sequence
    r.scale_period = rng.uniform(18.0, 36.0);
    r.scale_phase_w = rng.uniform(0.0, 2.0 * M_PI);
    r.scale_phase_h = rng.uniform(0.0, 2.0 * M_PI);
    r.w = static_cast<int>(std::lround(r.base_w));
    r.h = static_cast<int>(std::lround(r.base_h));
    const double mx = r.base_w * 0.6 + 3.0, my = r.base_h * 0.6 + 3.0;
    r.cx = rng.uniform(mx, img_w - mx);
    r.cy = rng.uniform(my, img_h - my);
    r.vx = rng.uniform(-2.5, 2.5);
    r.vy = rng.uniform(-2.5, 2.5);
    return r;
}

void step_rect(Rect& r, Rng& rng, int frame, int img_w, int img_h) {
    r.cx += r.vx + rng.uniform(-0.7, 0.7);
    r.cy += r.vy + rng.uniform(-0.7, 0.7);
    const double two_pi = 2.0 * M_PI;
    r.w = std::max(12, static_cast<int>(std::lround(
                           r.base_w * (1.0 + 0.15 * std::sin(two_pi * frame / r.scale_period +
                                                             r.scale_phase_w)))));
    r.h = std::max(12, static_cast<int>(std::lround(
                           r.base_h * (1.0 + 0.15 * std::sin(two_pi * frame / r.scale_period +
                                                             r.scale_phase_h)))));
    const double mx = r.w / 2.0 + 2.0, my = r.h / 2.0 + 2.0;
    if (r.cx < mx) {
        r.cx = mx;
        r.vx = -r.vx;
    }
    if (r.cx > img_w - mx) {
        r.cx = img_w - mx;
        r.vx = -r.vx;
    }
    if (r.cy < my) {
        r.cy = my;
        r.vy = -r.vy;
    }
    if (r.cy > img_h - my) {
        r.cy = img_h - my;
        r.vy = -r.vy;
    }
}

BBox rect_box(const Rect& r) {
    const double x0 = std::lround(r.cx - r.w / 2.0);
    const double y0 = std::lround(r.cy - r.h / 2.0);
    return BBox::from_xywh(x0, y0, r.w, r.h, Frame::pixel);
}

}  // namespace

Sequence synth_sequence(const SynthSpec& spec) {
    if (spec.frame_count < 2)
        throw ContractError(msg("synth_sequence: need at least 2 frames, got ", spec.frame_count));
    if (spec.width < 32 || spec.height < 32)
        throw ContractError(msg("synth_sequence: image too small, ", spec.width, "x", spec.height));

    Rng rng(spec.seed);
    const int w = spec.width, h = spec.height;
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    // static textured background
    Tensor background = Tensor::zeros({3, h, w});
    const int base[3] = {70 + static_cast<int>(rng.next_below(30)),
                         75 + static_cast<int>(rng.next_below(30)),
                         85 + static_cast<int>(rng.next_below(35))};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int grad = (15 * y) / h;
            for (int c = 0; c < 3; ++c) {
                int byte = base[c] + grad + static_cast<int>(rng.next_below(21)) - 10;
                byte = std::clamp(byte, 0, 255);
                background.data[c * plane + static_cast<std::size_t>(y) * w + x] = byte / 255.0;
            }
        }

    // warm target palette, cool distractor palettes
    Palette target_pal;
    target_pal.a[0] = 200 + static_cast<int>(rng.next_below(51));
    target_pal.a[1] = 30 + static_cast<int>(rng.next_below(51));
    target_pal.a[2] = 20 + static_cast<int>(rng.next_below(41));
    target_pal.b[0] = 235 + static_cast<int>(rng.next_below(21));
    target_pal.b[1] = 160 + static_cast<int>(rng.next_below(51));
    target_pal.b[2] = 30 + static_cast<int>(rng.next_below(51));

    Rect target = random_rect(rng, w, h);
    std::vector<Rect> distractors;
    std::vector<Palette> distractor_pals;
    for (int i = 0; i < spec.distractors; ++i) {
        Palette pal;
        if (i % 2 == 0) {
            pal.a[0] = 20 + static_cast<int>(rng.next_below(51));
            pal.a[1] = 60 + static_cast<int>(rng.next_below(71));
            pal.a[2] = 150 + static_cast<int>(rng.next_below(81));
            pal.b[0] = 60 + static_cast<int>(rng.next_below(41));
            pal.b[1] = 90 + static_cast<int>(rng.next_below(61));
            pal.b[2] = 180 + static_cast<int>(rng.next_below(76));
        } else {
            pal.a[0] = 30 + static_cast<int>(rng.next_below(61));
            pal.a[1] = 150 + static_cast<int>(rng.next_below(71));
            pal.a[2] = 60 + static_cast<int>(rng.next_below(61));
            pal.b[0] = 70 + static_cast<int>(rng.next_below(51));
            pal.b[1] = 190 + static_cast<int>(rng.next_below(66));
            pal.b[2] = 90 + static_cast<int>(rng.next_below(51));
        }
        distractors.push_back(random_rect(rng, w, h));
        distractor_pals.push_back(pal);
    }

    Sequence seq;
    seq.name = spec.name;
    for (int f = 0; f < spec.frame_count; ++f) {
        if (f > 0) {
            step_rect(target, rng, f, w, h);
            for (Rect& r : distractors) step_rect(r, rng, f, w, h);
        }
        Tensor frame = background;
        for (std::size_t i = 0; i < distractors.size(); ++i)
            draw_checker(frame, distractors[i], distractor_pals[i], 4);
        draw_checker(frame, target, target_pal, 4);

        if (spec.occluder && f >= spec.frame_count / 3 && f < 2 * spec.frame_count / 3) {
            const int span = 2 * spec.frame_count / 3 - spec.frame_count / 3;
            const int pos = spec.frame_count / 3 == f && span == 0
                                ? 0
                                : ((f - spec.frame_count / 3) * (w - 14)) / std::max(1, span - 1);
            for (int y = 0; y < h; ++y)
                for (int x = pos; x < std::min(w, pos + 14); ++x)
                    for (int c = 0; c < 3; ++c)
                        frame.data[c * plane + static_cast<std::size_t>(y) * w + x] =
                            (48 + 2 * c) / 255.0;
        }
        seq.frames.push_back(std::move(frame));
        seq.gt.push_back(rect_box(target));
    }
    return seq;
}

MetricReport compute_metrics(const std::vector<BBox>& results, const std::vector<BBox>& gt) {
    if (results.empty() || results.size() != gt.size())
        throw InputError(msg("compute_metrics: ", results.size(), " results vs ", gt.size(),
                             " ground-truth boxes"));
    MetricReport r;
    const std::size_t n = results.size();
    std::vector<double> norm_err(n);
    r.frame_iou.resize(n);
    double iou_sum = 0.0;
    long hits_050 = 0, hits_075 = 0, hits_20px = 0;
    for (std::size_t i = 0; i < n; ++i) {
        r.frame_iou[i] = iou(results[i], gt[i]);
        const double dx = results[i].cx - gt[i].cx;
        const double dy = results[i].cy - gt[i].cy;
        norm_err[i] = std::hypot(dx / gt[i].w, dy / gt[i].h);
        iou_sum += r.frame_iou[i];
        if (r.frame_iou[i] > 0.5) ++hits_050;
        if (r.frame_iou[i] > 0.75) ++hits_075;
        if (std::hypot(dx, dy) <= 20.0) ++hits_20px;
    }
    long success_hits = 0, norm_hits = 0;
    for (int k = 0; k <= 100; ++k) {
        const double iou_thr = k / 100.0;
        const double ne_thr = k * 0.005;
        for (std::size_t i = 0; i < n; ++i) {
            if (r.frame_iou[i] >= iou_thr) ++success_hits;
            if (norm_err[i] <= ne_thr) ++norm_hits;
        }
    }
    const double dn = static_cast<double>(n);
    r.ao = iou_sum / dn;
    r.sr_050 = static_cast<double>(hits_050) / dn;
    r.sr_075 = static_cast<double>(hits_075) / dn;
    r.precision_at_20px = static_cast<double>(hits_20px) / dn;
    r.success_auc = static_cast<double>(success_hits) / (dn * 101.0);
    r.norm_precision_auc = static_cast<double>(norm_hits) / (dn * 101.0);
    return r;
}

std::string metric_report_text(const MetricReport& report) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "success_auc: %.6f\n"
                  "precision_at_20px: %.6f\n"
                  "norm_precision_auc: %.6f\n"
                  "ao: %.6f\n"
                  "sr_050: %.6f\n"
                  "sr_075: %.6f\n",
                  report.success_auc, report.precision_at_20px, report.norm_precision_auc,
                  report.ao, report.sr_050, report.sr_075);
    return buf;
}

std::string metric_report_json(const MetricReport& report) {
    nlohmann::ordered_json j;
    j["success_auc"] = report.success_auc;
    j["precision_at_20px"] = report.precision_at_20px;
    j["norm_precision_auc"] = report.norm_precision_auc;
    j["ao"] = report.ao;
    j["sr_050"] = report.sr_050;
    j["sr_075"] = report.sr_075;
    j["frame_iou"] = report.frame_iou;
    return j.dump(2) + "\n";
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.shape[0] != 3)
        throw InputError(msg("write_ppm: image must be 3xHxW, got ", shape_str(image.shape)));
    const int h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(msg("write_ppm: cannot open ", path));
    out << "P6\n" << w << " " << h << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = image.data[c * plane + static_cast<std::size_t>(y) * w + x];
                const long b = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(b);
            }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw IoError(msg("write_ppm: short write to ", path));
}

void write_pgm(const std::string& path, int height, int width,
               const std::vector<double>& values) {
    if (height < 1 || width < 1 ||
        values.size() != static_cast<std::size_t>(height) * width)
        throw InputError(msg("write_pgm: ", values.size(), " values for a ", height, "x", width,
                             " grid"));
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(msg("write_pgm: cannot open ", path));
    out << "P5\n" << width << " " << height << "\n255\n";
    for (double v : values) {
        const double norm = span > 0.0 ? (v - lo) / span : 0.0;
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(norm * 255.0))));
    }
    if (!out) throw IoError(msg("write_pgm: short write to ", path));
}

namespace {
// Reads one whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw IoError(msg("read_ppm: ", path, ": truncated header"));
    return tok;
}
}  // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(msg("read_ppm: cannot open ", path));
    if (ppm_token(in, path) != "P6")
        throw IoError(msg("read_ppm: ", path, ": not a binary PPM (P6)"));
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(ppm_token(in, path));
        h = std::stoi(ppm_token(in, path));
        maxval = std::stoi(ppm_token(in, path));
    } catch (const std::exception&) {
        throw IoError(msg("read_ppm: ", path, ": malformed header"));
    }
    if (w < 1 || h < 1) throw IoError(msg("read_ppm: ", path, ": bad size ", w, "x", h));
    if (maxval != 255)
        throw IoError(msg("read_ppm: ", path, ": unsupported maxval ", maxval, " (only 255)"));
    // header ends with exactly one whitespace byte (already consumed by the
    // token reader)
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError(msg("read_ppm: ", path, ": truncated pixel data at byte ", in.gcount()));
    Tensor img = Tensor::zeros({3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.data[c * plane + static_cast<std::size_t>(y) * w + x] =
                    bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return img;
}

namespace {
std::string frame_name(int index1) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d.ppm", index1);
    return buf;
}

std::vector<BBox> parse_boxes(std::istream& in, const std::string& path) {
    std::vector<BBox> boxes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        double v[4];
        char extra;
        const int got = std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf %c", &v[0], &v[1], &v[2],
                                    &v[3], &extra);
        if (got != 4)
            throw IoError(msg(path, ": line ", line_no, ": expected 'x,y,w,h', got '", line, "'"));
        boxes.push_back(BBox::from_xywh(v[0], v[1], v[2], v[3], Frame::pixel));
    }
    return boxes;
}
}  // namespace

std::vector<BBox> read_boxes_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("cannot open ", path));
    return parse_boxes(in, path);
}

void write_boxes_file(const std::string& path, const std::vector<BBox>& boxes) {
    std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
    if (!out) throw IoError(msg("cannot open ", path, " for writing"));
    char buf[160];
    for (const BBox& b : boxes) {
        std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f\n", b.x0(), b.y0(), b.w, b.h);
        out << buf;
    }
    if (!out) throw IoError(msg("short write to ", path));
}

void write_sequence(const std::string& dir, const Sequence& seq) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < seq.frames.size(); ++i)
        write_ppm((fs::path(dir) / frame_name(static_cast<int>(i) + 1)).string(), seq.frames[i]);
    write_boxes_file((fs::path(dir) / "groundtruth.txt").string(), seq.gt);
}

Sequence read_sequence(const std::string& dir) {
    const std::string gt_path = (fs::path(dir) / "groundtruth.txt").string();
    Sequence seq;
    seq.name = fs::path(dir).filename().string();
    seq.gt = read_boxes_file(gt_path);
    if (seq.gt.empty()) throw IoError(msg(gt_path, ": no ground-truth lines"));
    for (std::size_t i = 0; i < seq.gt.size(); ++i)
        seq.frames.push_back(read_ppm((fs::path(dir) / frame_name(static_cast<int>(i) + 1)).string()));
    // a frame beyond the annotations means the annotation file is short
    const std::string extra = (fs::path(dir) / frame_name(static_cast<int>(seq.gt.size()) + 1)).string();
    if (fs::exists(extra))
        throw IoError(msg(gt_path, ": line ", seq.gt.size() + 1, " missing (frame ",
                          frame_name(static_cast<int>(seq.gt.size()) + 1), " exists)"));
    return seq;
}

}  // namespace transt
