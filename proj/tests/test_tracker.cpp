#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "transt/data_eval.hpp"
#include "transt/tracker.hpp"

using namespace transt;

namespace {

ModelConfig toy_model() {
    ModelConfig m;
    m.d = 8;
    m.n_heads = 2;
    m.layers = 1;
    m.channels = 4;
    m.d_ff = 16;
    return m;
}

TrackerConfig toy_tracker() {
    TrackerConfig cfg;
    cfg.model = toy_model();
    cfg.template_size = 16;
    cfg.search_size = 32;
    return cfg;
}

Tensor numbered_image(int h, int w) {
    Tensor img = Tensor::zeros({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.data[(static_cast<std::size_t>(c) * h + y) * w + x] =
                    (c + 1) * 0.001 * (y * w + x);
    return img;
}

}  // namespace

TEST_CASE("aligned crop with matching side is the identity") {
    Tensor img = numbered_image(20, 20);
    Tensor crop = crop_patch(img, 10.0, 10.0, 8.0, 8);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(crop.data[(c * 8 + y) * 8 + x] ==
                      img.data[(static_cast<std::size_t>(c) * 20 + y + 6) * 20 + x + 6]);
}

TEST_CASE("corner crop pads exactly the overhang") {
    Tensor img = numbered_image(16, 16);
    double mean[3];
    for (int c = 0; c < 3; ++c) {
        mean[c] = 0.0;
        for (int i = 0; i < 256; ++i) mean[c] += img.data[c * 256 + i] / 256.0;
    }
    // window [-4,4) x [-4,4): source indices -4..3, of which -4..-1 overhang
    Tensor crop = crop_patch(img, 0.0, 0.0, 8.0, 8);
    int padded = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const int sy = y - 4, sx = x - 4;
            const bool out = sy < 0 || sx < 0;
            for (int c = 0; c < 3; ++c) {
                const double got = crop.data[(c * 8 + y) * 8 + x];
                const double want = out ? mean[c]
                                        : img.data[(static_cast<std::size_t>(c) * 16 + sy) * 16 + sx];
                CHECK(got == doctest::Approx(want).epsilon(1e-15));
            }
            if (out) ++padded;
        }
    CHECK(padded == 64 - 16);
}

TEST_CASE("bilinear resize of a constant image stays constant") {
    Tensor img = Tensor::full({3, 12, 12}, 0.37);
    Tensor crop = crop_patch(img, 5.3, 7.1, 9.7, 16);
    for (double v : crop.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("crop rejects degenerate input") {
    Tensor img = Tensor::zeros({3, 8, 8});
    CHECK_THROWS_AS(crop_patch(img, 4, 4, 0.0, 8), InputError);
    CHECK_THROWS_AS(crop_patch(Tensor::zeros({1, 8, 8}), 4, 4, 2.0, 8), InputError);
    // center far outside the image is fine: fully padded
    Tensor far = crop_patch(img, 1000.0, 1000.0, 8.0, 4);
    for (double v : far.data) CHECK(v == 0.0);
}

TEST_CASE("box mapping through a crop window") {
    CropWindow crop{60.0, 70.0, 100.0};  // top-left (10, 20)
    BBox norm{0.5, 0.5, 0.25, 0.25, Frame::normalized};
    BBox pixel = box_from_crop(norm, crop);
    CHECK(pixel.cx == doctest::Approx(60.0));
    CHECK(pixel.cy == doctest::Approx(70.0));
    CHECK(pixel.w == doctest::Approx(25.0));
    CHECK(pixel.h == doctest::Approx(25.0));

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        CropWindow c{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(5, 200)};
        BBox b{c.cx + rng.uniform(-c.side / 4, c.side / 4),
               c.cy + rng.uniform(-c.side / 4, c.side / 4), rng.uniform(0.5, c.side / 4),
               rng.uniform(0.5, c.side / 4), Frame::pixel};
        BBox back = box_from_crop(box_to_crop(b, c), c);
        CHECK(std::fabs(back.cx - b.cx) <= 1e-9);
        CHECK(std::fabs(back.cy - b.cy) <= 1e-9);
        CHECK(std::fabs(back.w - b.w) <= 1e-9);
        CHECK(std::fabs(back.h - b.h) <= 1e-9);
    }
}

TEST_CASE("square crop side uses the geometric mean") {
    CHECK(square_crop_side(2.0, BBox{0, 0, 50, 50, Frame::pixel}) == doctest::Approx(100.0));
    CHECK(square_crop_side(4.0, BBox{0, 0, 50, 50, Frame::pixel}) == doctest::Approx(200.0));
    CHECK(square_crop_side(2.0, BBox{0, 0, 25, 100, Frame::pixel}) == doctest::Approx(100.0));
}

TEST_CASE("hann window shape") {
    auto h = hann_window(32);
    CHECK(h[0] == 0.0);
    CHECK(h[31] == doctest::Approx(0.0).epsilon(1e-15));
    for (int n = 0; n < 32; ++n) {
        CHECK(h[n] == doctest::Approx(0.5 * (1.0 - std::cos(2.0 * M_PI * n / 31.0))).epsilon(1e-15));
        CHECK(h[n] == doctest::Approx(h[31 - n]).epsilon(1e-12));
    }
    CHECK(h[15] == doctest::Approx(h[16]).epsilon(1e-15));
    CHECK(hann_window(1) == std::vector<double>{1.0});
}

TEST_CASE("window penalty") {
    Rng rng(5);
    std::vector<double> scores(1024);
    for (double& s : scores) s = rng.next_double();

    SUBCASE("weight zero is the identity") {
        CHECK(window_penalty(scores, 0.0) == scores);
    }
    SUBCASE("uniform scores with weight one peak at the window's center cells") {
        std::vector<double> uniform(1024, 1.0);
        auto out = window_penalty(uniform, 1.0);
        int best = 0;
        for (int i = 1; i < 1024; ++i)
            if (out[i] > out[best]) best = i;
        CHECK(best == 15 * 32 + 15);  // first of the 4-way tie (15,15)..(16,16)
        CHECK(out[15 * 32 + 15] == doctest::Approx(out[15 * 32 + 16]).epsilon(1e-15));
        CHECK(out[15 * 32 + 15] == doctest::Approx(out[16 * 32 + 15]).epsilon(1e-15));
        CHECK(out[15 * 32 + 15] == doctest::Approx(out[16 * 32 + 16]).epsilon(1e-15));
    }
    SUBCASE("equal inputs are fixed points of the blend") {
        auto hann = hann_window(32);
        std::vector<double> prior(1024);
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) prior[i * 32 + j] = hann[i] * hann[j];
        auto out = window_penalty(prior, 0.7);
        for (int i = 0; i < 1024; ++i) CHECK(out[i] == doctest::Approx(prior[i]).epsilon(1e-15));
    }
    SUBCASE("output is a per-cell convex combination") {
        auto hann = hann_window(32);
        auto out = window_penalty(scores, 0.49);
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                const double prior = hann[i] * hann[j];
                const double lo = std::min(scores[i * 32 + j], prior);
                const double hi = std::max(scores[i * 32 + j], prior);
                CHECK(out[i * 32 + j] >= lo - 1e-15);
                CHECK(out[i * 32 + j] <= hi + 1e-15);
            }
    }
    SUBCASE("bad inputs are rejected") {
        CHECK_THROWS_AS(window_penalty(std::vector<double>(10, 0.0), 0.5), ContractError);
        CHECK_THROWS_AS(window_penalty(scores, 1.5), ContractError);
    }
    SUBCASE("0.49 is the default weight") {
        CHECK(TrackerConfig{}.window_weight == 0.49);
    }
}

TEST_CASE("tracker init builds the template contract") {
    TrackerConfig cfg = toy_tracker();
    Rng rng(1);
    ModelParams params = ModelParams::init(rng, cfg.model);
    SynthSpec spec;
    spec.seed = 4;
    spec.frame_count = 4;
    spec.width = 96;
    spec.height = 96;
    Sequence seq = synth_sequence(spec);

    TrackState a = tracker_init(cfg, params, seq.frames[0], seq.gt[0]);
    CHECK(a.initialized);
    CHECK(a.template_feat.shape == std::vector<int>{4, 8});  // 2x2 grid x d

    // full-size template contract: 128 -> 16x16 = 256 vectors
    TrackerConfig big = toy_tracker();
    big.template_size = 128;
    big.search_size = 256;
    TrackState s = tracker_init(big, params, seq.frames[0], seq.gt[0]);
    CHECK(s.template_feat.shape == std::vector<int>{256, 8});

    TrackState b = tracker_init(cfg, params, seq.frames[0], seq.gt[0]);
    CHECK(a.template_feat.data == b.template_feat.data);
    CHECK(a.prev_box.cx == b.prev_box.cx);

    CHECK_THROWS_AS(tracker_init(cfg, params, seq.frames[0],
                                 BBox{10, 10, 0.0, 5.0, Frame::pixel}),
                    InputError);
}

TEST_CASE("uninitialized state is rejected") {
    TrackerConfig cfg = toy_tracker();
    Rng rng(2);
    ModelParams params = ModelParams::init(rng, cfg.model);
    TrackState state;
    CHECK_THROWS_AS(track_frame(state, cfg, params, Tensor::zeros({3, 64, 64})), ContractError);
}

TEST_CASE("template features never change while tracking") {
    TrackerConfig cfg = toy_tracker();
    Rng rng(3);
    ModelParams params = ModelParams::init(rng, cfg.model);
    SynthSpec spec;
    spec.seed = 9;
    spec.frame_count = 5;
    spec.width = 96;
    spec.height = 96;
    Sequence seq = synth_sequence(spec);

    TrackState state = tracker_init(cfg, params, seq.frames[0], seq.gt[0]);
    const std::vector<double> frozen = state.template_feat.data;
    for (int f = 1; f < 5; ++f) {
        TrackOutput out = track_frame(state, cfg, params, seq.frames[f]);
        CHECK(state.template_feat.data == frozen);
        // output stays inside the image with at least 1px sides
        CHECK(out.box.w >= 1.0);
        CHECK(out.box.h >= 1.0);
        CHECK(out.box.x0() >= -1e-9);
        CHECK(out.box.y0() >= -1e-9);
        CHECK(out.box.x1() <= 96.0 + 1e-9);
        CHECK(out.box.y1() <= 96.0 + 1e-9);
        // search crop side follows 4*sqrt(w*h) of the previous box
        CHECK(out.scores.size() == 16);
    }
}

TEST_CASE("uniform scores with full window weight select the window peak") {
    TrackerConfig cfg = toy_tracker();
    cfg.window_weight = 1.0;
    Rng rng(4);
    ModelParams params = ModelParams::init(rng, cfg.model);
    // all-zero head -> every score 0.5
    params.head.for_each("head", [](const std::string&, Tensor& t) { t = Tensor::zeros(t.shape); });
    SynthSpec spec;
    spec.seed = 10;
    spec.frame_count = 2;
    spec.width = 96;
    spec.height = 96;
    Sequence seq = synth_sequence(spec);
    TrackState state = tracker_init(cfg, params, seq.frames[0], seq.gt[0]);
    TrackOutput out = track_frame(state, cfg, params, seq.frames[1]);
    // 4x4 grid hann: [0, .75, .75, 0] -> peak tie at (1,1); lowest index wins
    CHECK(out.best_index == 1 * 4 + 1);
}

TEST_CASE("a full tracking run is deterministic") {
    TrackerConfig cfg = toy_tracker();
    Rng rng(5);
    ModelParams params = ModelParams::init(rng, cfg.model);
    SynthSpec spec;
    spec.seed = 11;
    spec.frame_count = 6;
    spec.width = 96;
    spec.height = 96;
    Sequence seq = synth_sequence(spec);

    auto run = [&] {
        TrackState state = tracker_init(cfg, params, seq.frames[0], seq.gt[0]);
        std::vector<double> flat;
        for (std::size_t f = 1; f < seq.frames.size(); ++f) {
            TrackOutput out = track_frame(state, cfg, params, seq.frames[f]);
            flat.insert(flat.end(), {out.box.cx, out.box.cy, out.box.w, out.box.h});
        }
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("attention records are exported on request") {
    TrackerConfig cfg = toy_tracker();
    Rng rng(6);
    ModelParams params = ModelParams::init(rng, cfg.model);
    SynthSpec spec;
    spec.seed = 12;
    spec.frame_count = 2;
    spec.width = 96;
    spec.height = 96;
    Sequence seq = synth_sequence(spec);
    TrackState state = tracker_init(cfg, params, seq.frames[0], seq.gt[0]);
    TrackOutput with = track_frame(state, cfg, params, seq.frames[1], true);
    CHECK(with.records.size() == 4 * 1 + 1);
    TrackState state2 = tracker_init(cfg, params, seq.frames[0], seq.gt[0]);
    TrackOutput without = track_frame(state2, cfg, params, seq.frames[1], false);
    CHECK(without.records.empty());
}
