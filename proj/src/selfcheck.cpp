#include "transt/selfcheck.hpp"

#include <cmath>
#include <functional>

#include "transt/config.hpp"
#include "transt/gradcheck.hpp"
#include "transt/train_toy.hpp"

namespace transt {

namespace {

struct Suite {
    std::vector<CheckResult> results;

    void run(const std::string& name, const std::function<std::string()>& body) {
        CheckResult r;
        r.name = name;
        try {
            r.detail = body();
            r.pass = true;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    }
};

void require(bool cond, const std::string& what) {
    if (!cond) throw Error(what);
}

ModelConfig tiny_model() {
    ModelConfig m;
    m.d = 8;
    m.n_heads = 2;
    m.layers = 1;
    m.channels = 4;
    m.d_ff = 16;
    return m;
}

std::string check_tensor_op_gradients() {
    Rng rng(101);
    auto mixed = [&](const std::vector<int>& shape) {
        Tensor t = Tensor::uniform(rng, shape, 0.2, 1.0);
        for (double& v : t.data)
            if (rng.next_double() < 0.5) v = -v;
        return t;
    };
    Tensor a = mixed({3, 4});
    Tensor b = mixed({3, 4});
    for (std::size_t i = 0; i < b.data.size(); ++i)
        if (std::fabs(a.data[i] - b.data[i]) < 0.05) b.data[i] += 0.2;
    Tensor pos = Tensor::uniform(rng, {3, 4}, 0.5, 2.0);

    double worst = 0.0;
    auto fd = [&](const std::vector<NamedTensor>& params, const ScalarFn& f) {
        GradCheckReport r = finite_diff_check(f, params, 1e-5, 1e-5);
        worst = std::max(worst, r.max_rel_err);
        require(r.pass, "op gradient check failed: " + r.summary());
    };
    fd({{"a", mixed({3, 4})}, {"b", mixed({4, 2})}},
       [](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.matmul(p[0], p[1])); });
    fd({{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
        Tensor y = t.softmax_rows(p[0]);
        return t.sum(t.mul(y, y));
    });
    fd({{"a", a}, {"b", b}}, [](Tape& t, const std::vector<Tensor>& p) {
        Tensor y = t.sub(t.maximum(p[0], p[1]), t.minimum(p[0], p[1]));
        return t.sum(t.mul(y, y));
    });
    fd({{"a", a}, {"b", pos}}, [](Tape& t, const std::vector<Tensor>& p) {
        return t.sum(t.div(t.sigmoid(p[0]), p[1]));
    });
    fd({{"a", pos}}, [](Tape& t, const std::vector<Tensor>& p) {
        return t.mean(t.log(p[0]));
    });
    fd({{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
        return t.sum(t.abs(t.clamp(p[0], -0.9, 0.9)));
    });
    fd({{"x", mixed({2, 5, 5})}, {"w", mixed({3, 2, 3, 3})}, {"b", mixed({3})}},
       [](Tape& t, const std::vector<Tensor>& p) {
           Tensor y = t.conv2d(p[0], p[1], p[2], 2);
           return t.sum(t.mul(y, y));
       });
    fd({{"x", mixed({6, 8})}}, [](Tape& t, const std::vector<Tensor>& p) {
        Tensor y = t.layer_norm_rows(p[0]);
        return t.sum(t.mul(y, y));
    });
    return msg("8 op families, max relative error ", worst);
}

std::string check_softmax_rows() {
    Rng rng(102);
    for (int trial = 0; trial < 25; ++trial) {
        Tensor x = Tensor::uniform(rng, {4, 7}, -700.0, 700.0);
        Tape t;
        Tensor y = t.softmax_rows(x);
        require(all_finite(y), "softmax produced a non-finite value");
        for (int i = 0; i < 4; ++i) {
            double s = 0.0;
            for (int j = 0; j < 7; ++j) s += y.at(i, j);
            require(std::fabs(s - 1.0) <= 1e-9, msg("row sum off by ", std::fabs(s - 1.0)));
        }
    }
    return "row sums within 1e-9 over extreme logits";
}

std::string check_attention_invariants() {
    Rng rng(103);
    MhaParams p = MhaParams::init(rng, 2, 8);
    Tensor q = Tensor::uniform(rng, {3, 8}, -1.0, 1.0);
    Tensor kv = Tensor::uniform(rng, {6, 8}, -1.0, 1.0);
    const std::vector<int> perm = {4, 0, 5, 2, 1, 3};
    Tensor kv_perm = Tensor::zeros({6, 8});
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j) kv_perm.at(i, j) = kv.at(perm[i], j);
    Tape t;
    AttentionRecord rec;
    Tensor out_a = multi_head(t, p, q, kv, kv, &rec);
    Tensor out_b = multi_head(t, p, q, kv_perm, kv_perm);
    double worst = 0.0;
    for (std::size_t i = 0; i < out_a.data.size(); ++i)
        worst = std::max(worst, std::fabs(out_a.data[i] - out_b.data[i]));
    require(worst <= 1e-9, msg("kv permutation moved the output by ", worst));
    for (const Tensor& w : rec.head_weights)
        for (int i = 0; i < w.shape[0]; ++i) {
            double s = 0.0;
            for (int j = 0; j < w.shape[1]; ++j) s += w.at(i, j);
            require(std::fabs(s - 1.0) <= 1e-6, "attention row does not sum to 1");
        }
    return msg("kv-set invariance within ", worst, ", weight rows sum to 1");
}

std::string check_equation_fidelity() {
    Rng rng(104);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        MhaParams mha = MhaParams::init(rng, 2, 8);
        CfaParams cfa = CfaParams::init(rng, 2, 8, 16);
        Tensor x = Tensor::uniform(rng, {6, 8}, -1.0, 1.0);
        Tensor kv = Tensor::uniform(rng, {4, 8}, -1.0, 1.0);
        PosEncoding2D px = sine_pos_encoding(8, 2, 3);
        PosEncoding2D pkv = sine_pos_encoding(8, 2, 2);
        Tape t;
        // ECA against its printed form
        Tensor got = eca_forward(t, mha, x, px);
        Tensor xp = t.add(x, px.values);
        Tensor want = t.add(x, multi_head(t, mha, xp, xp, x));
        for (std::size_t i = 0; i < got.data.size(); ++i)
            worst = std::max(worst, std::fabs(got.data[i] - want.data[i]));
        // CFA against its printed form
        Tensor got_cfa = cfa_forward(t, cfa, x, px, kv, pkv);
        Tensor attended = multi_head(t, cfa.mha, t.add(x, px.values), t.add(kv, pkv.values), kv);
        Tensor xt = t.add(x, attended);
        Tensor want_cfa = t.add(xt, ffn_forward(t, cfa.ffn, xt));
        for (std::size_t i = 0; i < got_cfa.data.size(); ++i)
            worst = std::max(worst, std::fabs(got_cfa.data[i] - want_cfa.data[i]));
    }
    require(worst <= 1e-12, msg("block output deviates from the printed form by ", worst));
    return msg("ECA/CFA match their printed forms within ", worst);
}

std::string check_residual_identity() {
    Rng rng(105);
    FusionParams p = FusionParams::init(rng, 8, 2, 2, 16);
    auto zero_cfa = [](CfaParams& c) {
        c.mha.w_o = Tensor::zeros(c.mha.w_o.shape);
        c.ffn.w1 = Tensor::zeros(c.ffn.w1.shape);
        c.ffn.b1 = Tensor::zeros(c.ffn.b1.shape);
        c.ffn.w2 = Tensor::zeros(c.ffn.w2.shape);
        c.ffn.b2 = Tensor::zeros(c.ffn.b2.shape);
    };
    for (auto& layer : p.layers) {
        layer.eca_search.w_o = Tensor::zeros(layer.eca_search.w_o.shape);
        layer.eca_template.w_o = Tensor::zeros(layer.eca_template.w_o.shape);
        zero_cfa(layer.cfa_search);
        zero_cfa(layer.cfa_template);
    }
    zero_cfa(p.decode);
    Tensor fz = Tensor::uniform(rng, {4, 8}, -1.0, 1.0);
    Tensor fx = Tensor::uniform(rng, {6, 8}, -1.0, 1.0);
    Tape t;
    FusionResult r = fusion_forward(t, p, fz, sine_pos_encoding(8, 2, 2), fx,
                                    sine_pos_encoding(8, 2, 3));
    require(r.fused.data == fx.data, "zero-path fusion is not the identity");
    return "zeroed output projections and FFNs reduce fusion to the identity (bitwise)";
}

std::string check_loss_oracles() {
    BBox a = BBox::from_corners(0, 0, 2, 2);
    require(giou(a, a) == 1.0, "giou(a,a) != 1");
    require(std::fabs(giou(BBox::from_corners(0, 0, 1, 1), BBox::from_corners(1, 0, 2, 1))) <=
                1e-15,
            "edge-touching giou != 0");
    require(std::fabs(giou(a, BBox::from_corners(0, 0, 1, 2)) - 0.5) <= 1e-15,
            "half-nested giou != 0.5");

    Tape t;
    SampleAssignment pos = assign_samples(BBox{0.5, 0.5, 1.0, 1.0, Frame::normalized}, 1, 1);
    const double lp = classification_loss(t, Tensor::matrix(1, 1, {0.5}), pos).item();
    require(std::fabs(lp - std::log(2.0)) <= 1e-12, msg("positive BCE ", lp, " != ln 2"));
    SampleAssignment neg;
    neg.grid_h = neg.grid_w = 1;
    neg.labels = {0};
    const double ln = classification_loss(t, Tensor::matrix(1, 1, {0.5}), neg).item();
    require(std::fabs(ln - std::log(2.0) / 16.0) <= 1e-12, msg("negative BCE ", ln, " != ln2/16"));
    LossConfig lc;
    require(lc.lambda_giou == 2.0 && lc.lambda_l1 == 5.0 && lc.negative_weight == 1.0 / 16.0,
            "loss defaults drifted");
    return "GIoU hand geometry, BCE analytic cases, default weights";
}

std::string check_paper_constants() {
    Config cfg;
    Rng rng(0);
    MhaParams mha = MhaParams::init(rng, cfg.tracker.model.n_heads, cfg.tracker.model.d);
    require(cfg.tracker.model.n_heads == 8, "n_heads default");
    require(cfg.tracker.model.d == 256, "d default");
    require(mha.d_k == 32 && mha.d_v == 32, "head split default");
    require(cfg.tracker.model.layers == 4, "layer count default");
    require(cfg.tracker.template_size == 128 && cfg.tracker.search_size == 256, "crop sizes");
    require(TrackerConfig::stride == 8, "stride");
    require(cfg.tracker.template_grid() * cfg.tracker.template_grid() == 256,
            "template vector count");
    require(cfg.tracker.search_grid() * cfg.tracker.search_grid() == 1024, "search vector count");
    require(cfg.tracker.search_grid() == 32, "score grid side");
    require(cfg.tracker.window_weight == 0.49, "window weight default");
    require(cfg.loss.lambda_giou == 2.0 && cfg.loss.lambda_l1 == 5.0, "loss weights");
    require(cfg.loss.negative_weight == 1.0 / 16.0, "negative down-weight");
    require(cfg.tracker.template_factor == 2.0 && cfg.tracker.search_factor == 4.0,
            "crop factors");
    return "n_heads=8 d=256 d_k=d_v=32 N=4 crops 128/256 grid 32x32 w=0.49 lambdas 2/5 factor 16";
}

std::string check_window_penalty() {
    Rng rng(106);
    std::vector<double> scores(32 * 32);
    for (double& s : scores) s = rng.next_double();
    require(window_penalty(scores, 0.0) == scores, "w=0 is not the identity");
    std::vector<double> uniform(32 * 32, 1.0);
    auto peaked = window_penalty(uniform, 1.0);
    int best = 0;
    for (int i = 1; i < 1024; ++i)
        if (peaked[i] > peaked[best]) best = i;
    require(best == 15 * 32 + 15, msg("uniform+w=1 argmax at ", best));
    auto hann = hann_window(32);
    auto blended = window_penalty(scores, 0.49);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            const double prior = hann[i] * hann[j];
            const double lo = std::min(scores[i * 32 + j], prior) - 1e-15;
            const double hi = std::max(scores[i * 32 + j], prior) + 1e-15;
            require(blended[i * 32 + j] >= lo && blended[i * 32 + j] <= hi,
                    "blend escapes the convex envelope");
        }
    return "identity at w=0, peak cell at (15,15), convex per cell";
}

std::string check_metric_oracles() {
    std::vector<BBox> gt(3, BBox::from_corners(0, 0, 2, 2));
    std::vector<BBox> res = {BBox::from_corners(0, 0, 2, 2), BBox::from_corners(0, 0, 1, 2),
                             BBox::from_corners(10, 10, 12, 12)};
    MetricReport r = compute_metrics(res, gt);
    require(r.ao == 0.5, msg("ao ", r.ao, " != 0.5"));
    require(r.sr_050 == 1.0 / 3.0, "sr_050 != 1/3");
    require(r.sr_075 == 1.0 / 3.0, "sr_075 != 1/3");
    MetricReport perfect = compute_metrics(gt, gt);
    require(perfect.success_auc == 1.0 && perfect.ao == 1.0 && perfect.sr_050 == 1.0 &&
                perfect.sr_075 == 1.0 && perfect.precision_at_20px == 1.0 &&
                perfect.norm_precision_auc == 1.0,
            "perfect results do not score 1.0 everywhere");
    return "three-frame case exact, perfect case all 1.0";
}

std::string check_pipeline_gradient() {
    ModelConfig mc = tiny_model();
    Rng rng(107);
    ModelParams model = ModelParams::init(rng, mc);
    Rng data_rng(108);
    Tensor template_img = Tensor::uniform(data_rng, {3, 16, 16}, 0.0, 1.0);
    Tensor search_img = Tensor::uniform(data_rng, {3, 32, 32}, 0.0, 1.0);
    BBox gt{0.5, 0.45, 0.35, 0.4, Frame::normalized};
    SampleAssignment assignment = assign_samples(gt, 4, 4);
    PosEncoding2D pe_z = sine_pos_encoding(mc.d, 2, 2);
    PosEncoding2D pe_x = sine_pos_encoding(mc.d, 4, 4);

    std::vector<NamedTensor> params;
    model.for_each([&](const std::string& n, Tensor& t) { params.push_back({n, t}); });
    auto f = [&](Tape& t, const std::vector<Tensor>& leaves) {
        ModelParams live = model;
        std::size_t i = 0;
        live.for_each([&](const std::string&, Tensor& dst) { dst = leaves[i++]; });
        Tensor fz = reduce_and_flatten(t, live.backbone, extract(t, live.backbone, template_img));
        Tensor fx = reduce_and_flatten(t, live.backbone, extract(t, live.backbone, search_img));
        FusionResult fused = fusion_forward(t, live.fusion, fz, pe_z, fx, pe_x);
        Prediction pred = predict(t, live.head, fused.fused);
        return total_loss(t, pred, assignment, gt);
    };
    GradCheckReport report = finite_diff_check(f, params, 1e-5, 1e-4);
    require(report.pass, "pipeline gradient check failed: " + report.summary());
    return msg(params.size(), " parameter tensors, max relative error ", report.max_rel_err);
}

std::string check_determinism() {
    Rng a(314), b(314);
    for (int i = 0; i < 50; ++i)
        require(a.next_u64() == b.next_u64(), "rng streams diverged");
    SynthSpec spec;
    spec.seed = 9;
    spec.frame_count = 3;
    spec.width = 64;
    spec.height = 64;
    Sequence s1 = synth_sequence(spec);
    Sequence s2 = synth_sequence(spec);
    for (int f = 0; f < 3; ++f)
        require(s1.frames[f].data == s2.frames[f].data, "synthetic frames diverged");
    return "seeded streams and synthetic sequences repeat bit-identically";
}

}  // namespace

std::vector<CheckResult> run_selfcheck() {
    Suite suite;
    suite.run("tensor-op-gradients", check_tensor_op_gradients);
    suite.run("softmax-rows", check_softmax_rows);
    suite.run("attention-invariants", check_attention_invariants);
    suite.run("equation-fidelity", check_equation_fidelity);
    suite.run("residual-identity", check_residual_identity);
    suite.run("loss-oracles", check_loss_oracles);
    suite.run("paper-constants", check_paper_constants);
    suite.run("window-penalty", check_window_penalty);
    suite.run("metric-oracles", check_metric_oracles);
    suite.run("pipeline-gradient", check_pipeline_gradient);
    suite.run("determinism", check_determinism);
    return suite.results;
}

}  // namespace transt
