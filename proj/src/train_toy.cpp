#include "transt/train_toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <unordered_map>

namespace transt {

void adamw_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long step, double lr,
                  const OptimConfig& cfg) {
    if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v))
        throw ShapeError(msg("adamw_update: shape mismatch, param ", shape_str(param.shape),
                             " grad ", shape_str(grad.shape)));
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
        v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m.data[i] / bc1;
        const double v_hat = v.data[i] / bc2;
        param.data[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) +
                               cfg.weight_decay * param.data[i]);
    }
}

namespace {

Tensor brightness_jitter(Tensor patch, double factor) {
    for (double& v : patch.data) v = std::clamp(v * factor, 0.0, 1.0);
    return patch;
}

bool strictly_inside_unit(const BBox& b) {
    return b.x0() > 0.0 && b.y0() > 0.0 && b.x1() < 1.0 && b.y1() < 1.0;
}

}  // namespace

TrainPair make_training_pair(const Sequence& seq, int template_frame, int search_frame, Rng& rng,
                             const TrackerConfig& cfg, const SamplerConfig& sampler) {
    const int frames = static_cast<int>(seq.frames.size());
    if (template_frame < 0 || template_frame >= frames || search_frame < 0 ||
        search_frame >= frames)
        throw ContractError(msg("make_training_pair: frames ", template_frame, "/", search_frame,
                                " out of range for a ", frames, "-frame sequence"));
    const BBox& gt_t = seq.gt[template_frame];
    const BBox& gt_s = seq.gt[search_frame];

    TrainPair pair;
    const double template_side = square_crop_side(cfg.template_factor, gt_t);
    Tensor template_patch =
        crop_patch(seq.frames[template_frame], gt_t.cx, gt_t.cy, template_side, cfg.template_size);

    const double base_side = square_crop_side(cfg.search_factor, gt_s);
    const double log_scale = std::log1p(sampler.scale_jitter);
    CropWindow window{gt_s.cx, gt_s.cy, base_side};
    bool placed = false;
    for (int attempt = 0; attempt < std::max(1, sampler.max_retries); ++attempt) {
        window.side = base_side * std::exp(rng.uniform(-log_scale, log_scale));
        const double jx = rng.uniform(-sampler.center_jitter_frac, sampler.center_jitter_frac);
        const double jy = rng.uniform(-sampler.center_jitter_frac, sampler.center_jitter_frac);
        window.cx = gt_s.cx + jx * window.side;
        window.cy = gt_s.cy + jy * window.side;
        pair.gt = box_to_crop(gt_s, window);
        if (strictly_inside_unit(pair.gt)) {
            placed = true;
            break;
        }
    }
    if (!placed)
        throw InputError(msg("make_training_pair: ground truth does not fit the search crop "
                             "after ", sampler.max_retries, " jitter draws"));

    pair.template_patch =
        brightness_jitter(std::move(template_patch),
                          rng.uniform(sampler.brightness_lo, sampler.brightness_hi));
    pair.search_patch = brightness_jitter(
        crop_patch(seq.frames[search_frame], window.cx, window.cy, window.side, cfg.search_size),
        rng.uniform(sampler.brightness_lo, sampler.brightness_hi));
    return pair;
}

TrainPair sample_pair(const Sequence& seq, Rng& rng, const TrackerConfig& cfg,
                      const SamplerConfig& sampler) {
    const int frames = static_cast<int>(seq.frames.size());
    if (frames < 2)
        throw ContractError(msg("sample_pair: sequence needs >= 2 frames, has ", frames));
    const int i = static_cast<int>(rng.next_below(frames - 1));
    const int j = i + 1 + static_cast<int>(rng.next_below(frames - 1 - i));
    return make_training_pair(seq, i, j, rng, cfg, sampler);
}

namespace {

void require_finite(const Tensor& t, const char* what, std::size_t pair_index) {
    if (!all_finite(t))
        throw Error(msg("train_step: first non-finite tensor: ", what, " (pair ", pair_index,
                        ")"));
}

double group_lr(const std::string& name, long step, const OptimConfig& cfg) {
    double lr = name.rfind("backbone.", 0) == 0 ? cfg.lr_backbone : cfg.lr_other;
    if (cfg.lr_decay_every > 0)
        lr *= std::pow(cfg.lr_decay_factor,
                       static_cast<double>((step - 1) / cfg.lr_decay_every));
    return lr;
}

}  // namespace

double train_step(ModelParams& params, OptimState& optim, const std::vector<TrainPair>& batch,
                  const TrackerConfig& cfg, const OptimConfig& optim_cfg,
                  const LossConfig& loss_cfg) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    const int grid = cfg.search_grid();
    PosEncoding2D pe_z = sine_pos_encoding(cfg.model.d, cfg.template_grid(), cfg.template_grid());
    PosEncoding2D pe_x = sine_pos_encoding(cfg.model.d, grid, grid);

    Tape tape;
    WatchedParams watched = watch(tape, params);
    Tensor total;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const TrainPair& pair = batch[k];
        Tensor fz = reduce_and_flatten(tape, watched.params.backbone,
                                       extract(tape, watched.params.backbone,
                                               pair.template_patch));
        require_finite(fz, "template features", k);
        Tensor fx = reduce_and_flatten(tape, watched.params.backbone,
                                       extract(tape, watched.params.backbone,
                                               pair.search_patch));
        require_finite(fx, "search features", k);
        Tensor fused = fusion_forward(tape, watched.params.fusion, fz, pe_z, fx, pe_x).fused;
        require_finite(fused, "fused features", k);
        Prediction pred = predict(tape, watched.params.head, fused);
        require_finite(pred.scores, "scores", k);
        require_finite(pred.boxes, "boxes", k);
        SampleAssignment assignment = assign_samples(pair.gt, grid, grid);
        Tensor loss = total_loss(tape, pred, assignment, pair.gt, loss_cfg);
        require_finite(loss, "pair loss", k);
        total = (k == 0) ? loss : tape.add(total, loss);
    }
    total = tape.mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
    const double loss_value = total.item();

    Tape::GradMap grads = tape.backward(total);
    std::vector<Tensor*> targets;
    params.for_each([&](const std::string&, Tensor& t) { targets.push_back(&t); });
    optim.step += 1;
    for (std::size_t i = 0; i < watched.nodes.size(); ++i) {
        const std::string& name = watched.nodes[i].first;
        const Tensor& grad = grads.at(watched.nodes[i].second);
        Tensor& m = optim.m.try_emplace(name, Tensor::zeros(grad.shape)).first->second;
        Tensor& v = optim.v.try_emplace(name, Tensor::zeros(grad.shape)).first->second;
        adamw_update(*targets[i], grad, m, v, optim.step, group_lr(name, optim.step, optim_cfg),
                     optim_cfg);
    }
    return loss_value;
}

// ---------------------------------------------------------------------------
// weight file

namespace {

constexpr char kMagic[4] = {'T', 'R', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw IoError(msg(path, ": truncated file"));
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

float get_f32(std::istream& in, const std::string& path) {
    const std::uint32_t v = get_u32(in, path);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace

void save_model(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(msg("save_model: cannot open ", path));
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    std::uint32_t count = 0;
    params.for_each_const([&](const std::string&, const Tensor&) { ++count; });
    put_u32(out, count);
    params.for_each_const([&](const std::string& name, const Tensor& t) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int dim : t.shape) put_u32(out, static_cast<std::uint32_t>(dim));
        for (double v : t.data) put_f32(out, static_cast<float>(v));
    });
    if (!out) throw IoError(msg("save_model: short write to ", path));
}

ModelParams load_model(const std::string& path, const ModelConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(msg("load_model: cannot open ", path));
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(msg("load_model: ", path, ": bad magic, not a model file"));
    const std::uint32_t version = get_u32(in, path);
    if (version != kVersion)
        throw IoError(msg("load_model: ", path, ": unsupported version ", version));
    const std::uint32_t count = get_u32(in, path);

    Rng rng(0);
    ModelParams params = ModelParams::init(rng, cfg);
    std::unordered_map<std::string, Tensor*> by_name;
    params.for_each([&](const std::string& name, Tensor& t) { by_name[name] = &t; });

    std::set<std::string> filled;
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint32_t name_len = get_u32(in, path);
        if (name_len > 4096) throw IoError(msg("load_model: ", path, ": corrupt record"));
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw IoError(msg("load_model: ", path, ": truncated file"));
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw IoError(msg("load_model: ", path, ": unknown parameter '", name, "'"));
        const std::uint32_t rank = get_u32(in, path);
        std::vector<int> dims(rank);
        for (std::uint32_t k = 0; k < rank; ++k)
            dims[k] = static_cast<int>(get_u32(in, path));
        if (dims != it->second->shape)
            throw IoError(msg("load_model: ", path, ": parameter '", name, "' has shape ",
                              shape_str(dims), ", expected ", shape_str(it->second->shape)));
        for (double& v : it->second->data) v = static_cast<double>(get_f32(in, path));
        filled.insert(name);
    }
    for (const auto& [name, tensor] : by_name) {
        (void)tensor;
        if (!filled.count(name))
            throw IoError(msg("load_model: ", path, ": parameter '", name, "' missing from file"));
    }
    return params;
}

}  // namespace transt
