#pragma once

#include <map>
#include <string>
#include <vector>

#include "transt/data_eval.hpp"
#include "transt/tracker.hpp"

namespace transt {

// Decoupled-weight-decay Adam with two learning-rate groups: parameter
// names under "backbone." use lr_backbone, everything else lr_other.
struct OptimConfig {
    double lr_backbone = 1e-5;
    double lr_other = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 4;
    int lr_decay_every = 0;  // steps between x0.1 decays; 0 disables
    double lr_decay_factor = 0.1;
};

struct OptimState {
    std::map<std::string, Tensor> m;  // first moments, keyed by parameter name
    std::map<std::string, Tensor> v;  // second moments
    long step = 0;                    // completed update count
};

// One in-place moment update for a single parameter. step is 1-based.
void adamw_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long step, double lr,
                  const OptimConfig& cfg);

struct SamplerConfig {
    double center_jitter_frac = 0.12;  // of the search crop side, per axis
    // Multiplicative jitter of the search crop side, log-uniform in
    // [1/(1+s), 1+s]. Without it the normalized target size is a constant of
    // the crop geometry, the regression echoes that prior instead of reading
    // the image, and scale errors compound while tracking.
    double scale_jitter = 0.25;
    double brightness_lo = 0.85;
    double brightness_hi = 1.15;
    int max_retries = 20;
};

struct TrainPair {
    Tensor template_patch;  // 3 x template_size x template_size
    Tensor search_patch;    // 3 x search_size x search_size
    BBox gt;                // normalized to the search crop
};

// Template cropped around the target in template_frame, search cropped
// around a jittered center in search_frame; both brightness-jittered. The
// ground truth is mapped into normalized search coordinates and must land
// strictly inside (0,1)^4 (center jitter is redrawn up to max_retries).
TrainPair make_training_pair(const Sequence& seq, int template_frame, int search_frame, Rng& rng,
                             const TrackerConfig& cfg, const SamplerConfig& sampler = {});

// Random ordered frame pair i < j from one sequence.
TrainPair sample_pair(const Sequence& seq, Rng& rng, const TrackerConfig& cfg,
                      const SamplerConfig& sampler = {});

// One optimizer step on the batch-mean total loss. Returns the loss value.
// A non-finite value anywhere in the forward pass aborts with an error
// naming the first non-finite tensor.
double train_step(ModelParams& params, OptimState& optim, const std::vector<TrainPair>& batch,
                  const TrackerConfig& cfg, const OptimConfig& optim_cfg,
                  const LossConfig& loss_cfg = {});

// Weight file: magic "TRTW", version u32, parameter count u32, then per
// parameter: name length u32, name bytes, rank u32, dims u32 each, values
// as little-endian 32-bit floats. All integers little-endian.
void save_model(const std::string& path, const ModelParams& params);
ModelParams load_model(const std::string& path, const ModelConfig& cfg);

}  // namespace transt
