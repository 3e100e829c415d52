#include "transt/config.hpp"

#include <fstream>

#include <json.hpp>

namespace transt {

namespace {

using nlohmann::json;

// Pulls a field of the requested type, leaving the default in place when the
// key is absent. Consumed keys are erased so leftovers can be rejected.
template <class T>
void take(json& section, const char* key, T& out, const std::string& origin) {
    auto it = section.find(key);
    if (it == section.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(msg(origin, ": key '", key, "' has the wrong type"));
    }
    section.erase(it);
}

void reject_leftovers(const json& section, const char* name, const std::string& origin) {
    if (!section.empty())
        throw ConfigError(msg(origin, ": unknown key '", section.begin().key(), "' in section '",
                              name, "'"));
}

json take_section(json& root, const char* name, const std::string& origin) {
    auto it = root.find(name);
    if (it == root.end()) return json::object();
    if (!it->is_object())
        throw ConfigError(msg(origin, ": section '", name, "' must be an object"));
    json section = *it;
    root.erase(it);
    return section;
}

}  // namespace

void Config::validate() const {
    tracker.validate();
    if (loss.lambda_giou < 0.0 || loss.lambda_l1 < 0.0)
        throw ConfigError("config: loss weights must be non-negative");
    if (loss.negative_weight <= 0.0 || loss.negative_weight > 1.0)
        throw ConfigError(msg("config: negative_down_weight must be >= 1, got 1/",
                              loss.negative_weight));
    if (optim.batch_size < 1)
        throw ConfigError(msg("config: batch_size must be >= 1, got ", optim.batch_size));
    if (optim.beta1 < 0.0 || optim.beta1 >= 1.0 || optim.beta2 < 0.0 || optim.beta2 >= 1.0)
        throw ConfigError("config: betas must lie in [0,1)");
    if (optim.eps <= 0.0) throw ConfigError("config: optimizer eps must be positive");
    if (sampler.brightness_lo <= 0.0 || sampler.brightness_hi < sampler.brightness_lo)
        throw ConfigError("config: brightness jitter range is inverted");
    if (sampler.center_jitter_frac < 0.0 || sampler.scale_jitter < 0.0)
        throw ConfigError("config: jitter magnitudes must be non-negative");
    if (sampler.max_retries < 1) throw ConfigError("config: max_retries must be >= 1");
}

Config Config::from_json_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(msg(origin, ": not valid JSON: ", e.what()));
    }
    if (!root.is_object()) throw ConfigError(msg(origin, ": top level must be an object"));

    Config cfg;
    json model = take_section(root, "model", origin);
    take(model, "d", cfg.tracker.model.d, origin);
    take(model, "n_heads", cfg.tracker.model.n_heads, origin);
    take(model, "layers", cfg.tracker.model.layers, origin);
    take(model, "channels", cfg.tracker.model.channels, origin);
    take(model, "d_ff", cfg.tracker.model.d_ff, origin);
    take(model, "post_norm", cfg.tracker.model.post_norm, origin);
    reject_leftovers(model, "model", origin);

    json tracker = take_section(root, "tracker", origin);
    take(tracker, "template_factor", cfg.tracker.template_factor, origin);
    take(tracker, "search_factor", cfg.tracker.search_factor, origin);
    take(tracker, "template_size", cfg.tracker.template_size, origin);
    take(tracker, "search_size", cfg.tracker.search_size, origin);
    take(tracker, "window_weight", cfg.tracker.window_weight, origin);
    reject_leftovers(tracker, "tracker", origin);

    json loss = take_section(root, "loss", origin);
    double negative_down_weight = 1.0 / cfg.loss.negative_weight;
    take(loss, "lambda_giou", cfg.loss.lambda_giou, origin);
    take(loss, "lambda_l1", cfg.loss.lambda_l1, origin);
    take(loss, "negative_down_weight", negative_down_weight, origin);
    take(loss, "average_positives", cfg.loss.average_positives, origin);
    if (negative_down_weight <= 0.0)
        throw ConfigError(msg(origin, ": negative_down_weight must be positive"));
    cfg.loss.negative_weight = 1.0 / negative_down_weight;
    reject_leftovers(loss, "loss", origin);

    json optim = take_section(root, "optim", origin);
    take(optim, "lr_backbone", cfg.optim.lr_backbone, origin);
    take(optim, "lr_other", cfg.optim.lr_other, origin);
    take(optim, "weight_decay", cfg.optim.weight_decay, origin);
    take(optim, "beta1", cfg.optim.beta1, origin);
    take(optim, "beta2", cfg.optim.beta2, origin);
    take(optim, "eps", cfg.optim.eps, origin);
    take(optim, "batch_size", cfg.optim.batch_size, origin);
    take(optim, "lr_decay_every", cfg.optim.lr_decay_every, origin);
    take(optim, "lr_decay_factor", cfg.optim.lr_decay_factor, origin);
    reject_leftovers(optim, "optim", origin);

    json sampler = take_section(root, "sampler", origin);
    take(sampler, "center_jitter", cfg.sampler.center_jitter_frac, origin);
    take(sampler, "scale_jitter", cfg.sampler.scale_jitter, origin);
    take(sampler, "brightness_lo", cfg.sampler.brightness_lo, origin);
    take(sampler, "brightness_hi", cfg.sampler.brightness_hi, origin);
    take(sampler, "max_retries", cfg.sampler.max_retries, origin);
    reject_leftovers(sampler, "sampler", origin);

    if (!root.empty())
        throw ConfigError(msg(origin, ": unknown top-level key '", root.begin().key(), "'"));
    cfg.validate();
    return cfg;
}

Config Config::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(msg("config: cannot open ", path));
    std::string text(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    return from_json_text(text, path);
}

std::string Config::to_json_text() const {
    nlohmann::ordered_json j;
    j["model"] = {{"d", tracker.model.d},
                  {"n_heads", tracker.model.n_heads},
                  {"layers", tracker.model.layers},
                  {"channels", tracker.model.channels},
                  {"d_ff", tracker.model.d_ff},
                  {"post_norm", tracker.model.post_norm}};
    j["tracker"] = {{"template_factor", tracker.template_factor},
                    {"search_factor", tracker.search_factor},
                    {"template_size", tracker.template_size},
                    {"search_size", tracker.search_size},
                    {"window_weight", tracker.window_weight}};
    j["loss"] = {{"lambda_giou", loss.lambda_giou},
                 {"lambda_l1", loss.lambda_l1},
                 {"negative_down_weight", 1.0 / loss.negative_weight},
                 {"average_positives", loss.average_positives}};
    j["optim"] = {{"lr_backbone", optim.lr_backbone},
                  {"lr_other", optim.lr_other},
                  {"weight_decay", optim.weight_decay},
                  {"beta1", optim.beta1},
                  {"beta2", optim.beta2},
                  {"eps", optim.eps},
                  {"batch_size", optim.batch_size},
                  {"lr_decay_every", optim.lr_decay_every},
                  {"lr_decay_factor", optim.lr_decay_factor}};
    j["sampler"] = {{"center_jitter", sampler.center_jitter_frac},
                    {"scale_jitter", sampler.scale_jitter},
                    {"brightness_lo", sampler.brightness_lo},
                    {"brightness_hi", sampler.brightness_hi},
                    {"max_retries", sampler.max_retries}};
    return j.dump(2) + "\n";
}

}  // namespace transt
