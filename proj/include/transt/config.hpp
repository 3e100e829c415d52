#pragma once

#include <string>

#include "transt/train_toy.hpp"

namespace transt {

// Everything the CLI needs, JSON-serializable. Absent keys take the
// defaults below; unknown keys are rejected at parse time.
struct Config {
    TrackerConfig tracker;  // crop geometry + model dimensions
    LossConfig loss;
    OptimConfig optim;
    SamplerConfig sampler;

    void validate() const;

    static Config from_json_text(const std::string& text, const std::string& origin = "<config>");
    static Config from_json_file(const std::string& path);
    std::string to_json_text() const;
};

}  // namespace transt
