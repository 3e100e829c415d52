#pragma once

#include <string>
#include <vector>

namespace transt {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Condensed gradient and invariant suite over every module, sized to finish
// in seconds. Returns one result per suite.
std::vector<CheckResult> run_selfcheck();

}  // namespace transt
