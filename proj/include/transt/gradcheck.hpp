#pragma once

#include <functional>
#include <string>
#include <vector>

#include "transt/tensor.hpp"

namespace transt {

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Scalar objective built through a tape. The leaves argument holds the
// parameters in the same order they were supplied, already registered on the
// tape (or plain constants during finite-difference evaluation).
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int worst_coord = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> params;
    double max_rel_err = 0.0;
    bool pass = true;
    std::string summary() const;
};

// Evaluates f forward-only at the given parameter values.
double evaluate_scalar(const ScalarFn& f, const std::vector<NamedTensor>& params);

// Reverse-mode gradients of f, one tensor per parameter.
std::vector<Tensor> tape_gradients(const ScalarFn& f, const std::vector<NamedTensor>& params);

// Central differences (f(p+eps) - f(p-eps)) / (2 eps) per coordinate against
// the supplied analytic gradients. Relative error uses
// |a - n| / max(1, |a|, |n|); pass iff every coordinate is within tol.
GradCheckReport finite_diff_compare(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                    const std::vector<Tensor>& analytic, double eps, double tol);

// finite_diff_compare against this tape's own backward().
GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                  double eps, double tol);

}  // namespace transt
