#include "transt/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace transt {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "pass" : "FAIL") << ", max relative error " << max_rel_err
       << " over " << params.size() << " parameter(s)";
    for (const auto& p : params) {
        if (!p.pass)
            os << "; " << p.name << "[" << p.worst_coord << "] analytic " << p.analytic_at_worst
               << " vs numeric " << p.numeric_at_worst;
    }
    return os.str();
}

double evaluate_scalar(const ScalarFn& f, const std::vector<NamedTensor>& params) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p.value, false));
    Tensor out = f(tape, leaves);
    if (out.size() != 1)
        throw ContractError(msg("gradient check: objective returned shape ",
                                shape_str(out.shape), ", expected a scalar"));
    return out.data[0];
}

std::vector<Tensor> tape_gradients(const ScalarFn& f, const std::vector<NamedTensor>& params) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p.value, true));
    Tensor loss = f(tape, leaves);
    Tape::GradMap grads = tape.backward(loss);
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Tensor& leaf : leaves) {
        auto it = grads.find(leaf.node);
        out.push_back(it != grads.end() ? it->second : Tensor::zeros(leaf.shape));
    }
    return out;
}

GradCheckReport finite_diff_compare(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                    const std::vector<Tensor>& analytic, double eps, double tol) {
    if (eps <= 0.0) throw ContractError(msg("gradient check: eps must be positive, got ", eps));
    if (analytic.size() != params.size())
        throw ContractError("gradient check: analytic gradient count does not match parameters");

    GradCheckReport report;
    std::vector<NamedTensor> probe = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        GradCheckEntry entry;
        entry.name = params[p].name;
        const std::size_t count = probe[p].value.data.size();
        for (std::size_t i = 0; i < count; ++i) {
            const double saved = probe[p].value.data[i];
            probe[p].value.data[i] = saved + eps;
            const double f_plus = evaluate_scalar(f, probe);
            probe[p].value.data[i] = saved - eps;
            const double f_minus = evaluate_scalar(f, probe);
            probe[p].value.data[i] = saved;

            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = analytic[p].data[i];
            const double rel = std::fabs(a - numeric) /
                               std::max({1.0, std::fabs(a), std::fabs(numeric)});
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_coord = static_cast<int>(i);
                entry.analytic_at_worst = a;
                entry.numeric_at_worst = numeric;
            }
        }
        entry.pass = entry.max_rel_err <= tol;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.pass = report.pass && entry.pass;
        report.params.push_back(std::move(entry));
    }
    return report;
}

GradCheckReport finite_diff_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                  double eps, double tol) {
    return finite_diff_compare(f, params, tape_gradients(f, params), eps, tol);
}

}  // namespace transt
