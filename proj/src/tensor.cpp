#include "transt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace transt {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

// c (m x n) += a (m x k) * b (k x n); c must be zeroed by the caller.
// ikj order keeps the inner loop contiguous in both b and c.
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int t = 0; t < k; ++t) {
            const double av = arow[t];
            const double* brow = b + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (m x k) += up (m x n) * b^T (n x k), i.e. c[i][t] = sum_j up[i][j]*b[t][j]
void matmul_bt_acc(const double* up, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* urow = up + static_cast<std::size_t>(i) * n;
        double* crow = c + static_cast<std::size_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const double* brow = b + static_cast<std::size_t>(t) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += urow[j] * brow[j];
            crow[t] += acc;
        }
    }
}

// c (k x n) += a^T (k x m) * up (m x n)
void matmul_at_acc(const double* a, const double* up, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* urow = up + static_cast<std::size_t>(i) * n;
        for (int t = 0; t < k; ++t) {
            const double av = arow[t];
            double* crow = c + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * urow[j];
        }
    }
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw ShapeError(msg(op, ": expected a rank-2 tensor, got shape ", shape_str(t.shape)));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(msg(op, ": shape mismatch ", shape_str(a.shape), " vs ", shape_str(b.shape)));
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (shape.empty()) throw ShapeError("tensor: empty shape");
    for (int d : shape)
        if (d <= 0) throw ShapeError(msg("tensor: non-positive dimension in ", shape_str(shape)));
    if (shape_product(shape) != static_cast<std::int64_t>(data.size()))
        throw ShapeError(msg("tensor: shape ", shape_str(shape), " does not match ",
                             data.size(), " values"));
}

Tensor Tensor::zeros(const std::vector<int>& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const std::vector<int>& shape, double value) {
    Tensor t;
    t.shape = shape;
    if (t.shape.empty()) throw ShapeError("tensor: empty shape");
    for (int d : t.shape)
        if (d <= 0) throw ShapeError(msg("tensor: non-positive dimension in ", shape_str(shape)));
    t.data.assign(static_cast<std::size_t>(shape_product(shape)), value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i) * n + i] = 1.0;
    return t;
}

Tensor Tensor::uniform(Rng& rng, const std::vector<int>& shape, double lo, double hi) {
    Tensor t = zeros(shape);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::xavier(Rng& rng, int rows, int cols) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    return uniform(rng, {rows, cols}, -limit, limit);
}

std::int64_t Tensor::size() const { return static_cast<std::int64_t>(data.size()); }

int Tensor::rows() const {
    require_rank2(*this, "rows");
    return shape[0];
}

int Tensor::cols() const {
    require_rank2(*this, "cols");
    return shape[1];
}

double& Tensor::at(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
}

double Tensor::at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
}

double Tensor::item() const {
    if (size() != 1)
        throw ContractError(msg("item: tensor of shape ", shape_str(shape), " is not a scalar"));
    return data[0];
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::leaf(const Tensor& value, bool requires_grad) {
    Tensor out = value;
    out.requires_grad = requires_grad;
    if (requires_grad) {
        Node n;
        n.is_leaf = true;
        n.leaf_shape = value.shape;
        nodes_.push_back(std::move(n));
        out.node = static_cast<int>(nodes_.size()) - 1;
        leaves_.push_back(out.node);
    } else {
        out.node = -1;
    }
    return out;
}

Tensor Tape::record(Tensor out, std::vector<int> inputs,
                    std::function<std::vector<Tensor>(const Tensor&)> grad_fn) {
    Node n;
    n.inputs = std::move(inputs);
    n.grad = std::move(grad_fn);
    nodes_.push_back(std::move(n));
    out.node = static_cast<int>(nodes_.size()) - 1;
    out.requires_grad = true;
    return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.shape[1] != b.shape[0])
        throw ShapeError(msg("matmul: inner dimensions disagree, ", shape_str(a.shape),
                             " vs ", shape_str(b.shape)));
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = Tensor::zeros({m, n});
    matmul_acc(a.data.data(), b.data.data(), out.data.data(), m, k, n);
    if (!wants_grad(a) && !wants_grad(b)) return out;
    return record(std::move(out), {a.node, b.node},
                  [a, b, m, k, n](const Tensor& up) {
                      std::vector<Tensor> grads(2);
                      if (a.node >= 0 && a.requires_grad) {
                          grads[0] = Tensor::zeros({m, k});
                          matmul_bt_acc(up.data.data(), b.data.data(), grads[0].data.data(), m, k, n);
                      }
                      if (b.node >= 0 && b.requires_grad) {
                          grads[1] = Tensor::zeros({k, n});
                          matmul_at_acc(a.data.data(), up.data.data(), grads[1].data.data(), m, k, n);
                      }
                      return grads;
                  });
}

Tensor Tape::transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const int m = a.shape[0], n = a.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [m, n](const Tensor& up) {
        Tensor g = Tensor::zeros({m, n});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g.at(i, j) = up.at(j, i);
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::softmax_rows(const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const int m = x.shape[0], n = x.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= denom;
    }
    if (!wants_grad(x)) return out;
    Tensor y = out;  // saved activation
    return record(std::move(out), {x.node}, [y, m, n](const Tensor& up) {
        Tensor g = Tensor::zeros({m, n});
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += up.at(i, j) * y.at(i, j);
            for (int j = 0; j < n; ++j) g.at(i, j) = y.at(i, j) * (up.at(i, j) - dot);
        }
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    if (!wants_grad(a) && !wants_grad(b)) return out;
    return record(std::move(out), {a.node, b.node}, [](const Tensor& up) {
        return std::vector<Tensor>{up, up};
    });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    if (!wants_grad(a) && !wants_grad(b)) return out;
    return record(std::move(out), {a.node, b.node}, [](const Tensor& up) {
        Tensor neg = up;
        for (double& v : neg.data) v = -v;
        return std::vector<Tensor>{up, std::move(neg)};
    });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    if (!wants_grad(a) && !wants_grad(b)) return out;
    return record(std::move(out), {a.node, b.node}, [a, b](const Tensor& up) {
        std::vector<Tensor> grads(2);
        if (a.node >= 0 && a.requires_grad) {
            grads[0] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i) grads[0].data[i] *= b.data[i];
        }
        if (b.node >= 0 && b.requires_grad) {
            grads[1] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i) grads[1].data[i] *= a.data[i];
        }
        return grads;
    });
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.data[i];
    if (!wants_grad(a) && !wants_grad(b)) return out;
    return record(std::move(out), {a.node, b.node}, [a, b](const Tensor& up) {
        std::vector<Tensor> grads(2);
        if (a.node >= 0 && a.requires_grad) {
            grads[0] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i) grads[0].data[i] /= b.data[i];
        }
        if (b.node >= 0 && b.requires_grad) {
            grads[1] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i)
                grads[1].data[i] *= -a.data[i] / (b.data[i] * b.data[i]);
        }
        return grads;
    });
}

Tensor Tape::add_scalar(const Tensor& a, double s) {
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v += s;
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [](const Tensor& up) {
        return std::vector<Tensor>{up};
    });
}

Tensor Tape::mul_scalar(const Tensor& a, double s) {
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v *= s;
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [s](const Tensor& up) {
        Tensor g = up;
        for (double& v : g.data) v *= s;
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::maximum(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "maximum");
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(a.data[i], b.data[i]);
    if (!wants_grad(a) && !wants_grad(b)) return out;
    // Ties route the gradient to a.
    return record(std::move(out), {a.node, b.node}, [a, b](const Tensor& up) {
        std::vector<Tensor> grads(2);
        if (a.node >= 0 && a.requires_grad) {
            grads[0] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i)
                if (a.data[i] < b.data[i]) grads[0].data[i] = 0.0;
        }
        if (b.node >= 0 && b.requires_grad) {
            grads[1] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i)
                if (a.data[i] >= b.data[i]) grads[1].data[i] = 0.0;
        }
        return grads;
    });
}

Tensor Tape::minimum(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "minimum");
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::min(a.data[i], b.data[i]);
    if (!wants_grad(a) && !wants_grad(b)) return out;
    return record(std::move(out), {a.node, b.node}, [a, b](const Tensor& up) {
        std::vector<Tensor> grads(2);
        if (a.node >= 0 && a.requires_grad) {
            grads[0] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i)
                if (a.data[i] > b.data[i]) grads[0].data[i] = 0.0;
        }
        if (b.node >= 0 && b.requires_grad) {
            grads[1] = up;
            for (std::size_t i = 0; i < up.data.size(); ++i)
                if (a.data[i] <= b.data[i]) grads[1].data[i] = 0.0;
        }
        return grads;
    });
}

Tensor Tape::relu(const Tensor& a) {
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v = std::max(0.0, v);
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [a](const Tensor& up) {
        Tensor g = up;
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (a.data[i] <= 0.0) g.data[i] = 0.0;
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::sigmoid(const Tensor& a) {
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    if (!wants_grad(a)) return out;
    Tensor y = out;
    return record(std::move(out), {a.node}, [y](const Tensor& up) {
        Tensor g = up;
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] *= y.data[i] * (1.0 - y.data[i]);
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::log(const Tensor& a) {
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v = std::log(v);
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [a](const Tensor& up) {
        Tensor g = up;
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] /= a.data[i];
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::abs(const Tensor& a) {
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v = std::fabs(v);
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [a](const Tensor& up) {
        Tensor g = up;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (a.data[i] < 0.0) g.data[i] = -g.data[i];
            else if (a.data[i] == 0.0) g.data[i] = 0.0;
        }
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ContractError(msg("clamp: lo ", lo, " > hi ", hi));
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [a, lo, hi](const Tensor& up) {
        Tensor g = up;
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (a.data[i] < lo || a.data[i] > hi) g.data[i] = 0.0;
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    Tensor out = Tensor::scalar(s);
    if (!wants_grad(a)) return out;
    std::vector<int> shape = a.shape;
    return record(std::move(out), {a.node}, [shape](const Tensor& up) {
        return std::vector<Tensor>{Tensor::full(shape, up.data[0])};
    });
}

Tensor Tape::mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = 0.0;
    for (double v : a.data) s += v;
    Tensor out = Tensor::scalar(s * inv);
    if (!wants_grad(a)) return out;
    std::vector<int> shape = a.shape;
    return record(std::move(out), {a.node}, [shape, inv](const Tensor& up) {
        return std::vector<Tensor>{Tensor::full(shape, up.data[0] * inv)};
    });
}

Tensor Tape::add_row(const Tensor& a, const Tensor& bias) {
    require_rank2(a, "add_row");
    if (bias.rank() != 1 || bias.shape[0] != a.shape[1])
        throw ShapeError(msg("add_row: bias ", shape_str(bias.shape),
                             " does not match columns of ", shape_str(a.shape)));
    const int m = a.shape[0], n = a.shape[1];
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(i) * n + j] += bias.data[j];
    if (!wants_grad(a) && !wants_grad(bias)) return out;
    const bool bias_grad = wants_grad(bias);
    return record(std::move(out), {a.node, bias.node}, [m, n, bias_grad](const Tensor& up) {
        std::vector<Tensor> grads(2);
        grads[0] = up;
        if (bias_grad) {
            grads[1] = Tensor::zeros({n});
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    grads[1].data[j] += up.data[static_cast<std::size_t>(i) * n + j];
        }
        return grads;
    });
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const int m = parts[0].shape.empty() ? 0 : parts[0].shape[0];
    int total = 0;
    bool any_grad = false;
    std::vector<int> inputs;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.shape[0] != m)
            throw ShapeError(msg("concat_cols: row mismatch ", shape_str(parts[0].shape),
                                 " vs ", shape_str(p.shape)));
        total += p.shape[1];
        widths.push_back(p.shape[1]);
        inputs.push_back(p.node);
        any_grad = any_grad || wants_grad(p);
    }
    Tensor out = Tensor::zeros({m, total});
    int off = 0;
    for (const Tensor& p : parts) {
        const int w = p.shape[1];
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out.at(i, off + j) = p.at(i, j);
        off += w;
    }
    if (!any_grad) return out;
    return record(std::move(out), inputs, [m, widths](const Tensor& up) {
        std::vector<Tensor> grads;
        grads.reserve(widths.size());
        int off = 0;
        for (int w : widths) {
            Tensor g = Tensor::zeros({m, w});
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) g.at(i, j) = up.at(i, off + j);
            grads.push_back(std::move(g));
            off += w;
        }
        return grads;
    });
}

Tensor Tape::slice_cols(const Tensor& a, int start, int count) {
    require_rank2(a, "slice_cols");
    if (start < 0 || count <= 0 || start + count > a.shape[1])
        throw ShapeError(msg("slice_cols: [", start, ", ", start + count,
                             ") out of range for ", shape_str(a.shape)));
    const int m = a.shape[0], n = a.shape[1];
    Tensor out = Tensor::zeros({m, count});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < count; ++j) out.at(i, j) = a.at(i, start + j);
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [m, n, start, count](const Tensor& up) {
        Tensor g = Tensor::zeros({m, n});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < count; ++j) g.at(i, start + j) = up.at(i, j);
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::gather_rows(const Tensor& a, const std::vector<int>& indices) {
    require_rank2(a, "gather_rows");
    if (indices.empty()) throw ContractError("gather_rows: empty index list");
    const int m = a.shape[0], n = a.shape[1];
    for (int idx : indices)
        if (idx < 0 || idx >= m)
            throw ShapeError(msg("gather_rows: index ", idx, " out of range for ", shape_str(a.shape)));
    Tensor out = Tensor::zeros({static_cast<int>(indices.size()), n});
    for (std::size_t r = 0; r < indices.size(); ++r)
        for (int j = 0; j < n; ++j) out.at(static_cast<int>(r), j) = a.at(indices[r], j);
    if (!wants_grad(a)) return out;
    return record(std::move(out), {a.node}, [m, n, indices](const Tensor& up) {
        Tensor g = Tensor::zeros({m, n});
        for (std::size_t r = 0; r < indices.size(); ++r)
            for (int j = 0; j < n; ++j) g.at(indices[r], j) += up.at(static_cast<int>(r), j);
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    if (x.rank() != 3)
        throw ShapeError(msg("conv2d: input must be CxHxW, got ", shape_str(x.shape)));
    if (w.rank() != 4)
        throw ShapeError(msg("conv2d: weight must be rank 4, got ", shape_str(w.shape)));
    const int c_in = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const int c_out = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[1] != c_in)
        throw ShapeError(msg("conv2d: weight expects ", w.shape[1], " input channels, input has ",
                             c_in, " (", shape_str(w.shape), " vs ", shape_str(x.shape), ")"));
    if (b.rank() != 1 || b.shape[0] != c_out)
        throw ShapeError(msg("conv2d: bias ", shape_str(b.shape), " does not match ", c_out,
                             " output channels"));
    if (kh % 2 == 0 || kw % 2 == 0)
        throw ConfigError(msg("conv2d: same-padding requires odd kernels, got ", shape_str(w.shape)));
    if (stride < 1) throw ConfigError(msg("conv2d: stride must be >= 1, got ", stride));
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const int oh = (h + 2 * ph - kh) / stride + 1;
    const int ow = (wd + 2 * pw - kw) / stride + 1;

    auto xi = [&](const std::vector<double>& d, int c, int i, int j) {
        return d[(static_cast<std::size_t>(c) * h + i) * wd + j];
    };
    Tensor out = Tensor::zeros({c_out, oh, ow});
    for (int co = 0; co < c_out; ++co) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double acc = b.data[co];
                for (int ci = 0; ci < c_in; ++ci) {
                    for (int di = 0; di < kh; ++di) {
                        const int si = i * stride + di - ph;
                        if (si < 0 || si >= h) continue;
                        for (int dj = 0; dj < kw; ++dj) {
                            const int sj = j * stride + dj - pw;
                            if (sj < 0 || sj >= wd) continue;
                            acc += xi(x.data, ci, si, sj) *
                                   w.data[((static_cast<std::size_t>(co) * c_in + ci) * kh + di) * kw + dj];
                        }
                    }
                }
                out.data[(static_cast<std::size_t>(co) * oh + i) * ow + j] = acc;
            }
        }
    }
    if (!wants_grad(x) && !wants_grad(w) && !wants_grad(b)) return out;
    return record(std::move(out), {x.node, w.node, b.node},
                  [x, w, stride, c_in, c_out, h, wd, kh, kw, ph, pw, oh, ow](const Tensor& up) {
                      std::vector<Tensor> grads(3);
                      const bool gx = x.node >= 0 && x.requires_grad;
                      const bool gw = w.node >= 0 && w.requires_grad;
                      if (gx) grads[0] = Tensor::zeros(x.shape);
                      if (gw) grads[1] = Tensor::zeros(w.shape);
                      grads[2] = Tensor::zeros({c_out});
                      for (int co = 0; co < c_out; ++co) {
                          for (int i = 0; i < oh; ++i) {
                              for (int j = 0; j < ow; ++j) {
                                  const double u =
                                      up.data[(static_cast<std::size_t>(co) * oh + i) * ow + j];
                                  grads[2].data[co] += u;
                                  for (int ci = 0; ci < c_in; ++ci) {
                                      for (int di = 0; di < kh; ++di) {
                                          const int si = i * stride + di - ph;
                                          if (si < 0 || si >= h) continue;
                                          for (int dj = 0; dj < kw; ++dj) {
                                              const int sj = j * stride + dj - pw;
                                              if (sj < 0 || sj >= wd) continue;
                                              const std::size_t xoff =
                                                  (static_cast<std::size_t>(ci) * h + si) * wd + sj;
                                              const std::size_t woff =
                                                  ((static_cast<std::size_t>(co) * c_in + ci) * kh + di) * kw + dj;
                                              if (gw) grads[1].data[woff] += u * x.data[xoff];
                                              if (gx) grads[0].data[xoff] += u * w.data[woff];
                                          }
                                      }
                                  }
                              }
                          }
                      }
                      return grads;
                  });
}

Tensor Tape::flatten_spatial(const Tensor& x) {
    if (x.rank() != 3)
        throw ShapeError(msg("flatten_spatial: input must be CxHxW, got ", shape_str(x.shape)));
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor out = Tensor::zeros({h * w, c});
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                out.at(i * w + j, ci) = x.data[(static_cast<std::size_t>(ci) * h + i) * w + j];
    if (!wants_grad(x)) return out;
    return record(std::move(out), {x.node}, [c, h, w](const Tensor& up) {
        Tensor g = Tensor::zeros({c, h, w});
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    g.data[(static_cast<std::size_t>(ci) * h + i) * w + j] = up.at(i * w + j, ci);
        return std::vector<Tensor>{std::move(g)};
    });
}

Tensor Tape::layer_norm_rows(const Tensor& x, double eps) {
    require_rank2(x, "layer_norm_rows");
    const int m = x.shape[0], n = x.shape[1];
    Tensor out = Tensor::zeros({m, n});
    std::vector<double> inv_sigma(m);
    for (int i = 0; i < m; ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += x.at(i, j);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= n;
        inv_sigma[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < n; ++j) out.at(i, j) = (x.at(i, j) - mu) * inv_sigma[i];
    }
    if (!wants_grad(x)) return out;
    Tensor y = out;
    return record(std::move(out), {x.node}, [y, inv_sigma, m, n](const Tensor& up) {
        Tensor g = Tensor::zeros({m, n});
        for (int i = 0; i < m; ++i) {
            double up_mean = 0.0, upy_mean = 0.0;
            for (int j = 0; j < n; ++j) {
                up_mean += up.at(i, j);
                upy_mean += up.at(i, j) * y.at(i, j);
            }
            up_mean /= n;
            upy_mean /= n;
            for (int j = 0; j < n; ++j)
                g.at(i, j) = inv_sigma[i] * (up.at(i, j) - up_mean - y.at(i, j) * upy_mean);
        }
        return std::vector<Tensor>{std::move(g)};
    });
}

Tape::GradMap Tape::backward(const Tensor& loss) const {
    if (loss.size() != 1)
        throw ContractError(msg("backward: loss must be a scalar, got shape ",
                                shape_str(loss.shape)));
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> present(nodes_.size(), false);
    if (loss.node >= 0 && loss.requires_grad) {
        grads[loss.node] = Tensor::full(loss.shape, 1.0);
        present[loss.node] = true;
        for (int id = loss.node; id >= 0; --id) {
            if (!present[id]) continue;
            const Node& n = nodes_[id];
            if (n.is_leaf) continue;
            std::vector<Tensor> input_grads = n.grad(grads[id]);
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const int in = n.inputs[k];
                if (in < 0 || input_grads[k].data.empty()) continue;
                if (!present[in]) {
                    grads[in] = std::move(input_grads[k]);
                    present[in] = true;
                } else {
                    Tensor& acc = grads[in];
                    const Tensor& g = input_grads[k];
                    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
                }
            }
        }
    }
    GradMap out;
    for (int id : leaves_) {
        if (present[id]) {
            out[id] = std::move(grads[id]);
        } else {
            out[id] = Tensor::zeros(nodes_[id].leaf_shape);
        }
    }
    return out;
}

}  // namespace transt
