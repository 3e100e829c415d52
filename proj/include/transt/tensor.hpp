#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "transt/error.hpp"
#include "transt/rng.hpp"

namespace transt {

// Dense row-major tensor of doubles. Element (i,j) of a rank-2 tensor lives
// at data[i*cols + j]. Tensors are plain values: ops never mutate their
// inputs, so a tensor may be shared read-only across threads.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    int node = -1;  // id on the tape that produced it, -1 = off-tape constant

    Tensor() = default;
    Tensor(std::vector<int> shape_in, std::vector<double> data_in);

    static Tensor zeros(const std::vector<int>& shape);
    static Tensor full(const std::vector<int>& shape, double value);
    static Tensor scalar(double value);                       // shape {1}
    static Tensor matrix(int rows, int cols, std::vector<double> values);
    static Tensor identity(int n);
    static Tensor uniform(Rng& rng, const std::vector<int>& shape, double lo, double hi);
    // Xavier/Glorot uniform for a rows x cols weight matrix.
    static Tensor xavier(Rng& rng, int rows, int cols);

    std::int64_t size() const;
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const;  // rank-2 only
    int cols() const;

    double& at(int i, int j);
    double at(int i, int j) const;
    double item() const;  // single-element tensors

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::string shape_str(const std::vector<int>& shape);
bool all_finite(const Tensor& t);

// Recording tape for reverse-mode differentiation. Ops executed through a
// tape append nodes in execution order, so the node list is topologically
// sorted by construction and backward() is a single reverse sweep.
//
// A gradient is recorded only when at least one input requires grad; pure
// inference through a tape with no watched leaves records nothing.
// A tape is confined to one thread, and tensors fed to its ops must be
// either off-tape constants or values produced by this same tape.
class Tape {
public:
    using GradMap = std::unordered_map<int, Tensor>;

    // Registers a tensor as a differentiable input (parameter) of the graph.
    Tensor leaf(const Tensor& value, bool requires_grad = true);

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);
    // Row-wise softmax with max subtraction; rows sum to 1 for finite input.
    Tensor softmax_rows(const Tensor& x);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
    Tensor div(const Tensor& a, const Tensor& b);
    Tensor add_scalar(const Tensor& a, double s);
    Tensor mul_scalar(const Tensor& a, double s);
    Tensor maximum(const Tensor& a, const Tensor& b);
    Tensor minimum(const Tensor& a, const Tensor& b);

    Tensor relu(const Tensor& a);
    Tensor sigmoid(const Tensor& a);
    Tensor log(const Tensor& a);
    Tensor abs(const Tensor& a);
    Tensor clamp(const Tensor& a, double lo, double hi);

    Tensor sum(const Tensor& a);   // -> shape {1}
    Tensor mean(const Tensor& a);  // -> shape {1}

    // out[i][j] = a[i][j] + bias[j]; the one sanctioned broadcast, explicit.
    Tensor add_row(const Tensor& a, const Tensor& bias);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    Tensor slice_cols(const Tensor& a, int start, int count);
    Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);

    // 2-D convolution over a CxHxW tensor with same-padding; weight is
    // [C_out x C_in x kH x kW] (odd kernel), bias one value per out channel.
    Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
    // CxHxW -> (H*W)xC with row index h*W + w (row-major over the grid).
    Tensor flatten_spatial(const Tensor& x);

    // Per-row standardization (mean 0, variance 1), no affine part.
    Tensor layer_norm_rows(const Tensor& x, double eps = 1e-5);

    // Reverse sweep from a scalar loss. Returns d(loss)/d(leaf) for every
    // requires_grad leaf (zeros when the leaf does not influence the loss).
    // Fan-out contributions are summed. Non-scalar loss -> ContractError.
    GradMap backward(const Tensor& loss) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<int> inputs;  // node ids; -1 marks a constant input
        // Maps upstream gradient to per-input gradients (empty tensor for
        // inputs that need none). Null for leaves.
        std::function<std::vector<Tensor>(const Tensor&)> grad;
        std::vector<int> leaf_shape;  // set for leaves only
        bool is_leaf = false;
    };

    std::vector<Node> nodes_;
    std::vector<int> leaves_;

    Tensor record(Tensor out, std::vector<int> inputs,
                  std::function<std::vector<Tensor>(const Tensor&)> grad_fn);
    static bool wants_grad(const Tensor& t) { return t.requires_grad && t.node >= 0; }
};

}  // namespace transt
