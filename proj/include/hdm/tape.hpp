#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

#include "hdm/neural.hpp"

namespace hdm::tape {

using Matrix = Eigen::MatrixXd;

// One matrix-valued node in a dynamically built reverse-mode graph.
// `backprop` reads this node's grad and accumulates into the parents' grads.
struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;

    void ensure_grad() {
        if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    }
};

using Var = std::shared_ptr<Node>;

Var constant(Matrix value);
Var leaf(Matrix value);  // trainable / differentiable input

// Custom node with caller-supplied backward.
Var make_node(Matrix value, std::vector<Var> parents, std::function<void()> backprop);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cwise_mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

// X (N x C) plus bias row (1 x C) broadcast over rows.
Var add_row_broadcast(const Var& x, const Var& bias_row);

Var relu(const Var& x);
Var sigmoid(const Var& x);

// Column-vector scores (N*k x 1); softmax independently within each
// consecutive block of k rows.
Var block_softmax(const Var& scores, int k);

// (N*k x C) -> (N x C): channelwise max inside each block of k rows.
// Ties give the gradient to the lowest row index.
Var block_max(const Var& x, int k);

// weights (N*k x 1), payload (N*k x D) -> (N x D) per-block weighted sum.
Var block_weighted_sum(const Var& weights, const Var& payload, int k);

// (N x C) -> (N*k x C), each row repeated k times consecutively.
Var repeat_rows(const Var& x, int k);

Var hconcat(const std::vector<Var>& parts);
Var vconcat(const Var& a, const Var& b);

// Row selection with duplicate indices allowed (scatter-add backward).
Var gather_rows(const Var& x, const std::vector<int>& rows);

// Each row scaled to unit L2 norm (norm clamped to >= 1e-12).
Var rows_l2_normalize(const Var& x);

// (R x C) -> (R x 1) row-wise L2 norm, clamped to >= 1e-12.
Var row_norm(const Var& x);

Var sum_all(const Var& x);  // 1x1

// Reverse sweep from a 1x1 root; seeds the root gradient with 1.
void backward(const Var& root);

// Dense stack as tape parameters. Stored transposed relative to
// hdm::DenseStack: W is (in x out) so batched rows multiply directly.
struct DenseStackVar {
    struct Layer {
        Var W;  // in x out
        Var b;  // 1 x out
        Activation act = Activation::None;
    };
    std::vector<Layer> layers;

    // Applies the stack rowwise: x is (rows x in_dim).
    Var forward(const Var& x) const;

    void collect(std::vector<Var>& out) const;
};

}  // namespace hdm::tape
