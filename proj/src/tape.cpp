#include "hdm/tape.hpp"

#include <algorithm>
#include <unordered_set>

#include "hdm/errors.hpp"

namespace hdm::tape {

namespace {

bool any_grad(const std::vector<Var>& parents) {
    for (const Var& p : parents)
        if (p->requires_grad) return true;
    return false;
}

}  // namespace

Var constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = false;
    return n;
}

Var leaf(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

Var make_node(Matrix value, std::vector<Var> parents, std::function<void()> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows()) throw DimensionMismatch("tape::matmul shape mismatch");
    auto n = std::make_shared<Node>();
    n->value = a->value * b->value;
    n->parents = {a, b};
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, a, b]() {
            if (a->requires_grad) {
                a->ensure_grad();
                a->grad += raw->grad * b->value.transpose();
            }
            if (b->requires_grad) {
                b->ensure_grad();
                b->grad += a->value.transpose() * raw->grad;
            }
        };
    }
    return n;
}

Var add(const Var& a, const Var& b) {
    auto n = std::make_shared<Node>();
    n->value = a->value + b->value;
    n->parents = {a, b};
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, a, b]() {
            for (const Var& p : {a, b})
                if (p->requires_grad) {
                    p->ensure_grad();
                    p->grad += raw->grad;
                }
        };
    }
    return n;
}

Var sub(const Var& a, const Var& b) {
    auto n = std::make_shared<Node>();
    n->value = a->value - b->value;
    n->parents = {a, b};
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, a, b]() {
            if (a->requires_grad) {
                a->ensure_grad();
                a->grad += raw->grad;
            }
            if (b->requires_grad) {
                b->ensure_grad();
                b->grad -= raw->grad;
            }
        };
    }
    return n;
}

Var cwise_mul(const Var& a, const Var& b) {
    auto n = std::make_shared<Node>();
    n->value = a->value.cwiseProduct(b->value);
    n->parents = {a, b};
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, a, b]() {
            if (a->requires_grad) {
                a->ensure_grad();
                a->grad += raw->grad.cwiseProduct(b->value);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                b->grad += raw->grad.cwiseProduct(a->value);
            }
        };
    }
    return n;
}

Var scale(const Var& a, double s) {
    auto n = std::make_shared<Node>();
    n->value = s * a->value;
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, a, s]() {
            a->ensure_grad();
            a->grad += s * raw->grad;
        };
    }
    return n;
}

Var add_row_broadcast(const Var& x, const Var& bias_row) {
    if (bias_row->value.rows() != 1 || bias_row->value.cols() != x->value.cols())
        throw DimensionMismatch("tape::add_row_broadcast bias shape");
    auto n = std::make_shared<Node>();
    n->value = x->value.rowwise() + bias_row->value.row(0);
    n->parents = {x, bias_row};
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x, bias_row]() {
            if (x->requires_grad) {
                x->ensure_grad();
                x->grad += raw->grad;
            }
            if (bias_row->requires_grad) {
                bias_row->ensure_grad();
                bias_row->grad.row(0) += raw->grad.colwise().sum();
            }
        };
    }
    return n;
}

Var relu(const Var& x) {
    auto n = std::make_shared<Node>();
    n->value = x->value.cwiseMax(0.0);
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x]() {
            x->ensure_grad();
            x->grad += raw->grad.cwiseProduct(
                (x->value.array() > 0.0).cast<double>().matrix());
        };
    }
    return n;
}

Var sigmoid(const Var& x) {
    auto n = std::make_shared<Node>();
    n->value = x->value.unaryExpr([](double v) { return hdm::sigmoid(v); });
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x]() {
            x->ensure_grad();
            x->grad += raw->grad.cwiseProduct(
                raw->value.cwiseProduct((1.0 - raw->value.array()).matrix()));
        };
    }
    return n;
}

Var block_softmax(const Var& scores, int k) {
    if (scores->value.cols() != 1 || scores->value.rows() % k != 0)
        throw DimensionMismatch("tape::block_softmax expects (N*k) x 1");
    const int blocks = static_cast<int>(scores->value.rows()) / k;
    Matrix y(scores->value.rows(), 1);
    for (int b = 0; b < blocks; ++b) {
        Eigen::VectorXd s = scores->value.block(b * k, 0, k, 1);
        y.block(b * k, 0, k, 1) = hdm::softmax(s);
    }
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {scores};
    n->requires_grad = scores->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, scores, k, blocks]() {
            scores->ensure_grad();
            for (int b = 0; b < blocks; ++b) {
                const auto yb = raw->value.block(b * k, 0, k, 1);
                const auto gb = raw->grad.block(b * k, 0, k, 1);
                const double dot = yb.cwiseProduct(gb).sum();
                scores->grad.block(b * k, 0, k, 1) +=
                    yb.cwiseProduct(gb - Matrix::Constant(k, 1, dot));
            }
        };
    }
    return n;
}

Var block_max(const Var& x, int k) {
    if (x->value.rows() % k != 0) throw DimensionMismatch("tape::block_max row count");
    const int blocks = static_cast<int>(x->value.rows()) / k;
    const int cols = static_cast<int>(x->value.cols());
    Matrix y(blocks, cols);
    // argmax row per (block, col); ties resolved to the lowest row index
    std::vector<int> winner(static_cast<std::size_t>(blocks) * cols);
    for (int b = 0; b < blocks; ++b)
        for (int c = 0; c < cols; ++c) {
            int best = b * k;
            double bv = x->value(best, c);
            for (int r = b * k + 1; r < (b + 1) * k; ++r)
                if (x->value(r, c) > bv) {
                    bv = x->value(r, c);
                    best = r;
                }
            y(b, c) = bv;
            winner[static_cast<std::size_t>(b) * cols + c] = best;
        }
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x, blocks, cols, winner = std::move(winner)]() {
            x->ensure_grad();
            for (int b = 0; b < blocks; ++b)
                for (int c = 0; c < cols; ++c)
                    x->grad(winner[static_cast<std::size_t>(b) * cols + c], c) +=
                        raw->grad(b, c);
        };
    }
    return n;
}

Var block_weighted_sum(const Var& weights, const Var& payload, int k) {
    if (weights->value.cols() != 1 || weights->value.rows() != payload->value.rows() ||
        weights->value.rows() % k != 0)
        throw DimensionMismatch("tape::block_weighted_sum shapes");
    const int blocks = static_cast<int>(weights->value.rows()) / k;
    const int cols = static_cast<int>(payload->value.cols());
    Matrix y = Matrix::Zero(blocks, cols);
    for (int b = 0; b < blocks; ++b)
        for (int r = b * k; r < (b + 1) * k; ++r)
            y.row(b) += weights->value(r, 0) * payload->value.row(r);
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {weights, payload};
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, weights, payload, k, blocks]() {
            for (int b = 0; b < blocks; ++b)
                for (int r = b * k; r < (b + 1) * k; ++r) {
                    if (weights->requires_grad) {
                        weights->ensure_grad();
                        weights->grad(r, 0) += raw->grad.row(b).dot(payload->value.row(r));
                    }
                    if (payload->requires_grad) {
                        payload->ensure_grad();
                        payload->grad.row(r) += weights->value(r, 0) * raw->grad.row(b);
                    }
                }
        };
    }
    return n;
}

Var repeat_rows(const Var& x, int k) {
    const int rows = static_cast<int>(x->value.rows());
    Matrix y(static_cast<Eigen::Index>(rows) * k, x->value.cols());
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < k; ++j) y.row(r * k + j) = x->value.row(r);
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x, rows, k]() {
            x->ensure_grad();
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < k; ++j) x->grad.row(r) += raw->grad.row(r * k + j);
        };
    }
    return n;
}

Var hconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw DegenerateInput("tape::hconcat: no parts");
    const Eigen::Index rows = parts.front()->value.rows();
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        if (p->value.rows() != rows) throw DimensionMismatch("tape::hconcat row mismatch");
        cols += p->value.cols();
    }
    Matrix y(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const Var& p : parts) {
        offsets.push_back(off);
        y.block(0, off, rows, p->value.cols()) = p->value;
        off += p->value.cols();
    }
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = parts;
    n->requires_grad = any_grad(parts);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, parts, offsets, rows]() {
            for (std::size_t i = 0; i < parts.size(); ++i)
                if (parts[i]->requires_grad) {
                    parts[i]->ensure_grad();
                    parts[i]->grad +=
                        raw->grad.block(0, offsets[i], rows, parts[i]->value.cols());
                }
        };
    }
    return n;
}

Var vconcat(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.cols()) throw DimensionMismatch("tape::vconcat col mismatch");
    Matrix y(a->value.rows() + b->value.rows(), a->value.cols());
    y.topRows(a->value.rows()) = a->value;
    y.bottomRows(b->value.rows()) = b->value;
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {a, b};
    n->requires_grad = any_grad(n->parents);
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, a, b]() {
            if (a->requires_grad) {
                a->ensure_grad();
                a->grad += raw->grad.topRows(a->value.rows());
            }
            if (b->requires_grad) {
                b->ensure_grad();
                b->grad += raw->grad.bottomRows(b->value.rows());
            }
        };
    }
    return n;
}

Var gather_rows(const Var& x, const std::vector<int>& rows) {
    Matrix y(static_cast<Eigen::Index>(rows.size()), x->value.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = x->value.row(rows[i]);
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x, rows]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < rows.size(); ++i)
                x->grad.row(rows[i]) += raw->grad.row(static_cast<Eigen::Index>(i));
        };
    }
    return n;
}

Var rows_l2_normalize(const Var& x) {
    Matrix y = x->value;
    std::vector<double> norms(static_cast<std::size_t>(x->value.rows()));
    for (Eigen::Index r = 0; r < x->value.rows(); ++r) {
        const double nr = std::max(x->value.row(r).norm(), 1e-12);
        norms[static_cast<std::size_t>(r)] = nr;
        y.row(r) /= nr;
    }
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x, norms = std::move(norms)]() {
            x->ensure_grad();
            for (Eigen::Index r = 0; r < x->value.rows(); ++r) {
                const auto yr = raw->value.row(r);
                const auto gr = raw->grad.row(r);
                x->grad.row(r) += (gr - yr * yr.dot(gr)) / norms[static_cast<std::size_t>(r)];
            }
        };
    }
    return n;
}

Var row_norm(const Var& x) {
    Matrix y(x->value.rows(), 1);
    for (Eigen::Index r = 0; r < x->value.rows(); ++r)
        y(r, 0) = std::max(x->value.row(r).norm(), 1e-12);
    auto n = std::make_shared<Node>();
    n->value = std::move(y);
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x]() {
            x->ensure_grad();
            for (Eigen::Index r = 0; r < x->value.rows(); ++r)
                x->grad.row(r) += raw->grad(r, 0) * x->value.row(r) / raw->value(r, 0);
        };
    }
    return n;
}

Var sum_all(const Var& x) {
    auto n = std::make_shared<Node>();
    n->value = Matrix::Constant(1, 1, x->value.sum());
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    if (n->requires_grad) {
        Node* raw = n.get();
        n->backprop = [raw, x]() {
            x->ensure_grad();
            x->grad.array() += raw->grad(0, 0);
        };
    }
    return n;
}

void backward(const Var& root) {
    if (root->value.size() != 1) throw DimensionMismatch("tape::backward: root must be 1x1");
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Var, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    // Iterative post-order; graphs can be deep at pipeline scale.
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Var child = node->parents[next++];
            if (child->requires_grad && seen.insert(child.get()).second)
                stack.emplace_back(std::move(child), 0);
        } else {
            topo.push_back(node.get());
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad(0, 0) = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && node->grad.size() != 0) node->backprop();
    }
}

Var DenseStackVar::forward(const Var& x) const {
    Var h = x;
    for (const Layer& layer : layers) {
        h = add_row_broadcast(matmul(h, /*W^T as stored transposed*/ layer.W), layer.b);
        switch (layer.act) {
            case Activation::None:
                break;
            case Activation::Relu:
                h = relu(h);
                break;
            case Activation::Sigmoid:
                h = sigmoid(h);
                break;
        }
    }
    return h;
}

void DenseStackVar::collect(std::vector<Var>& out) const {
    for (const Layer& layer : layers) {
        out.push_back(layer.W);
        out.push_back(layer.b);
    }
}

}  // namespace hdm::tape
