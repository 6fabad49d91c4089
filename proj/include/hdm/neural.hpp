#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hdm/geom.hpp"

namespace hdm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { None, Relu, Sigmoid };

struct DenseLayer {
    Matrix W;  // out_dim x in_dim
    Vector b;  // out_dim
    Activation act = Activation::None;
};

// Stack of dense layers applied to each feature vector independently
// (shared weights across the set).
struct DenseStack {
    std::vector<DenseLayer> layers;

    int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
    int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
};

Vector apply_activation(const Vector& x, Activation act);

// Maps each of the K input vectors through the same stack.
std::vector<Vector> shared_mlp_forward(const DenseStack& stack, const std::vector<Vector>& features);

Vector dense_stack_forward(const DenseStack& stack, const Vector& x);

// Channelwise maximum over the member vectors. Throws on an empty set.
Vector maxpool(const std::vector<Vector>& features);

// Numerically stable softmax (max subtraction); outputs are positive and
// sum to 1.
Vector softmax(const Vector& scores);

double sigmoid(double x);

struct LossConfig {
    double alpha = 1.8;  // rotation term weight
};

// |t - t_hat| + alpha * |R_hat' R - I|_F
double loss_total(const RigidTransform& est, const RigidTransform& gt, const LossConfig& cfg);
double loss_translation(const RigidTransform& est, const RigidTransform& gt);
double loss_rotation(const RigidTransform& est, const RigidTransform& gt);

// Analytic gradient of loss_total with respect to est.R (treated as a free
// 3x3 matrix) and est.t. Zero where the norms vanish.
void loss_total_grad(const RigidTransform& est, const RigidTransform& gt,
                     const LossConfig& cfg, Mat3& dR, Vec3& dt);

// ---- Adam ----

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::int64_t step = 0;
};

struct AdamConfig {
    double lr0 = 0.0095;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Effective learning rate: lr0 halved every 10 epochs.
double adam_effective_lr(double lr0, int epoch);

// Standard Adam update in place; state tensors are lazily shaped from params.
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
               AdamState& state, const AdamConfig& cfg, int epoch);

// ---- Named-tensor parameter store ----

// Serialized as: magic "HDMN", u32 version, then per tensor
// (u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 LE
// values in row-major order).
struct ModelParams {
    std::map<std::string, Matrix> tensors;

    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
};

void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(int rows, int cols, std::mt19937_64& rng);

}  // namespace hdm
