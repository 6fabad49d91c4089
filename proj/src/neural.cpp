#include "hdm/neural.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "hdm/errors.hpp"

namespace hdm {

Vector apply_activation(const Vector& x, Activation act) {
    switch (act) {
        case Activation::None:
            return x;
        case Activation::Relu:
            return x.cwiseMax(0.0);
        case Activation::Sigmoid:
            return x.unaryExpr([](double v) { return sigmoid(v); });
    }
    return x;
}

Vector dense_stack_forward(const DenseStack& stack, const Vector& x) {
    Vector h = x;
    for (const DenseLayer& layer : stack.layers) {
        if (layer.W.cols() != h.size())
            throw DimensionMismatch("dense_stack_forward: layer input width mismatch");
        h = apply_activation(layer.W * h + layer.b, layer.act);
    }
    return h;
}

std::vector<Vector> shared_mlp_forward(const DenseStack& stack, const std::vector<Vector>& features) {
    std::vector<Vector> out;
    out.reserve(features.size());
    for (const Vector& f : features) out.push_back(dense_stack_forward(stack, f));
    return out;
}

Vector maxpool(const std::vector<Vector>& features) {
    if (features.empty()) throw DegenerateInput("maxpool: empty set");
    Vector m = features.front();
    for (std::size_t i = 1; i < features.size(); ++i) {
        if (features[i].size() != m.size())
            throw DimensionMismatch("maxpool: member widths differ");
        m = m.cwiseMax(features[i]);
    }
    return m;
}

Vector softmax(const Vector& scores) {
    const double mx = scores.maxCoeff();
    Vector e = (scores.array() - mx).exp();
    return e / e.sum();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double loss_translation(const RigidTransform& est, const RigidTransform& gt) {
    return (gt.t - est.t).norm();
}

double loss_rotation(const RigidTransform& est, const RigidTransform& gt) {
    return (est.R.transpose() * gt.R - Mat3::Identity()).norm();
}

double loss_total(const RigidTransform& est, const RigidTransform& gt, const LossConfig& cfg) {
    return loss_translation(est, gt) + cfg.alpha * loss_rotation(est, gt);
}

void loss_total_grad(const RigidTransform& est, const RigidTransform& gt,
                     const LossConfig& cfg, Mat3& dR, Vec3& dt) {
    const Vec3 dtrans = est.t - gt.t;
    const double tn = dtrans.norm();
    dt = tn > 1e-12 ? Vec3(dtrans / tn) : Vec3(Vec3::Zero());

    const Mat3 M = est.R.transpose() * gt.R - Mat3::Identity();
    const double rn = M.norm();
    dR = rn > 1e-12 ? Mat3(cfg.alpha * gt.R * M.transpose() / rn) : Mat3(Mat3::Zero());
}

double adam_effective_lr(double lr0, int epoch) {
    return lr0 * std::pow(0.5, epoch / 10);
}

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
               AdamState& state, const AdamConfig& cfg, int epoch) {
    if (params.size() != grads.size())
        throw DimensionMismatch("adam_step: params/grads count mismatch");
    if (state.m.empty()) {
        for (const Matrix& p : params) {
            state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
            state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
    }
    state.step += 1;
    const double lr = adam_effective_lr(cfg.lr0, epoch);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
        const Matrix mhat = state.m[i] / bc1;
        const Matrix vhat = state.v[i] / bc2;
        params[i].array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
    }
}

Matrix& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DegenerateInput("ModelParams: missing tensor " + name);
    return it->second;
}

const Matrix& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DegenerateInput("ModelParams: missing tensor " + name);
    return it->second;
}

namespace {

constexpr char kMagic[4] = {'H', 'D', 'M', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4))
        throw MalformedFile("param file: truncated while reading " + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

double read_f64(std::istream& is, const std::string& what) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8))
        throw MalformedFile("param file: truncated while reading " + what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_params(const ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MalformedFile("param file: cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    for (const auto& [name, tensor] : params.tensors) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(tensor.rows()));
        write_u32(os, static_cast<std::uint32_t>(tensor.cols()));
        for (Eigen::Index r = 0; r < tensor.rows(); ++r)
            for (Eigen::Index c = 0; c < tensor.cols(); ++c) write_f64(os, tensor(r, c));
    }
}

ModelParams load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MalformedFile("param file: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw MalformedFile("param file: bad magic bytes at offset 0");
    const std::uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        throw MalformedFile("param file: unsupported version " + std::to_string(version));
    ModelParams params;
    while (is.peek() != std::char_traits<char>::eof()) {
        const std::uint32_t name_len = read_u32(is, "name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw MalformedFile("param file: truncated tensor name");
        const std::uint32_t rows = read_u32(is, "rows of " + name);
        const std::uint32_t cols = read_u32(is, "cols of " + name);
        Matrix tensor(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c)
                tensor(r, c) = read_f64(is, "values of " + name);
        params.tensors.emplace(std::move(name), std::move(tensor));
    }
    return params;
}

Matrix glorot_uniform(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

}  // namespace hdm
