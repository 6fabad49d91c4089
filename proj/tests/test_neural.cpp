#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <random>

#include "doctest.h"
#include "hdm/errors.hpp"
#include "hdm/geom.hpp"
#include "hdm/neural.hpp"

using namespace hdm;

namespace {

DenseStack small_stack(std::mt19937_64& rng) {
    DenseStack s;
    s.layers.push_back({glorot_uniform(5, 3, rng), Vector::Random(5), Activation::Relu});
    s.layers.push_back({glorot_uniform(4, 5, rng), Vector::Random(4), Activation::None});
    return s;
}

}  // namespace

TEST_CASE("softmax sums to one and is shift invariant") {
    Vector s(4);
    s << 1.0, -2.0, 0.5, 3.0;
    const Vector p = softmax(s);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((p.array() > 0.0).all());
    const Vector p2 = softmax(Vector(s.array() + 1000.0));  // stability under shift
    CHECK((p - p2).norm() < 1e-12);
    // Uniform on equal scores.
    const Vector u = softmax(Vector::Zero(3));
    CHECK(u(0) == doctest::Approx(1.0 / 3));
}

TEST_CASE("maxpool is channelwise and permutation invariant") {
    std::vector<Vector> feats;
    Vector a(2), b(2), c(2);
    a << 1.0, -5.0;
    b << 0.0, 2.0;
    c << -3.0, 1.0;
    feats = {a, b, c};
    const Vector m = maxpool(feats);
    CHECK(m(0) == 1.0);
    CHECK(m(1) == 2.0);
    std::vector<Vector> shuffled = {c, a, b};
    CHECK((maxpool(shuffled) - m).norm() == 0.0);
    CHECK_THROWS_AS(maxpool({}), DegenerateInput);
}

TEST_CASE("shared MLP applies identical weights to each member") {
    std::mt19937_64 rng(4);
    const DenseStack s = small_stack(rng);
    std::vector<Vector> in;
    for (int i = 0; i < 6; ++i) in.push_back(Vector::Random(3));
    const auto out = shared_mlp_forward(s, in);
    REQUIRE(out.size() == 6);
    for (int i = 0; i < 6; ++i)
        CHECK((out[i] - dense_stack_forward(s, in[i])).norm() == 0.0);
    // Permutation equivariance comes for free from weight sharing.
    std::vector<Vector> perm = {in[3], in[0], in[5], in[1], in[2], in[4]};
    const auto out_p = shared_mlp_forward(s, perm);
    CHECK((out_p[0] - out[3]).norm() == 0.0);
    CHECK((out_p[2] - out[5]).norm() == 0.0);
}

TEST_CASE("activations") {
    Vector x(3);
    x << -1.0, 0.0, 2.0;
    const Vector r = apply_activation(x, Activation::Relu);
    CHECK(r(0) == 0.0);
    CHECK(r(2) == 2.0);
    CHECK(sigmoid(0.0) == doctest::Approx(0.5));
    CHECK(sigmoid(100.0) == doctest::Approx(1.0));
    const Vector id = apply_activation(x, Activation::None);
    CHECK((id - x).norm() == 0.0);
}

TEST_CASE("loss terms on hand-computed instances") {
    RigidTransform est, gt;
    est.t = Vec3(3.0, 4.0, 0.0);  // |t - 0| = 5
    CHECK(loss_translation(est, gt) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(loss_rotation(est, gt) == doctest::Approx(0.0));
    LossConfig cfg;
    cfg.alpha = 1.8;
    CHECK(loss_total(est, gt, cfg) == doctest::Approx(5.0).epsilon(1e-12));

    // 180 degrees about z: R'R_gt - I has Frobenius norm sqrt(8).
    est = RigidTransform{};
    est.R = rot_z(180.0);
    CHECK(loss_rotation(est, gt) == doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
    CHECK(loss_total(est, gt, cfg) ==
          doctest::Approx(1.8 * std::sqrt(8.0)).epsilon(1e-12));
}

TEST_CASE("loss_total_grad matches central finite differences") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LossConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        RigidTransform est, gt;
        est.R = rot_z(u(rng) * 90.0) * rot_axis_angle(Vec3::UnitX(), u(rng) * 40.0);
        est.t = Vec3(u(rng), u(rng), u(rng));
        gt.R = rot_z(u(rng) * 90.0);
        gt.t = Vec3(u(rng), u(rng), u(rng));
        Mat3 dR;
        Vec3 dt;
        loss_total_grad(est, gt, cfg, dR, dt);

        const double h = 1e-6;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                RigidTransform p = est, m = est;
                p.R(r, c) += h;
                m.R(r, c) -= h;
                const double fd = (loss_total(p, gt, cfg) - loss_total(m, gt, cfg)) / (2 * h);
                CHECK(dR(r, c) == doctest::Approx(fd).epsilon(1e-4));
            }
        for (int k = 0; k < 3; ++k) {
            RigidTransform p = est, m = est;
            p.t(k) += h;
            m.t(k) -= h;
            const double fd = (loss_total(p, gt, cfg) - loss_total(m, gt, cfg)) / (2 * h);
            CHECK(dt(k) == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("adam learning rate halves every 10 epochs") {
    CHECK(adam_effective_lr(0.0095, 0) == doctest::Approx(0.0095));
    CHECK(adam_effective_lr(0.0095, 9) == doctest::Approx(0.0095));
    CHECK(adam_effective_lr(0.0095, 10) == doctest::Approx(0.00475));
    CHECK(adam_effective_lr(0.0095, 25) == doctest::Approx(0.0095 / 4));
}

TEST_CASE("adam step behaves like the textbook update") {
    AdamConfig cfg;
    AdamState st;
    std::vector<Matrix> params = {Matrix::Zero(2, 2)};

    // Zero gradient: parameters stay put.
    adam_step(params, {Matrix::Zero(2, 2)}, st, cfg, 0);
    CHECK(params[0].norm() == 0.0);

    // First non-zero step moves by ~lr against the gradient sign regardless
    // of magnitude (bias-corrected m/sqrt(v) = sign on step 1 from rest)...
    AdamState st2;
    std::vector<Matrix> p2 = {Matrix::Zero(1, 1)};
    std::vector<Matrix> g2 = {Matrix::Constant(1, 1, 3.7)};
    adam_step(p2, g2, st2, cfg, 0);
    CHECK(p2[0](0, 0) == doctest::Approx(-cfg.lr0).epsilon(1e-3));

    // ...and with constant gradient it keeps descending monotonically.
    double prev = p2[0](0, 0);
    for (int i = 0; i < 5; ++i) {
        adam_step(p2, g2, st2, cfg, 0);
        CHECK(p2[0](0, 0) < prev);
        prev = p2[0](0, 0);
    }
}

TEST_CASE("glorot init stays inside its bound and is seed deterministic") {
    std::mt19937_64 a(5), b(5);
    const Matrix m1 = glorot_uniform(20, 30, a);
    const Matrix m2 = glorot_uniform(20, 30, b);
    CHECK((m1 - m2).norm() == 0.0);
    const double bound = std::sqrt(6.0 / (20 + 30));
    CHECK(m1.cwiseAbs().maxCoeff() <= bound);
    CHECK(m1.cwiseAbs().maxCoeff() > 0.1 * bound);  // not degenerate
}

TEST_CASE("params save/load round trips exactly") {
    ModelParams p;
    p.tensors["layer0.W"] = Matrix::Random(4, 7);
    p.tensors["layer0.b"] = Matrix::Random(1, 7);
    p.tensors["z"] = Matrix::Constant(1, 1, -0.0);
    const std::string path = "/tmp/hdm_test_params.hdmn";
    save_params(p, path);
    const ModelParams q = load_params(path);
    REQUIRE(q.tensors.size() == 3);
    for (const auto& [name, mat] : p.tensors) {
        REQUIRE(q.tensors.count(name) == 1);
        CHECK((q.tensors.at(name) - mat).norm() == 0.0);
    }
    std::remove(path.c_str());
}

TEST_CASE("load_params rejects a corrupt file") {
    const std::string path = "/tmp/hdm_test_params_bad.hdmn";
    FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite("NOPE", 1, 4, f);
    std::fclose(f);
    CHECK_THROWS_AS(load_params(path), MalformedFile);
    std::remove(path.c_str());
}
