#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "hdm/errors.hpp"
#include "hdm/io.hpp"

using namespace hdm;

namespace {

struct TmpFile {
    std::string path;
    explicit TmpFile(const std::string& name) : path("/tmp/hdm_io_" + name) {}
    ~TmpFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("kitti bin round trip is exact") {
    TmpFile f("cloud.bin");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-50.0f, 50.0f);
    PointCloud c;
    for (int i = 0; i < 100; ++i) {
        c.points.emplace_back(u(rng), u(rng), u(rng));
        c.intensity.push_back(u(rng));
    }
    // Values are f32 on disk; write from f32-valued doubles so the round
    // trip is bit exact.
    write_kitti_bin(c, f.path);
    const PointCloud back = read_kitti_bin(f.path);
    REQUIRE(back.size() == 100);
    for (int i = 0; i < 100; ++i) {
        CHECK((back.points[i] - c.points[i]).norm() == 0.0);
        CHECK(back.intensity[i] == c.intensity[i]);
    }
}

TEST_CASE("kitti bin rejects truncated and non-finite files") {
    TmpFile f("bad.bin");
    {
        std::ofstream os(f.path, std::ios::binary);
        const char bytes[20] = {0};
        os.write(bytes, 20);  // not a multiple of 16
    }
    CHECK_THROWS_WITH_AS(read_kitti_bin(f.path), doctest::Contains("16"), MalformedFile);

    {
        std::ofstream os(f.path, std::ios::binary);
        float rec[4] = {1.0f, std::numeric_limits<float>::quiet_NaN(), 0.0f, 0.0f};
        os.write(reinterpret_cast<const char*>(rec), sizeof rec);
    }
    CHECK_THROWS_WITH_AS(read_kitti_bin(f.path), doctest::Contains("offset"), MalformedFile);

    CHECK_THROWS_AS(read_kitti_bin("/tmp/does_not_exist_hdm.bin"), MalformedFile);
}

TEST_CASE("pose file round trip") {
    TmpFile f("poses.txt");
    std::vector<RigidTransform> poses;
    RigidTransform a;
    a.R = rot_z(30.0);
    a.t = Vec3(1.5, -2.25, 0.125);
    RigidTransform b;
    b.R = rot_axis_angle(Vec3(1, 1, 0).normalized(), 75.0);
    b.t = Vec3(-10.0, 0.0, 3.0);
    poses = {a, b};
    write_pose_file(poses, f.path);
    const auto back = read_pose_file(f.path);
    REQUIRE(back.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK((back[i].R - poses[i].R).norm() < 1e-12);
        CHECK((back[i].t - poses[i].t).norm() < 1e-12);
    }
}

TEST_CASE("pose file rejects malformed lines") {
    TmpFile f("badpose.txt");
    {
        std::ofstream os(f.path);
        os << "1 0 0 0 0 1 0 0 0 0 1\n";  // 11 values
    }
    CHECK_THROWS_AS(read_pose_file(f.path), MalformedFile);
    {
        std::ofstream os(f.path);
        os << "1 0 0 0 0 1 0 0 0 0 1 abc\n";
    }
    CHECK_THROWS_AS(read_pose_file(f.path), MalformedFile);
}

TEST_CASE("ply round trip with confidence") {
    TmpFile f("cloud.ply");
    PointCloud c;
    c.points = {{1.0, 2.0, 3.0}, {-0.5, 0.25, 8.0}};
    std::vector<double> conf = {0.75, 0.5};
    write_ply(c, f.path, &conf);
    const PointCloud back = read_ply(f.path);
    REQUIRE(back.size() == 2);
    for (int i = 0; i < 2; ++i) CHECK((back.points[i] - c.points[i]).norm() < 1e-9);
}

TEST_CASE("xyz round trip and blank-line tolerance") {
    TmpFile f("cloud.xyz");
    {
        std::ofstream os(f.path);
        os << "1 2 3\n\n4.5 -6 7\n";
    }
    const PointCloud c = read_xyz(f.path);
    REQUIRE(c.size() == 2);
    CHECK((c.points[1] - Vec3(4.5, -6.0, 7.0)).norm() == 0.0);

    TmpFile g("cloud2.xyz");
    write_xyz(c, g.path);
    const PointCloud back = read_xyz(g.path);
    REQUIRE(back.size() == 2);
    CHECK((back.points[0] - c.points[0]).norm() < 1e-9);
}

TEST_CASE("correspondence csv schema") {
    CorrespondenceSet corr;
    corr.source = {{0, 0, 0}};
    corr.virtual_targets = {{1, 0, 0}};
    corr.confidences = {0.5};
    const std::string csv = correspondence_csv(corr, {true});
    CHECK(csv.rfind("src_x") == 0 /* header first */);
    CHECK(csv.find("0.5") != std::string::npos);
}

TEST_CASE("run config parsing") {
    const std::string text =
        "# comment\n"
        "pipeline.voxel_size = 0.25\n"
        "pipeline.input_points = 4096\n"
        "pipeline.seed = 7\n"
        "thresholds.eps_trans = 1.5\n"
        "paths.output_dir = /tmp/out\n";
    const RunConfig rc = parse_run_config(text);
    CHECK(rc.pipeline.voxel_size == doctest::Approx(0.25));
    CHECK(rc.pipeline.input_points == 4096);
    CHECK(rc.pipeline.seed == 7);
    CHECK(rc.thresholds.eps_trans == doctest::Approx(1.5));
    CHECK(rc.output_dir == "/tmp/out");

    CHECK_THROWS_WITH_AS(parse_run_config("pipeline.bogus = 1\n"),
                         doctest::Contains("bogus"), MalformedFile);
    CHECK_THROWS_AS(parse_run_config("pipeline.voxel_size 0.3\n"), MalformedFile);
}

TEST_CASE("pair list round trip") {
    TmpFile f("pairs.txt");
    DatasetPair p;
    p.src_path = "/data/a.bin";
    p.tgt_path = "/data/b.bin";
    p.gt.R = rot_z(45.0);
    p.gt.t = Vec3(1, 2, 3);
    write_pair_list({p}, f.path);
    const auto back = read_pair_list(f.path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].src_path == p.src_path);
    CHECK(back[0].tgt_path == p.tgt_path);
    CHECK((back[0].gt.R - p.gt.R).norm() < 1e-9);
    CHECK((back[0].gt.t - p.gt.t).norm() < 1e-9);
}

TEST_CASE("read_cloud_auto dispatches on extension") {
    TmpFile f("auto.xyz");
    {
        std::ofstream os(f.path);
        os << "0 0 0\n1 1 1\n";
    }
    CHECK(read_cloud_auto(f.path).size() == 2);
    CHECK_THROWS_AS(read_cloud_auto("/tmp/x.unknown_ext"), MalformedFile);
}
