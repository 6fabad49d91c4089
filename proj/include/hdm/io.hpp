#pragma once

#include <string>
#include <vector>

#include "hdm/cloud.hpp"
#include "hdm/coarse.hpp"
#include "hdm/config.hpp"
#include "hdm/eval.hpp"
#include "hdm/geom.hpp"

namespace hdm {

// KITTI velodyne format: consecutive 16-byte records of four f32 LE values
// (x, y, z, intensity). Throws MalformedFile on a length not divisible by 16
// or any non-finite value, naming the byte offset.
PointCloud read_kitti_bin(const std::string& path);
void write_kitti_bin(const PointCloud& cloud, const std::string& path);

// KITTI odometry pose convention: 12 whitespace-separated reals per line,
// row-major 3x4 [R|t]. R is re-orthonormalized (with a stderr warning) when
// its drift exceeds 1e-6.
std::vector<RigidTransform> read_pose_file(const std::string& path);
void write_pose_file(const std::vector<RigidTransform>& poses, const std::string& path);

// ASCII PLY with x,y,z vertices and an optional per-vertex confidence
// property.
void write_ply(const PointCloud& cloud, const std::string& path,
               const std::vector<double>* confidence = nullptr);
PointCloud read_ply(const std::string& path);

// One "x y z" triple per line; blank lines skipped.
PointCloud read_xyz(const std::string& path);
void write_xyz(const PointCloud& cloud, const std::string& path);

// Correspondence dump: source_xyz, target_xyz, confidence, inlier_flag.
std::string correspondence_csv(const CorrespondenceSet& corr, const std::vector<bool>& inliers);

// Flat key/value config text: one `dotted.key = value` per line, '#'
// comments. Unknown keys are rejected.
struct RunConfig {
    PipelineConfig pipeline;
    EvalThresholds thresholds;
    std::string dataset_dir;
    std::string output_dir;
    std::string params_path;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Pair list: src_path,tgt_path followed by the 12 reals of the ground-truth
// pose line.
struct DatasetPair {
    std::string src_path;
    std::string tgt_path;
    RigidTransform gt;
};

std::vector<DatasetPair> read_pair_list(const std::string& path);
void write_pair_list(const std::vector<DatasetPair>& pairs, const std::string& path);

PointCloud read_cloud_auto(const std::string& path);  // dispatch on extension

}  // namespace hdm
