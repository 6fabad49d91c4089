#include "hdm/io.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hdm/errors.hpp"

namespace hdm {

namespace {

float le_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::string read_all(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MalformedFile("cannot open file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

PointCloud read_kitti_bin(const std::string& path) {
    const std::string data = read_all(path);
    if (data.size() % 16 != 0)
        throw MalformedFile(path + ": length " + std::to_string(data.size()) +
                            " not divisible by 16");
    PointCloud cloud;
    const std::size_t n = data.size() / 16;
    cloud.points.reserve(n);
    cloud.intensity.reserve(n);
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    for (std::size_t i = 0; i < n; ++i) {
        float v[4];
        for (int j = 0; j < 4; ++j) {
            v[j] = le_f32(bytes + i * 16 + j * 4);
            if (!std::isfinite(v[j]))
                throw MalformedFile(path + ": non-finite value at byte offset " +
                                    std::to_string(i * 16 + j * 4));
        }
        cloud.points.emplace_back(v[0], v[1], v[2]);
        cloud.intensity.push_back(v[3]);
    }
    return cloud;
}

void write_kitti_bin(const PointCloud& cloud, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MalformedFile("cannot open for writing: " + path);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        put_f32(os, static_cast<float>(p.x()));
        put_f32(os, static_cast<float>(p.y()));
        put_f32(os, static_cast<float>(p.z()));
        put_f32(os, cloud.has_intensity() ? static_cast<float>(cloud.intensity[i]) : 0.0f);
    }
}

std::vector<RigidTransform> read_pose_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MalformedFile("cannot open file: " + path);
    std::vector<RigidTransform> poses;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        double v[12];
        for (int i = 0; i < 12; ++i)
            if (!(ls >> v[i]))
                throw MalformedFile(path + ": line " + std::to_string(lineno) +
                                    ": expected 12 numeric values");
        std::string extra;
        if (ls >> extra)
            throw MalformedFile(path + ": line " + std::to_string(lineno) +
                                ": trailing token '" + extra + "'");
        RigidTransform T;
        T.R << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
        T.t << v[3], v[7], v[11];
        const double drift = (T.R.transpose() * T.R - Mat3::Identity()).norm();
        if (drift > 1e-6) {
            std::cerr << "warning: " << path << " line " << lineno
                      << ": rotation drift " << drift << ", re-orthonormalizing\n";
            Eigen::JacobiSVD<Mat3> svd(T.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Mat3 D = Mat3::Identity();
            if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
            T.R = svd.matrixU() * D * svd.matrixV().transpose();
        }
        poses.push_back(T);
    }
    return poses;
}

void write_pose_file(const std::vector<RigidTransform>& poses, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw MalformedFile("cannot open for writing: " + path);
    os.precision(17);
    for (const RigidTransform& T : poses) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) os << T.R(r, c) << ' ';
            os << T.t(r);
            if (r < 2) os << ' ';
        }
        os << '\n';
    }
}

void write_ply(const PointCloud& cloud, const std::string& path,
               const std::vector<double>* confidence) {
    std::ofstream os(path);
    if (!os) throw MalformedFile("cannot open for writing: " + path);
    os.precision(9);
    os << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << '\n'
       << "property double x\nproperty double y\nproperty double z\n";
    if (confidence) os << "property double confidence\n";
    os << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        os << p.x() << ' ' << p.y() << ' ' << p.z();
        if (confidence) os << ' ' << (*confidence)[i];
        os << '\n';
    }
}

PointCloud read_ply(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MalformedFile("cannot open file: " + path);
    std::string line;
    std::size_t lineno = 0;
    std::size_t vertices = 0;
    int props = 0;
    bool header_done = false;
    if (!std::getline(is, line) || line != "ply")
        throw MalformedFile(path + ": line 1: missing 'ply' magic");
    lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "element") {
            std::string kind;
            ls >> kind >> vertices;
            if (kind != "vertex")
                throw MalformedFile(path + ": line " + std::to_string(lineno) +
                                    ": unsupported element '" + kind + "'");
        } else if (tok == "property") {
            ++props;
        } else if (tok == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) throw MalformedFile(path + ": truncated header");
    if (props < 3) throw MalformedFile(path + ": fewer than 3 vertex properties");
    PointCloud cloud;
    cloud.points.reserve(vertices);
    for (std::size_t i = 0; i < vertices; ++i) {
        if (!std::getline(is, line))
            throw MalformedFile(path + ": line " + std::to_string(lineno + i + 1) +
                                ": missing vertex row");
        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x >> y >> z))
            throw MalformedFile(path + ": line " + std::to_string(lineno + i + 1) +
                                ": expected 3 coordinates");
        cloud.points.emplace_back(x, y, z);
    }
    return cloud;
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MalformedFile("cannot open file: " + path);
    PointCloud cloud;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank lines skipped
        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x >> y >> z))
            throw MalformedFile(path + ": line " + std::to_string(lineno) +
                                ": expected 'x y z'");
        cloud.points.emplace_back(x, y, z);
    }
    return cloud;
}

void write_xyz(const PointCloud& cloud, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw MalformedFile("cannot open for writing: " + path);
    os.precision(9);
    for (const Vec3& p : cloud.points) os << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::string correspondence_csv(const CorrespondenceSet& corr, const std::vector<bool>& inliers) {
    std::ostringstream os;
    os << "src_x,src_y,src_z,tgt_x,tgt_y,tgt_z,confidence,inlier\n";
    os.precision(9);
    for (std::size_t i = 0; i < corr.source.size(); ++i) {
        const Vec3& s = corr.source[i];
        const Vec3& t = corr.virtual_targets[i];
        os << s.x() << ',' << s.y() << ',' << s.z() << ',' << t.x() << ',' << t.y() << ','
           << t.z() << ',' << corr.confidences[i] << ','
           << (i < inliers.size() && inliers[i] ? 1 : 0) << '\n';
    }
    return os.str();
}

namespace {

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value,
               std::size_t lineno) {
    auto as_double = [&]() { return std::stod(value); };
    auto as_size = [&]() { return static_cast<std::size_t>(std::stoull(value)); };
    auto as_int = [&]() { return std::stoi(value); };
    auto as_bool = [&]() {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw MalformedFile("config line " + std::to_string(lineno) + ": bad bool '" + value + "'");
    };
    PipelineConfig& p = cfg.pipeline;
    if (key == "pipeline.voxel_size") p.voxel_size = as_double();
    else if (key == "pipeline.input_points") p.input_points = as_size();
    else if (key == "pipeline.n1") p.level_sizes[0] = as_size();
    else if (key == "pipeline.n2") p.level_sizes[1] = as_size();
    else if (key == "pipeline.n3") p.level_sizes[2] = as_size();
    else if (key == "pipeline.c1") p.level_dims[0] = as_int();
    else if (key == "pipeline.c2") p.level_dims[1] = as_int();
    else if (key == "pipeline.c3") p.level_dims[2] = as_int();
    else if (key == "pipeline.k1") p.k1 = as_int();
    else if (key == "pipeline.k2") p.k2 = as_int();
    else if (key == "pipeline.upsample_k") p.upsample_k = as_int();
    else if (key == "pipeline.alpha") p.alpha = as_double();
    else if (key == "pipeline.double_soft") p.double_soft = as_bool();
    else if (key == "pipeline.sparse_to_denser") p.sparse_to_denser = as_bool();
    else if (key == "pipeline.feature_consistency") p.feature_consistency = as_bool();
    else if (key == "pipeline.mask") p.mask = as_bool();
    else if (key == "pipeline.seed") p.seed = std::stoull(value);
    else if (key == "pipeline.mode") {
        if (value == "deterministic") p.mode = Mode::Deterministic;
        else if (value == "learned") p.mode = Mode::Learned;
        else throw MalformedFile("config line " + std::to_string(lineno) + ": bad mode '" + value + "'");
    }
    else if (key == "thresholds.eps_trans") cfg.thresholds.eps_trans = as_double();
    else if (key == "thresholds.eps_rot") cfg.thresholds.eps_rot = as_double();
    else if (key == "thresholds.eps_d") cfg.thresholds.eps_d = as_double();
    else if (key == "paths.dataset_dir") cfg.dataset_dir = value;
    else if (key == "paths.output_dir") cfg.output_dir = value;
    else if (key == "paths.params") cfg.params_path = value;
    else
        throw MalformedFile("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::size_t eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw MalformedFile("config line " + std::to_string(lineno) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_all(path)); }

std::vector<DatasetPair> read_pair_list(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MalformedFile("cannot open file: " + path);
    std::vector<DatasetPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (lineno == 1 && line.rfind("src_path", 0) == 0) continue;  // optional header
        std::istringstream ls(line);
        DatasetPair pair;
        std::string token;
        if (!std::getline(ls, pair.src_path, ',') || !std::getline(ls, pair.tgt_path, ','))
            throw MalformedFile(path + ": line " + std::to_string(lineno) +
                                ": expected src_path,tgt_path,pose...");
        double v[12];
        for (int i = 0; i < 12; ++i) {
            if (!std::getline(ls, token, ','))
                throw MalformedFile(path + ": line " + std::to_string(lineno) +
                                    ": expected 12 pose values");
            try {
                v[i] = std::stod(token);
            } catch (const std::exception&) {
                throw MalformedFile(path + ": line " + std::to_string(lineno) +
                                    ": bad pose value '" + token + "'");
            }
        }
        pair.gt.R << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
        pair.gt.t << v[3], v[7], v[11];
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

void write_pair_list(const std::vector<DatasetPair>& pairs, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw MalformedFile("cannot open for writing: " + path);
    os.precision(17);
    os << "src_path,tgt_path,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz\n";
    for (const DatasetPair& pair : pairs) {
        os << pair.src_path << ',' << pair.tgt_path;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) os << ',' << pair.gt.R(r, c);
            os << ',' << pair.gt.t(r);
        }
        os << '\n';
    }
}

PointCloud read_cloud_auto(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".bin") return read_kitti_bin(path);
    if (ext == ".ply") return read_ply(path);
    if (ext == ".xyz" || ext == ".txt") return read_xyz(path);
    throw MalformedFile("unsupported cloud extension: " + path);
}

}  // namespace hdm
