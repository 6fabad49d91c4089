#include "hdm/geom.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "hdm/errors.hpp"

namespace hdm {

bool is_proper_rotation(const Mat3& R, double tol) {
    const double ortho = (R.transpose() * R - Mat3::Identity()).norm();
    return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

RigidTransform weighted_kabsch(const WeightedCorrespondences& corr) {
    const std::size_t n = corr.source_pts.size();
    if (n != corr.target_pts.size() || n != corr.weights.size())
        throw DimensionMismatch("weighted_kabsch: list lengths differ");
    if (n < 3) throw DegenerateInput("weighted_kabsch: need at least 3 pairs");

    double wsum = 0.0;
    for (double w : corr.weights) {
        if (w < 0.0) throw DegenerateInput("weighted_kabsch: negative weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw DegenerateInput("weighted_kabsch: weight sum is not positive");

    Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        cs += corr.weights[i] * corr.source_pts[i];
        ct += corr.weights[i] * corr.target_pts[i];
    }
    cs /= wsum;
    ct /= wsum;

    // Weighted cross-covariance of the centered pairs.
    Mat3 H = Mat3::Zero();
    double spread = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 xs = corr.source_pts[i] - cs;
        const Vec3 yt = corr.target_pts[i] - ct;
        H += corr.weights[i] * yt * xs.transpose();
        spread += corr.weights[i] * (xs.squaredNorm() + yt.squaredNorm());
    }
    const double rms = std::sqrt(spread / (2.0 * wsum));

    Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(0) < 1e-12 * std::max(rms, 1e-300))
        throw DegenerateInput("weighted_kabsch: cross-covariance is numerically rank-0");

    Mat3 U = svd.matrixU();
    Mat3 V = svd.matrixV();
    Mat3 D = Mat3::Identity();
    if ((U * V.transpose()).determinant() < 0.0) D(2, 2) = -1.0;  // forbid reflections

    RigidTransform T;
    T.R = U * D * V.transpose();
    T.t = ct - T.R * cs;
    return T;
}

double kabsch_objective(const WeightedCorrespondences& corr, const RigidTransform& T) {
    double obj = 0.0;
    for (std::size_t i = 0; i < corr.source_pts.size(); ++i)
        obj += corr.weights[i] * (corr.target_pts[i] - T(corr.source_pts[i])).squaredNorm();
    return obj;
}

RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
    RigidTransform T;
    T.R = outer.R * inner.R;
    T.t = outer.R * inner.t + outer.t;
    return T;
}

RigidTransform invert(const RigidTransform& T) {
    RigidTransform inv;
    inv.R = T.R.transpose();
    inv.t = -(inv.R * T.t);
    return inv;
}

PointCloud apply(const RigidTransform& T, const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const Vec3& p : cloud.points) out.points.push_back(T(p));
    out.intensity = cloud.intensity;
    return out;
}

Mat3 rot_z(double deg) { return rot_axis_angle(Vec3::UnitZ(), deg); }

Mat3 rot_axis_angle(const Vec3& axis, double deg) {
    const double rad = deg * M_PI / 180.0;
    return Eigen::AngleAxisd(rad, axis.normalized()).toRotationMatrix();
}

}  // namespace hdm
