#pragma once

#include <Eigen/Core>
#include <vector>

#include "hdm/cloud.hpp"

namespace hdm {

// Proper rigid motion: x -> R*x + t. R is orthonormal with det +1.
struct RigidTransform {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 operator()(const Vec3& p) const { return R * p + t; }

    static RigidTransform identity() { return {}; }
};

// Matched point pairs with non-negative per-pair weights.
struct WeightedCorrespondences {
    std::vector<Vec3> source_pts;
    std::vector<Vec3> target_pts;
    std::vector<double> weights;
};

// True iff R'R = I and det(R) = +1 within tol.
bool is_proper_rotation(const Mat3& R, double tol = 1e-9);

// Closed-form minimizer of sum_i w_i * |y_i - (R x_i + t)|^2 over proper
// rigid motions: weighted centroids, SVD of the weighted cross-covariance,
// determinant-sign correction. Throws DegenerateInput on < 3 pairs,
// non-positive weight sum, or a rank-0 cross-covariance.
RigidTransform weighted_kabsch(const WeightedCorrespondences& corr);

// Value of the weighted least-squares objective at T.
double kabsch_objective(const WeightedCorrespondences& corr, const RigidTransform& T);

// Result applies `inner` first, then `outer`.
RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner);

RigidTransform invert(const RigidTransform& T);

PointCloud apply(const RigidTransform& T, const PointCloud& cloud);

// Rotation about z by `deg` degrees; test and scene-generation helper.
Mat3 rot_z(double deg);

// Rotation by `deg` degrees about a unit axis.
Mat3 rot_axis_angle(const Vec3& axis, double deg);

}  // namespace hdm
