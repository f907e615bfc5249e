// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>

#include <Eigen/Geometry>

namespace hallucam {

/// Rigid-body pose of a frame expressed in the world frame (frame -> world).
struct Pose6D {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

    Eigen::Isometry3d toIsometry() const {
        Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
        T.linear() = orientation.normalized().toRotationMatrix();
        T.translation() = position;
        return T;
    }

    static Pose6D fromIsometry(const Eigen::Isometry3d &T) {
        Pose6D p;
        p.position = T.translation();
        p.orientation = Eigen::Quaterniond(T.rotation()).normalized();
        return p;
    }

    bool operator==(const Pose6D &o) const {
        return position == o.position && orientation.coeffs() == o.orientation.coeffs();
    }
};

/// Camera pose in world given the body pose and a body->camera extrinsic
/// (the extrinsic maps body-frame points into the camera frame).
inline Pose6D composeCameraPose(const Pose6D &body, const Eigen::Isometry3d &bodyToCamera) {
    return Pose6D::fromIsometry(body.toIsometry() * bodyToCamera.inverse());
}

/// Rotation about world z.
inline Eigen::Quaterniond yawQuaternion(double yaw) {
    return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
}

/// Body frame is x-forward, y-left, z-up. Cameras use x-right, y-down, z-forward.
inline Eigen::Isometry3d frontCameraExtrinsic() {
    Eigen::Matrix3d R;
    R << 0, -1, 0, //
        0, 0, -1,  //
        1, 0, 0;
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.linear() = R;
    return T;
}

/// Down-facing camera: optical axis along body -z, image up along body +x.
inline Eigen::Isometry3d downCameraExtrinsic() {
    Eigen::Matrix3d R;
    R << 0, -1, 0, //
        -1, 0, 0,  //
        0, 0, -1;
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.linear() = R;
    return T;
}

/// Transform of a vertical plane frame (x left, y up, z forward along yaw)
/// centred at `center`, returned as world -> plane.
inline Eigen::Isometry3d verticalPlaneWorldToPlane(const Eigen::Vector3d &center, double yaw) {
    Eigen::Matrix3d R; // columns: plane axes in world
    R.col(0) = Eigen::Vector3d(-std::sin(yaw), std::cos(yaw), 0.0);
    R.col(1) = Eigen::Vector3d::UnitZ();
    R.col(2) = Eigen::Vector3d(std::cos(yaw), std::sin(yaw), 0.0);
    Eigen::Isometry3d planeToWorld = Eigen::Isometry3d::Identity();
    planeToWorld.linear() = R;
    planeToWorld.translation() = center;
    return planeToWorld.inverse();
}

inline bool isOrthonormal(const Eigen::Matrix3d &R, double tol = 1e-6) {
    return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           R.determinant() > 0.0;
}

} // namespace hallucam
