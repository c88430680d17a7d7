"""Pose-centered affordance toolkit: geometry, grip mapping, contact extraction, metrics and datasets."""

from ._afford import (
    AffordError,
    CameraIntrinsics,
    curate_dataset,
    dtm,
    evaluate_oracle,
    fit_gmm,
    generate_dataset,
    geodesic_angle,
    nss,
    project,
    quat_to_rot6d,
    read_dataset,
    recover_contact_pose,
    rot6d_to_quat,
    rotation_error,
    schedule,
    success,
    unproject,
)

__all__ = [
    "AffordError",
    "CameraIntrinsics",
    "curate_dataset",
    "dtm",
    "evaluate_oracle",
    "fit_gmm",
    "generate_dataset",
    "geodesic_angle",
    "nss",
    "project",
    "quat_to_rot6d",
    "read_dataset",
    "recover_contact_pose",
    "rot6d_to_quat",
    "rotation_error",
    "schedule",
    "success",
    "unproject",
]
