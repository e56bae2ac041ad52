//! Skeleton representation, forward kinematics, dual quaternion skinning
//! and full-perspective camera projection.
//!
//! The skeleton is a tree of joints, each with a rest offset from its
//! parent and zero to three fixed rotation axes. A pose holds the root
//! translation, the root rotation as an axis-angle vector, and one angle
//! per rig axis; the flattened parameter order is `(t, R, theta)`.
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently.

mod camera;
mod dualquat;
mod fk;
mod pose;
mod rig;
mod skinning;
mod template;

pub use camera::Camera;
pub use dualquat::DualQuat;
pub use fk::{forward_kinematics, forward_kinematics_with_jacobian, joint_positions, FkJacobian, JointTransform};
pub use pose::SkeletonPose;
pub use rig::{AngleBound, Joint, SkeletonRig, ROOT_PARENT_SENTINEL};
pub use skinning::{skin_mesh, skin_vertices, skin_vertices_with_jacobian, SkinJacobian};
pub use template::ActorTemplate;
