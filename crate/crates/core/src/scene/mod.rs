//! Ground truth: analytic dynamic scenes, their capture rigs and the
//! integration-based teacher trained on them.

pub mod catalog;
mod oracle;
mod teacher;

pub use catalog::{orbit_camera, scene_by_name, Frame, Rig, SCENE_NAMES};
pub use oracle::{
    oracle_frame, oracle_mask, AttributeBinding, AttributeMaskImage, Hit, OracleScene, Poly, Primitive, Rgb,
    Shape, Trajectory,
};
pub use teacher::{composite, train_integration_teacher, IntegrationTeacher, TeacherConfig};
