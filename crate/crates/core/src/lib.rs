//! Depth-to-image conversions for feature-based registration.
//!
//! Depth maps and organized point clouds are turned into 8-bit grayscale
//! images that expose local surface shape: Bearing-Angle images (one
//! neighbor direction at a time) and Flexion images (the dot product of two
//! local normals, invariant to sensor roll). Around the conversions sit the
//! sensor models, a median pre-filter, analytic scene rendering for tests,
//! dataset I/O and the ATE/RPE trajectory metrics.
//!
//! ```
//! use depth_flexion::{depth_to_point_grid, flexion_image, render_plane, FlexionVariant,
//!     PinholeIntrinsics, SensorModel};
//! use nalgebra::Vector3;
//!
//! let model: SensorModel = PinholeIntrinsics::new(50.0, 50.0, 15.5, 15.5, 32, 32)?.into();
//! let depth = render_plane(&model, Vector3::z(), 2.0)?;
//! let grid = depth_to_point_grid(&depth, &model)?;
//! let img = flexion_image(&grid, FlexionVariant::Standard { n: 3 }, 8)?;
//! assert_eq!(img.get(16, 16), 255);
//! # Ok::<(), depth_flexion::Error>(())
//! ```

// Range checks are written as `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bearing;
pub mod cli;
pub mod error;
pub mod filtering;
pub mod flexion;
pub mod geometry;
pub mod image;
pub mod io;
pub mod pipeline;
pub mod synth;
pub mod trajectory;

pub use bearing::{ba_image, bearing_angle, bearing_angles, BaDirection};
pub use error::{Error, Result};
pub use filtering::median_filter;
pub use flexion::{
    flexion_image, flexion_image_with, flexion_value, flexion_values, FlexionMapping,
    FlexionVariant,
};
pub use geometry::{
    depth_to_point_grid, DepthImage, DepthKind, PinholeIntrinsics, PointGrid, SensorModel,
    SphericalIntrinsics,
};
pub use image::{GrayImage, ScalarImage};
pub use pipeline::{convert, ConvertOptions, Method};
pub use synth::{render_plane, render_sphere, Scene, Surface};
pub use trajectory::{align_rigid, associate, ate_rmse, rpe_mean, Pose, RpeDelta, Trajectory};
