//! Simulated panoramic sensing: 12 sector cameras with depth rays, human
//! detection, back-projection and window collection.

pub mod camera;
pub mod features;
pub mod observe;
pub mod window;

pub use camera::{backproject, project, CameraIntrinsics};
pub use features::{static_sector_feature, StaticChannels, STATIC_DIM};
pub use observe::{observe, HumanDetection, ObserveContext, PanoramicObservation, PixelKeypoint, SectorObservation};
pub use window::{collect_window, ObservationWindow, Track, TrackFrame, WindowOptions};
