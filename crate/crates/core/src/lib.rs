//! Rate-splitting multiple access for panoramic video semantic streams:
//! channel model, multi-user rates, field-of-view maps, spherical quality
//! metrics, QoS scoring, the resource-allocation environment and a
//! recurrent PPO agent.

pub mod channel;
pub mod env;
pub mod experiment;
pub mod fov;
pub mod frame;
pub mod grid;
pub mod metrics;
pub mod qos;
pub mod quality;
pub mod rl;
pub mod rsma;
pub mod util;
