//! Control barrier corridors: convex sets of safe goals for feedback control,
//! built from barrier functions, plus the simulation, mapping and planning
//! pieces needed to drive robots with them.

pub mod barriers;
pub mod control;
pub mod corridor;
pub mod geom;
pub mod pathfollow;
pub mod sim;
pub mod world;

pub use nalgebra;

pub use barriers::{Barrier, BarrierError, BarrierEval, BarrierFamily, BarrierRef, Convexity, PowerDistanceBarrier};
pub use control::{ControlError, LinearPlant, UnicyclePose};
pub use corridor::{CorridorError, CorridorParams};
pub use geom::{Aabb, Corridor, CorridorKind, Halfspace, Polygon};
pub use pathfollow::{ExploreConfig, ExploreError, ExploreLog, Path, PathError};
pub use sim::{Sample, SimConfig, SimError, System, Trajectory};
pub use world::{CellState, OccupancyGrid, WorldError};
