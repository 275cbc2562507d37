//! Kirchhoff-Plateau problem: elastic closed rods with a soap film spanning
//! their midline, discretized as piecewise-constant frame densities and a
//! triangulated film.

pub mod energy;
pub mod error;
pub mod film;
pub mod geom;
pub mod presets;
pub mod rod;
pub mod scalar;
pub mod solver;
pub mod topology;

pub use energy::{EnergyBreakdown, MaterialParams};
pub use error::{KpError, Result};
pub use film::{FilmMesh, RelaxOptions, RelaxReport};
pub use geom::{Mat3, Vec3};
pub use rod::{ClampingParams, CrossSection, FramedCurve, RodDensities, RodState, TubeMesh};
pub use scalar::Real;
pub use solver::{ConstraintSpec, KPReport, SolveOptions};
pub use topology::{LinkSpec, TestLoop};

/// `f64` instances of the generic types.
pub mod f64_types {
    pub type Vec3 = crate::geom::Vec3<f64>;
    pub type RodDensities = crate::rod::RodDensities<f64>;
    pub type RodState = crate::rod::RodState<f64>;
    pub type ClampingParams = crate::rod::ClampingParams<f64>;
    pub type CrossSection = crate::rod::CrossSection<f64>;
    pub type FramedCurve = crate::rod::FramedCurve<f64>;
    pub type TubeMesh = crate::rod::TubeMesh<f64>;
    pub type FilmMesh = crate::film::FilmMesh<f64>;
    pub type MaterialParams = crate::energy::MaterialParams<f64>;
    pub type EnergyBreakdown = crate::energy::EnergyBreakdown<f64>;
    pub type TestLoop = crate::topology::TestLoop<f64>;
    pub type ConstraintSpec = crate::solver::ConstraintSpec<f64>;
    pub type KPReport = crate::solver::KPReport<f64>;
}
