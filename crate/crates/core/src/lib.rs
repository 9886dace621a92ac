//! Robust direct aperture optimization for radiotherapy under breathing
//! motion: dose data, LP and MIP models, the CPG heuristic, a built-in solver
//! and plan evaluation.

pub mod config;
pub mod cpg;
pub mod dao;
pub mod dataset;
pub mod dose;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod lp_format;
pub mod model;
pub mod plan;
pub mod robust;
pub mod solver;
pub mod structures;
pub mod uncertainty;

pub use config::{Allocation, PlanningConfig, SymmetryMode, Variant};
pub use dose::DoseInfluenceTensor;
pub use error::{Axis, Error, Result};
pub use geometry::BeamGeometry;
pub use model::{LinearModel, RowFamily, Sense, VarKind, VarName};
pub use structures::{HealthyStructure, StructureSet};
pub use uncertainty::UncertaintySet;
pub use dao::{assemble, decode, size_only, ModelInstance, SizeReport, VarLayout};
pub use plan::{Aperture, FluencePlan};
pub use cpg::{canonical_order, generate_warm_start, run_cpg, CpgResult, CpgSurrogateResult};
pub use dataset::{generate_phantom, load_dataset, save_dataset, Dataset, PhantomSpec};
pub use evaluate::{dvh, evaluate_plan, normalize_plan, DvhCurve, EvaluationReport, NormalizationReference};
