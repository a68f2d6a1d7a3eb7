pub mod algebroid;
pub mod chart;
pub mod dual;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod field;
pub mod holonomy;
pub mod linalg;
pub mod model;
pub mod obstruction;
pub mod poisson;
pub mod ruth;
pub mod split;

pub use algebroid::{
    bracket_sections, check_axioms, compare_algebroids, morphism_residual, AlgebroidMorphism, AxiomReport,
    FrameAlgebroid, LinearCoreSplit, MorphismReport,
};
pub use chart::ChartDomain;
pub use dual::{Dual, Scalar};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use linalg::Mat;
pub use split::{
    build_total_algebroid, compat_residuals, curvature, decompose_regular, path_regularity, shift_splitting,
    structural_degree_check, Bundle, CompatReport, ConventionSign, CurvatureField, DegreeReport, RegularDecomposition,
    SplitVBA, TypeLabel,
};
pub use holonomy::{
    holonomy_curvature_residual, pullback_sphere, sphere_morphism_residual, transport, ASphereFrame, ASpherePullback,
    FnPullback, HolonomyCurvatureReport, PullbackFamily, PullbackValues, SphereKind, SphereReport, TransportResult,
    TRANSPORT_CONVENTION,
};
pub use obstruction::{
    kernel_intersection_check, period, period_batch, verdict, BaseIntegrability, Decision, Generator, LatticeCheck,
    MonodromyEvidence, PeriodResult, Premises, Provenance, Verdict, VerdictOptions,
};
pub use poisson::{leaf_symplectic_area, mon_variation, AreaResult, LeafSphere, PoissonBivector};
pub use ruth::{
    differentiate_ruth, roundtrip_residual, ruth_axiom_residuals, vb_groupoid_from_ruth, Arrow, DifferentiatedRuth,
    PairGroupoid, RepUTHGroupoid, RuthAxiomReport, RuthConvention, VbArrow, VbGroupoid,
};
pub use model::{load_model, Model, BUILTIN_MODELS};
