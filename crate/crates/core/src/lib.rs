//! Numerical laboratory for 2x2 matrix-A2 weights: builds a self-similar
//! counterexample weight family, evaluates the dyadic operators whose norms
//! grow like Q^{3/2} on it, computes exact Hilbert-transform pairings on the
//! line and circle, and remodels dyadic weights into classical-A2 ones while
//! tracking the characteristic.
//!
//! The crate is organized around the pipeline of the experiments:
//!
//! * [`scaled`] — mantissa/exponent arithmetic for quantities growing like
//!   r^n over thousands of generations;
//! * [`mat2`] — closed-form symmetric 2x2 spectral algebra;
//! * [`dyadic`] — dyadic intervals, piecewise-constant functions, Haar
//!   analysis;
//! * [`forge`] — the rotation/stretching construction of the weight family;
//! * [`operators`] — paraproducts, Haar shifts, quadratic-form evaluators;
//! * [`hilbert`] — line and circle Hilbert pairings and the structural
//!   constants;
//! * [`remodel`] — (quasi-)periodization, remodeling, strong dyadic A2;
//! * [`experiment`] — the declarative experiment runner behind the `lab`
//!   binary.

pub mod dyadic;
pub mod experiment;
pub mod forge;
pub mod hilbert;
pub mod mat2;
pub mod operators;
pub mod remodel;
pub mod scaled;

pub use dyadic::{CellValue, DyadicInterval, PiecewiseFn};
pub use experiment::{fit_exponent, run, ExperimentResult, ExperimentSpec};
pub use forge::{ConstructionParams, WeightModel};
pub use hilbert::{compute_constants, pairing_circle, pairing_line, KernelConstants};
pub use mat2::{a2_pair_char, loewner_leq, terminal_children, Spectral2, SymMat2, Vec2};
pub use operators::{
    apply_paraproduct, pi_quadratic_bruteforce, pi_quadratic_fast, weighted_pairing, QuadraticFormReport,
    SparseFamily,
};
pub use remodel::{iterated_qp, periodize, quasi_periodize, remodel_weights, strong_dyadic_a2, FrequencyVector};
pub use scaled::Scaled;
