//! Matrix-valued finite-band Schrödinger potentials from band-edge data.
//!
//! A monic Herglotz seed `F(z)` with its roots in the spectral gaps fixes
//! the Dirichlet data; from it come the pencils `G_1`, `G_2`, `H`, the Weyl
//! matrices `M_pm`, and, through an autonomous flow in `x`, the potential
//! `Q(x) = F_1(x) - H_1(x)`. Every identity the construction rests on is
//! exposed as a residual so it can be checked numerically.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the coefficient recursions term by term.
#![allow(clippy::needless_range_loop)]

pub mod band;
pub mod config;
pub mod dirichlet;
pub mod error;
pub mod exec;
pub mod export;
pub mod flow;
pub mod kdv;
pub mod linalg;
pub mod operator;
pub mod pencil;
pub mod pipeline;

pub use band::{BandStructure, EdgeSeries, Side};
pub use config::{load_config, parse_config, RunConfig};
pub use dirichlet::{default_seed, extract_dirichlet, mixed_seed, DirichletSet};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use flow::{FlowConfig, FlowState, Trajectory};
pub use operator::{build_quadruple, HalfLine, OperatorData, WeylEvaluator};
pub use pencil::MatrixPencil;
pub use pipeline::{run_build, run_flow, verify_trajectory, RunReport};
