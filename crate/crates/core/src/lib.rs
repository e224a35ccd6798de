//! Parabolic p-Laplace evolution on weighted graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: weighted oriented graphs, incidence calculus, lattice boxes
//!   with halo metadata, exhaustion families and isoperimetric enumeration.
//! * [`operator`]: `g_p`, the Neumann and Dirichlet-truncated p-Laplacians and
//!   the p-energy.
//! * [`solver`]: explicit adaptive and implicit (proximal) time stepping,
//!   extinction detection, exhaustion runs and an exact linear reference.
//! * [`analysis`]: norms, exponent bookkeeping, inequality checks, decay and
//!   regularity diagnostics, and trajectory property reports.
//! * [`io`] and [`scenario`]: file formats and end-to-end scenario runs.

pub mod analysis;
pub mod graph;
pub mod io;
pub mod operator;
pub mod scenario;
pub mod solver;
