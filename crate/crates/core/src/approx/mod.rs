//! Function approximators for state values and action values.
//!
//! [`TabularFn`] keys exact observations and is used wherever a test needs
//! closed-form answers; [`MlpFn`] is a small rectified-linear network with
//! hand-written backpropagation and an Adam optimizer.

mod gradcheck;
mod mlp;
mod snapshot;
mod tabular;

pub use gradcheck::{finite_diff_check, GradCheck};
pub use mlp::{Adam, MlpFn, Target, DEFAULT_HIDDEN};
pub use snapshot::{
    load_mlp, load_tabular, read_mlp, read_tabular, save_mlp, save_tabular, write_mlp,
    write_tabular, SNAPSHOT_SCHEMA_VERSION,
};
pub use tabular::TabularFn;
