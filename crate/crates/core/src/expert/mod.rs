//! Expert demonstrations: optimal A* rollouts recorded as observation
//! sequences with every action and reward stripped.

mod astar;
mod demos;

pub use astar::astar_solve;
pub use demos::{
    generate_demonstrations, load_demos, load_demos_on_canvas, save_demos, DemoConfig, DemoHeader,
    DemoSet, MazeMeta, Trajectory, DEMO_SCHEMA_VERSION,
};
