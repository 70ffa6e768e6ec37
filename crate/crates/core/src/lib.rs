mod binio;
pub mod cmaes;
pub mod config;
pub mod dataset;
pub mod error;
pub mod nn;
pub mod planner;
pub mod primitives;
pub mod render;
pub mod rng;
pub mod sim;
pub mod wgan;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/primitives.md")]
    struct Primitives;
    #[doc = include_str!("../../../book/src/dataset.md")]
    struct Dataset;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/planning.md")]
    struct Planning;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    struct Reproducibility;
}
