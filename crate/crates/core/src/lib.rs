//! Geodesics of fractional Sobolev metrics on immersed loops and on circle
//! diffeomorphisms, discretized spectrally on odd periodic grids.
//!
//! The guide in `book/` walks through each module; its snippets are compiled
//! as doc-tests of this crate.

pub mod epdiff;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod geometry;
pub mod grid;
pub mod operator;
pub mod sample;
pub mod variation;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/loops.md")]
    mod loops {}
    #[doc = include_str!("../../../book/src/operator.md")]
    mod operator {}
    #[doc = include_str!("../../../book/src/variation.md")]
    mod variation {}
    #[doc = include_str!("../../../book/src/geodesics.md")]
    mod geodesics {}
    #[doc = include_str!("../../../book/src/epdiff.md")]
    mod epdiff {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
