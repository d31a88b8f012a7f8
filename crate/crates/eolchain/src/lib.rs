//! Reduction chain from END-OF-THE-LINE to approximate Nash equilibria of
//! polymatrix games, through Brouwer maps and generalized circuits.

pub mod endofline;
pub mod brouwer;
pub mod gcircuit;
pub mod gadgets;
pub mod fanout2;
pub mod brouwer2circuit;
pub mod games;
pub mod extensions;
pub mod pipeline;
