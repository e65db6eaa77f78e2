//! Iterative training loop.
