//! Value functions and losses.
