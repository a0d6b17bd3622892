//! Deinterleaving of aggregated request streams.
//!
//! A small number of users browse independently, each following a hidden
//! semi-Markov walk over pages (a page emits one request per time slot and is
//! held for a random dwell), and a turn process interleaves their requests
//! into one stream. This crate simulates such streams, recovers the hidden
//! structure exactly with a product-state Viterbi decoder, and learns the
//! active-user labeling directly from data with a from-scratch LSTM.

pub mod ahmm;
pub mod harness;
pub mod interleave;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod rnn;
pub mod synth;
