//! Numerical verification of Hardy and Rellich type inequalities with drift on
//! stratified groups.
//!
//! The crate is organised bottom-up: [`group`] describes the groups and their
//! horizontal frames, [`jet`] propagates exact derivatives, [`ops`] applies
//! horizontal operators, [`quadrature`] integrates over symmetric domains,
//! [`catalog`] evaluates each inequality as a report, [`sharpness`] approaches
//! the sharp constants, and [`runner`] drives batch experiments.

pub mod catalog;
pub mod field;
pub mod group;
pub mod identities;
pub mod integrals;
pub mod jet;
pub mod ops;
pub mod quadrature;
pub mod runner;
pub mod sampling;
pub mod sharpness;
