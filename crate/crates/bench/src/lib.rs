// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared fixtures for the benchmarks.

use facesteer_core::oracle::{make_world, OracleWorld};
use facesteer_core::{FeatureRegistry, LatentShape};

/// Default registry planted in the full `w+` dimension.
pub fn w_plus_world() -> (FeatureRegistry, OracleWorld) {
    let reg = FeatureRegistry::default();
    let world = make_world(&reg, LatentShape::W_PLUS.dim(), 80.0, 0.1, 0).expect("feasible world");
    (reg, world)
}

/// Default registry in a small latent space, suited to fitting benchmarks.
pub fn small_world(d: usize) -> (FeatureRegistry, OracleWorld) {
    let reg = FeatureRegistry::default();
    let world = make_world(&reg, d, 80.0, 0.1, 0).expect("feasible world");
    (reg, world)
}
