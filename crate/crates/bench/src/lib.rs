//! Fixtures shared by the benchmarks.

use risrelay_core::conic::{Affine, Concave, FeatureMatrix, Point, SubproblemSpec};
use risrelay_core::scenario::synthesize_trial;
use risrelay_core::{CMatrix, ChannelRealization, ScenarioConfig, C64};

/// Channel draw `trial` of the default scenario with `m` elements.
pub fn channel(m: usize, trial: u64) -> (ScenarioConfig, ChannelRealization) {
    let cfg = ScenarioConfig::default().with_elements(m);
    let ch = synthesize_trial(&cfg, trial).expect("default scenario is valid");
    (cfg, ch)
}

/// Max-cut style SDP on an `n x n` unit-diagonal block with a fixed dense
/// Hermitian cost, started at the identity.
pub fn maxcut(n: usize) -> (SubproblemSpec, Point) {
    let cost = CMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (i.min(j) as f64, i.max(j) as f64);
        let z = C64::new((a * b + 1.0).cos(), (a - b).sin());
        if i <= j {
            z
        } else {
            z.conj()
        }
    });
    let mut spec = SubproblemSpec::new();
    let block = spec.add_block(n, Some(vec![1.0; n]));
    let f = spec.add_feature(block, FeatureMatrix::Dense(cost));
    spec.objective = Concave::Affine(Affine::var(f));
    (
        spec,
        Point {
            blocks: vec![CMatrix::identity(n, n)],
            scalars: vec![],
        },
    )
}
