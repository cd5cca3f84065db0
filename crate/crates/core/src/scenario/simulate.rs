use std::sync::Arc;

use super::Scenario;
use crate::dataset::SimulatedDataset;
use crate::rng::{unit_f64, Domain, Stream};

/// Draw `n` independent rows: stratum from P(Z), then X | z, then Y | x, z.
///
/// Row `i` consumes exactly one Philox block at counter `[i, 0, 0, 0]` of the
/// simulation stream keyed by `seed`, so any row can be regenerated alone and
/// the output never depends on scheduling.
pub fn simulate(s: &Scenario, n: usize, seed: u64) -> SimulatedDataset {
    let stream = Stream::new(seed, Domain::Simulate);
    let mut cumulative = Vec::with_capacity(s.k());
    let mut acc = 0.0;
    for p in &s.p_z {
        acc += p;
        cumulative.push(acc);
    }

    let mut stratum = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let b = stream.block([i as u64, 0, 0, 0]);
        let u = unit_f64(b[0]);
        // First stratum whose cumulative mass exceeds u; the clamp absorbs a
        // total that rounds slightly below 1.
        let k = cumulative
            .partition_point(|&c| c <= u)
            .min(s.k() - 1);
        let xi = u8::from(unit_f64(b[1]) < s.p_x_given_z[k]);
        let yi = u8::from(unit_f64(b[2]) < s.p_y_given_xz[k][xi as usize]);
        stratum.push(k as u32);
        x.push(xi);
        y.push(yi);
    }
    SimulatedDataset::from_parts(
        Arc::new(s.confounder_names.clone()),
        Arc::new(s.strata.clone()),
        stratum,
        x,
        y,
        seed,
    )
}
