//! Seeded initial data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{l2_norm, Domain1D};
use crate::error::{Error, Result};
use crate::lebesgue::NodalField;

/// Independent generator for ensemble member `member` under `seed`.
pub fn member_rng(seed: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    rng
}

/// Σ_{m ≤ modes} c_m sin(mπx) with c_m uniform in [−1/m, 1/m], rescaled to ‖u‖_H = `radius`.
///
/// The coefficients do not depend on the grid, so the same seed gives the same
/// continuous profile at every resolution.
pub fn smooth_random_field(dom: &Domain1D, modes: usize, radius: f64, rng: &mut impl Rng) -> Result<NodalField> {
    if modes == 0 {
        return Err(Error::DegenerateInput("need at least one mode".into()));
    }
    let coeffs: Vec<f64> = (1..=modes)
        .map(|m| rng.random_range(-1.0..1.0) / m as f64)
        .collect();
    let pi = std::f64::consts::PI;
    let u = NodalField::from_fn(dom, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| c * ((m + 1) as f64 * pi * x).sin())
            .sum()
    });
    let n = l2_norm(&u, dom.weights())?;
    if n == 0.0 {
        return Err(Error::DegenerateInput("random profile vanished".into()));
    }
    let mut u = u.scaled(radius / n);
    let last = u.len() - 1;
    u.values_mut()[0] = 0.0;
    u.values_mut()[last] = 0.0;
    Ok(u)
}

/// Uniform nodal values in [−R, R] with zero boundary, smoothed once by a (1, 2, 1)/4 average.
pub fn ensemble_field(dom: &Domain1D, radius: f64, rng: &mut impl Rng) -> NodalField {
    let n = dom.node_count();
    let mut raw: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..=radius)).collect();
    raw[0] = 0.0;
    raw[n - 1] = 0.0;
    let mut out = vec![0.0; n];
    for k in 1..n - 1 {
        out[k] = 0.25 * (raw[k - 1] + 2.0 * raw[k] + raw[k + 1]);
    }
    NodalField::new(dom, out).expect("length matches")
}
