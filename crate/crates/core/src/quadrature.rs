//! Composite Gauss–Legendre quadrature.

const NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// `int_a^b f` with `panels` five-point panels.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * width;
        let half = 0.5 * width;
        total += half
            * NODES
                .iter()
                .zip(WEIGHTS)
                .map(|(x, w)| w * f(mid + half * x))
                .sum::<f64>();
    }
    total
}

/// Fallible variant; stops at the first error.
pub fn try_gauss_legendre<E, F: FnMut(f64) -> Result<f64, E>>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
) -> Result<f64, E> {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut acc = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            acc += w * f(mid + half * x)?;
        }
        total += half * acc;
    }
    Ok(total)
}
