//! Central finite differences for verifying analytic gradients.

/// Central-difference estimate of `d f / d x_i` for every coordinate.
pub fn central_difference<F>(x: &[f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Like [`central_difference`], for piecewise-smooth functions. `f` returns
/// the value together with a pattern identifying the smooth piece it was
/// evaluated on (e.g. ReLU signs). Coordinates whose probes leave the base
/// piece are reported as `None`: the difference quotient straddles a kink
/// there and says nothing about the derivative.
pub fn central_difference_smooth<F>(x: &[f64], step: f64, mut f: F) -> Vec<Option<f64>>
where
    F: FnMut(&[f64]) -> (f64, Vec<bool>),
{
    let (_, base) = f(x);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let (up, up_pattern) = f(&probe);
            probe[i] = orig - step;
            let (down, down_pattern) = f(&probe);
            probe[i] = orig;
            (up_pattern == base && down_pattern == base).then(|| (up - down) / (2.0 * step))
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients from
/// producing spurious large ratios.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}
