//! Central finite-difference gradient checking in double precision.

/// Largest relative error between `analytic` and central differences of `loss`
/// over every coordinate of `params`.
///
/// Relative error is `|fd − g| / max(|fd|, |g|, floor)`; the floor keeps exact
/// zeros from dividing by zero.
pub fn max_relative_error(
    params: &mut [f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len());
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let p0 = params[i];
        params[i] = p0 + h;
        let lp = loss(params);
        params[i] = p0 - h;
        let lm = loss(params);
        params[i] = p0;
        let fd = (lp - lm) / (2.0 * h);
        let g = analytic[i];
        let err = (fd - g).abs() / fd.abs().max(g.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
