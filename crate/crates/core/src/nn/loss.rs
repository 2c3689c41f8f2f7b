use super::scalar::Scalar;
use crate::{Error, Result};

/// Mean of squared elementwise differences.
pub fn mse<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.f64() - y.f64();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Gradient of [`mse`] with respect to `a`, scaled by `weight`.
pub fn mse_grad<T: Scalar>(a: &[T], b: &[T], weight: f64) -> Result<Vec<T>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let scale = T::of(2.0 * weight / a.len().max(1) as f64);
    Ok(a.iter().zip(b).map(|(&x, &y)| scale * (x - y)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(mse(&[0.5f64, 1.0], &[0.5, 1.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0f64, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((mse(&[1.0f64, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_checked() {
        let a = [0.1f64, -0.3, 2.0];
        let b = [1.0f64, 0.2, -0.5];
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert!(mse(&a, &b[..2]).is_err());
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let a = [0.1f64, -0.3, 2.0];
        let b = [1.0f64, 0.2, -0.5];
        let g = mse_grad(&a, &b, 1.0).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut ap = a;
            ap[i] += h;
            let mut am = a;
            am[i] -= h;
            let fd = (mse(&ap, &b).unwrap() - mse(&am, &b).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
