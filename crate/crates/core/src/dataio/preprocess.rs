//! Capture preprocessing: frame averaging and 2x2 binning.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Plane;

/// Per-pixel mean, accumulated in double precision.
pub fn frame_average<T: Scalar>(frames: &[Plane<T>]) -> Result<Plane<T>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::contract("frame_average needs at least one frame"))?;
    let (h, w) = first.dims();
    let mut acc = vec![0.0f64; h * w];
    for f in frames {
        first.check_same_dims(f)?;
        for (a, v) in acc.iter_mut().zip(f.data()) {
            *a += v.to_f64_lossy();
        }
    }
    let n = frames.len() as f64;
    Plane::new(h, w, acc.into_iter().map(|a| T::of(a / n)).collect())
}

/// Mean of each 2x2 block; output is half size in both directions.
pub fn bin2x2<T: Scalar>(plane: &Plane<T>) -> Result<Plane<T>> {
    let (h, w) = plane.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dimension(format!("2x2 binning needs even dimensions, got {h}x{w}")));
    }
    let q = T::of(0.25);
    Ok(Plane::from_fn(h / 2, w / 2, |y, x| {
        let (a, b) = (plane.row(2 * y), plane.row(2 * y + 1));
        (a[2 * x] + a[2 * x + 1] + b[2 * x] + b[2 * x + 1]) * q
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn averaging() {
        let a = Plane::filled(2, 2, 0.0f64);
        let b = Plane::filled(2, 2, 1.0f64);
        assert_eq!(frame_average(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(frame_average(&[a.clone(), b.clone()]).unwrap().data(), &[0.5; 4]);
        assert!(frame_average::<f64>(&[]).is_err());
        assert!(frame_average(&[a, Plane::zeros(2, 3)]).is_err());
    }

    #[test]
    fn binning() {
        let p = Plane::new(2, 2, vec![0.0f64, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(bin2x2(&p).unwrap().data(), &[0.5]);
        assert_eq!(bin2x2(&Plane::filled(4, 6, 0.3f64)).unwrap(), Plane::filled(2, 3, 0.3 * 4.0 * 0.25));
        assert!(bin2x2(&Plane::<f64>::zeros(3, 4)).is_err());

        // Dyadic values keep every partial sum exact.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p: Plane<f64> = Plane::from_fn(8, 10, |_, _| rng.random_range(0..1024) as f64 / 1024.0);
        assert_eq!(bin2x2(&p).unwrap().sum() * 4.0, p.sum());
    }
}
