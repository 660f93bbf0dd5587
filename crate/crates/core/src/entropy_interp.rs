//! Piecewise-linear view of the entropy histogram, giving a value and an
//! exact slope at any output z. The slope feeds the gradient proposal.

use thiserror::Error;

use crate::dos_histogram::DosHistogram;

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("interpolation needs at least 2 bins, got {0}")]
    Degenerate(usize),
}

/// Immutable snapshot of bin centers and entropy values, spanning every
/// preset bin (unvisited bins contribute s = 0, which steepens the slope
/// toward unexplored output regions).
#[derive(Debug, Clone)]
pub struct InterpView {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
}

impl InterpView {
    pub fn new(centers: Vec<f64>, values: Vec<f64>) -> Result<Self, InterpError> {
        if centers.len() < 2 || centers.len() != values.len() {
            return Err(InterpError::Degenerate(centers.len().min(values.len())));
        }
        debug_assert!(centers.windows(2).all(|w| w[0] < w[1]));
        Ok(InterpView { centers, values })
    }

    pub fn from_histogram(hist: &DosHistogram) -> Result<Self, InterpError> {
        let n = hist.spec.bin_count();
        let centers = (0..n).map(|b| hist.spec.center(b)).collect();
        Self::new(centers, hist.s.clone())
    }

    /// Linear interpolation between adjacent bin centers. Outside the knot
    /// range the boundary segment extrapolates; at an interior knot the
    /// right segment's slope is used.
    pub fn eval(&self, z: f64) -> (f64, f64) {
        let n = self.centers.len();
        // segment k spans centers[k]..centers[k+1]
        let k = match self.centers.partition_point(|&c| c <= z) {
            0 => 0,
            p if p >= n => n - 2,
            p => (p - 1).min(n - 2),
        };
        let (x0, x1) = (self.centers[k], self.centers[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let slope = (y1 - y0) / (x1 - x0);
        (y0 + slope * (z - x0), slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_segment() {
        let v = InterpView::new(vec![0.0, 1.0], vec![2.0, 4.0]).unwrap();
        let (val, slope) = v.eval(0.5);
        assert_eq!(val, 3.0);
        assert_eq!(slope, 2.0);
    }

    #[test]
    fn constant_histogram() {
        let v = InterpView::new(vec![0.0, 1.0, 2.0], vec![5.0, 5.0, 5.0]).unwrap();
        for z in [-3.0, 0.0, 0.7, 1.0, 2.0, 9.0] {
            let (val, slope) = v.eval(z);
            assert_eq!(val, 5.0);
            assert_eq!(slope, 0.0);
        }
    }

    #[test]
    fn left_extrapolation() {
        let v = InterpView::new(vec![0.0, 1.0], vec![2.0, 4.0]).unwrap();
        let (val, slope) = v.eval(-1.0);
        assert_eq!(val, 0.0);
        assert_eq!(slope, 2.0);
    }

    #[test]
    fn right_slope_at_knot() {
        let v = InterpView::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 5.0]).unwrap();
        let (val, slope) = v.eval(1.0);
        assert_eq!(val, 1.0);
        assert_eq!(slope, 4.0); // right segment
        let (_, last) = v.eval(2.0); // no right segment at the last knot
        assert_eq!(last, 4.0);
    }

    #[test]
    fn exact_at_centers() {
        let v = InterpView::new(vec![0.0, 1.0, 3.0], vec![1.0, -2.0, 0.5]).unwrap();
        for (c, s) in v.centers.iter().zip(v.values.iter()) {
            assert_eq!(v.eval(*c).0, *s);
        }
    }

    #[test]
    fn degenerate_view_rejected() {
        assert!(InterpView::new(vec![0.0], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn slope_matches_finite_difference(
            values in proptest::collection::vec(-10.0f64..10.0, 4..12),
            t in 0.01f64..0.99,
        ) {
            let centers: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
            let v = InterpView::new(centers, values).unwrap();
            let seg = v.centers.len() - 3;
            let z = v.centers[seg] + t;
            let (_, slope) = v.eval(z);
            let eps = 1e-6;
            let fd = (v.eval(z + eps).0 - v.eval(z - eps).0) / (2.0 * eps);
            prop_assert!((slope - fd).abs() < 1e-6);
        }

        #[test]
        fn value_continuous_at_knots(
            values in proptest::collection::vec(-10.0f64..10.0, 3..12),
            knot in 1usize..10,
        ) {
            let centers: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
            let v = InterpView::new(centers, values).unwrap();
            let k = knot.min(v.centers.len() - 2);
            let z = v.centers[k];
            let lo = v.eval(z - 1e-9).0;
            let hi = v.eval(z + 1e-9).0;
            prop_assert!((lo - hi).abs() < 1e-7);
        }
    }
}
