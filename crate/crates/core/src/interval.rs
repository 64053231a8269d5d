use crate::error::{Error, Result};

/// A symmetric interval `[center - half_width, center + half_width]`.
///
/// `half_width` may be `+∞`, in which case the interval is the whole line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    center: f64,
    half_width: f64,
}

impl PredictionInterval {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::invalid(format!("interval center {center} is not finite")));
        }
        if half_width.is_nan() || half_width < 0.0 {
            return Err(Error::invalid(format!(
                "interval half-width {half_width} must be nonnegative"
            )));
        }
        Ok(Self { center, half_width })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower() <= y && y <= self.upper()
    }

    pub fn is_unbounded(&self) -> bool {
        self.half_width.is_infinite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_ordered() {
        let iv = PredictionInterval::new(1.0, 2.0).unwrap();
        assert_eq!((iv.lower(), iv.upper()), (-1.0, 3.0));
        assert!(iv.lower() <= iv.center() && iv.center() <= iv.upper());
        assert!(iv.contains(3.0) && !iv.contains(3.0001));
    }

    #[test]
    fn infinite_width_covers_everything() {
        let iv = PredictionInterval::new(0.0, f64::INFINITY).unwrap();
        assert!(iv.contains(1e300) && iv.contains(-1e300));
        assert!(iv.is_unbounded());
    }

    #[test]
    fn negative_or_nan_width_rejected() {
        assert!(PredictionInterval::new(0.0, -1.0).is_err());
        assert!(PredictionInterval::new(0.0, f64::NAN).is_err());
        assert!(PredictionInterval::new(f64::INFINITY, 1.0).is_err());
    }
}
