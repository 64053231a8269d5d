use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Linear representation `Φ(x) = phi · x` with the fixed all-ones last layer,
/// so `f̂(x) = Σ_j (phi · x)_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearIRMModel {
    phi: Array2<f64>,
    lambda: f64,
    /// Column sums of `phi`: the effective linear predictor.
    weights: Array1<f64>,
}

impl LinearIRMModel {
    pub fn new(phi: Array2<f64>, lambda: f64) -> Result<Self> {
        if phi.nrows() < 2 {
            return Err(Error::invalid(format!(
                "representation dimension must be ≥ 2, got {}",
                phi.nrows()
            )));
        }
        if phi.ncols() == 0 {
            return Err(Error::invalid("representation needs at least one input feature"));
        }
        if !phi.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("representation matrix has non-finite entries"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(format!("penalty weight {lambda} must be ≥ 0")));
        }
        let weights = phi.sum_axis(Axis(0));
        Ok(Self { phi, lambda, weights })
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The last layer `ω`, identically one.
    pub fn omega(&self) -> Array1<f64> {
        Array1::ones(self.repr_dim())
    }

    /// `ω · phi`, the coefficients of `f̂` on the raw features.
    pub fn effective_weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn repr_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.phi.clone(), lambda)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.input_dim() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "input has {len} features, model expects {}",
                self.input_dim()
            )))
        }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.weights.dot(&x))
    }

    pub fn represent(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dim(x.len())?;
        Ok(self.phi.dot(&x))
    }

    /// Predictions for every row of `features`.
    pub fn predict_rows(&self, features: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_dim(features.ncols())?;
        Ok(features.dot(&self.weights))
    }

    /// Representations for every row, `n × d`.
    pub fn represent_rows(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(features.ncols())?;
        Ok(features.dot(&self.phi.t()))
    }

    /// Text form: a `d p lambda` header, then `d` rows of `p` values.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.repr_dim(), self.input_dim(), self.lambda);
        for row in self.phi.rows() {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "empty model file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(source_name, hline, "header must be `d p lambda`"));
        }
        let parse_usize = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(source_name, hline, format!("`{s}` is not a dimension")))
        };
        let d = parse_usize(fields[0])?;
        let p = parse_usize(fields[1])?;
        let lambda: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(source_name, hline, format!("`{}` is not a number", fields[2])))?;

        let mut values = Vec::with_capacity(d * p);
        let mut rows = 0;
        for (line, l) in lines {
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(source_name, line, format!("`{v}` is not a number")))
                })
                .collect::<Result<_>>()?;
            if row.len() != p {
                return Err(Error::parse(
                    source_name,
                    line,
                    format!("expected {p} values, found {}", row.len()),
                ));
            }
            rows += 1;
            if rows > d {
                return Err(Error::parse(source_name, line, format!("more than {d} rows")));
            }
            values.extend(row);
        }
        if rows != d {
            return Err(Error::parse(
                source_name,
                hline,
                format!("header declares {d} rows, found {rows}"),
            ));
        }
        let phi = Array2::from_shape_vec((d, p), values).expect("shape checked");
        Self::new(phi, lambda)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn identity_representation() {
        let m = LinearIRMModel::new(Array2::eye(4), 0.0).unwrap();
        let x = Array1::ones(4);
        assert_eq!(m.predict(x.view()).unwrap(), 4.0);
        assert_eq!(m.represent(x.view()).unwrap(), x);
        assert_eq!(m.omega(), Array1::<f64>::ones(4));
    }

    #[test]
    fn zero_representation_predicts_zero() {
        let m = LinearIRMModel::new(Array2::zeros((3, 5)), 1.0).unwrap();
        assert_eq!(m.predict(array![1.0, -2.0, 3.0, 4.0, 5.0].view()).unwrap(), 0.0);
    }

    #[test]
    fn selector_rows() {
        let mut phi = Array2::zeros((2, 4));
        phi[[0, 0]] = 1.0;
        phi[[1, 1]] = 1.0;
        let m = LinearIRMModel::new(phi, 0.0).unwrap();
        assert_eq!(m.represent(array![3.0, 5.0, 0.0, 0.0].view()).unwrap(), array![3.0, 5.0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = LinearIRMModel::new(Array2::eye(3), 0.0).unwrap();
        assert!(m.predict(array![1.0, 2.0].view()).is_err());
        assert!(m.represent(array![1.0, 2.0, 3.0, 4.0].view()).is_err());
        assert!(LinearIRMModel::new(Array2::eye(1), 0.0).is_err());
        assert!(LinearIRMModel::new(Array2::eye(2), -1.0).is_err());
    }

    #[test]
    fn text_round_trip_and_validation() {
        let phi = array![[0.1, -2.5e-7, 3.0], [1.0 / 3.0, 0.0, -4.0]];
        let m = LinearIRMModel::new(phi, 1e4).unwrap();
        assert_eq!(LinearIRMModel::from_text(&m.to_text(), "m").unwrap(), m);
        assert!(LinearIRMModel::from_text("2 3 0\n1 2 3\n", "m").is_err());
        assert!(LinearIRMModel::from_text("2 3 0\n1 2 3\n1 2\n", "m").is_err());
        assert!(LinearIRMModel::from_text("2 2 0\n1 2\n1 x\n", "m").is_err());
        assert!(LinearIRMModel::from_text("2 2\n", "m").is_err());
    }

    proptest! {
        #[test]
        fn linear_and_consistent(
            phi in proptest::collection::vec(-3.0f64..3.0, 12),
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let m = LinearIRMModel::new(Array2::from_shape_vec((3, 4), phi).unwrap(), 0.0).unwrap();
            let (a, b) = (Array1::from(a), Array1::from(b));
            let sum = &a + &b;
            let lhs = m.predict(sum.view()).unwrap();
            let rhs = m.predict(a.view()).unwrap() + m.predict(b.view()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let r = m.represent(a.view()).unwrap().sum();
            let f = m.predict(a.view()).unwrap();
            prop_assert!((r - f).abs() <= 1e-12 * (1.0 + f.abs()));
        }
    }
}
