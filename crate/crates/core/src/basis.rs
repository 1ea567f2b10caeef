//! Second-order multivariate Chebyshev value models.
//!
//! Inputs are normalised as `z_j = (x_j - offset_j) / scale_j` and the feature vector is,
//! in this fixed order:
//!
//! 1. the constant `1`,
//! 2. the linear terms `z_1 .. z_n`,
//! 3. the squares `2 z_j^2 - 1` (Chebyshev `T_2`),
//! 4. the cross terms `z_i z_j` for `i < j` in lexicographic order.
//!
//! so `k = 1 + 2n + n(n-1)/2`. Evaluation is not clipped to `[-1, 1]^n`.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevBasis {
    offset: DVector<f64>,
    scale: DVector<f64>,
}

impl ChebyshevBasis {
    pub fn new(offset: DVector<f64>, scale: DVector<f64>) -> Result<Self> {
        if offset.len() != scale.len() || offset.is_empty() {
            return Err(Error::Dimension {
                what: "basis scale",
                expected: offset.len(),
                actual: scale.len(),
            });
        }
        if offset.iter().any(|o| !o.is_finite()) {
            return Err(Error::non_finite("basis offset"));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(
                "basis scale must be finite and positive".into(),
            ));
        }
        Ok(Self { offset, scale })
    }

    /// Basis that maps the box `[min, max]` onto `[-1, 1]^n`.
    pub fn from_bounds(min: &DVector<f64>, max: &DVector<f64>) -> Result<Self> {
        Self::new((min + max) * 0.5, (max - min) * 0.5)
    }

    pub fn state_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn num_features(&self) -> usize {
        num_features(self.state_dim())
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    fn normalise(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.offset).component_div(&self.scale)
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension {
                what: "basis input",
                expected: self.state_dim(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("basis input"));
        }
        Ok(())
    }

    pub fn features(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        let mut out = DVector::zeros(self.num_features());
        self.write_features(x, out.as_mut_slice());
        Ok(out)
    }

    /// Unchecked feature evaluation into a caller buffer of length `k`.
    pub(crate) fn write_features(&self, x: &DVector<f64>, out: &mut [f64]) {
        let n = self.state_dim();
        let z = self.normalise(x);
        out[0] = 1.0;
        for j in 0..n {
            out[1 + j] = z[j];
            out[1 + n + j] = 2.0 * z[j] * z[j] - 1.0;
        }
        let mut c = 1 + 2 * n;
        for a in 0..n {
            for b in a + 1..n {
                out[c] = z[a] * z[b];
                c += 1;
            }
        }
    }

    pub fn value(&self, coefficients: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        self.check_input(x)?;
        self.check_coefficients(coefficients)?;
        let mut phi = vec![0.0; self.num_features()];
        self.write_features(x, &mut phi);
        Ok(phi
            .iter()
            .zip(coefficients.iter())
            .map(|(p, a)| p * a)
            .sum())
    }

    /// Gradient with respect to the unnormalised state.
    pub fn gradient(&self, coefficients: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        self.check_coefficients(coefficients)?;
        let n = self.state_dim();
        let z = self.normalise(x);
        let a = coefficients;
        let mut g = DVector::from_fn(n, |j, _| a[1 + j] + 4.0 * z[j] * a[1 + n + j]);
        let mut c = 1 + 2 * n;
        for p in 0..n {
            for q in p + 1..n {
                g[p] += a[c] * z[q];
                g[q] += a[c] * z[p];
                c += 1;
            }
        }
        Ok(g.component_div(&self.scale))
    }

    fn check_coefficients(&self, coefficients: &DVector<f64>) -> Result<()> {
        if coefficients.len() != self.num_features() {
            return Err(Error::Dimension {
                what: "coefficients",
                expected: self.num_features(),
                actual: coefficients.len(),
            });
        }
        Ok(())
    }

    /// Column names in feature order: `const`, `z1`.., `t2_z1`.., `z1_z2`..
    pub fn feature_names(&self) -> Vec<String> {
        let n = self.state_dim();
        let mut names = vec!["const".to_string()];
        names.extend((1..=n).map(|j| format!("z{j}")));
        names.extend((1..=n).map(|j| format!("t2_z{j}")));
        for a in 1..=n {
            for b in a + 1..=n {
                names.push(format!("z{a}_z{b}"));
            }
        }
        names
    }
}

pub fn num_features(state_dim: usize) -> usize {
    1 + 2 * state_dim + state_dim * state_dim.saturating_sub(1) / 2
}

/// Per-time-step coefficient vectors over a shared basis. Index 0 is never fitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueModel {
    basis: ChebyshevBasis,
    coefficients: Vec<Option<DVector<f64>>>,
}

impl ValueModel {
    /// Empty model with slots for time indices `0..=steps`.
    pub fn new(basis: ChebyshevBasis, steps: usize) -> Self {
        Self {
            basis,
            coefficients: vec![None; steps + 1],
        }
    }

    pub fn basis(&self) -> &ChebyshevBasis {
        &self.basis
    }

    pub fn steps(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn set(&mut self, index: usize, alpha: DVector<f64>) -> Result<()> {
        if index >= self.coefficients.len() {
            return Err(Error::UndefinedTimeIndex(index));
        }
        self.basis.check_coefficients(&alpha)?;
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::non_finite(format!("coefficients at index {index}")));
        }
        self.coefficients[index] = Some(alpha);
        Ok(())
    }

    pub fn is_defined(&self, index: usize) -> bool {
        matches!(self.coefficients.get(index), Some(Some(_)))
    }

    /// Indices holding fitted coefficients.
    pub fn defined_mask(&self) -> Vec<bool> {
        self.coefficients.iter().map(Option::is_some).collect()
    }

    pub fn coefficients(&self, index: usize) -> Result<&DVector<f64>> {
        self.coefficients
            .get(index)
            .and_then(Option::as_ref)
            .ok_or(Error::UndefinedTimeIndex(index))
    }

    pub fn value(&self, index: usize, x: &DVector<f64>) -> Result<f64> {
        self.basis.value(self.coefficients(index)?, x)
    }

    pub fn gradient(&self, index: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.basis.gradient(self.coefficients(index)?, x)
    }

    /// CSV with header `index,<feature names>` and one row per defined time index.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string()];
        header.extend(self.basis.feature_names());
        w.write_record(&header)?;
        for (i, alpha) in self.coefficients.iter().enumerate() {
            if let Some(alpha) = alpha {
                let mut row = vec![i.to_string()];
                row.extend(alpha.iter().map(|a| format!("{a:e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`ValueModel::write_csv`]; the basis (normalisation) is supplied by the caller.
    pub fn read_csv<R: Read>(reader: R, basis: ChebyshevBasis, steps: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let expected = basis.feature_names();
        let header = r.headers()?.clone();
        if header.len() != expected.len() + 1
            || header
                .iter()
                .skip(1)
                .zip(expected.iter())
                .any(|(a, b)| a != b)
        {
            return Err(Error::Config(format!(
                "model CSV header does not match a {}-dimensional basis",
                basis.state_dim()
            )));
        }
        let mut model = ValueModel::new(basis, steps);
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number '{s}' in model CSV: {e}")))
            };
            let index = record[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad index in model CSV: {e}")))?;
            let alpha = record
                .iter()
                .skip(1)
                .map(parse)
                .collect::<Result<Vec<_>>>()?;
            model.set(index, DVector::from_vec(alpha))?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn unit(n: usize) -> ChebyshevBasis {
        ChebyshevBasis::new(DVector::zeros(n), DVector::from_element(n, 1.0)).unwrap()
    }

    #[test]
    fn feature_counts() {
        for (n, k) in [(1, 3), (2, 6), (4, 15), (8, 45)] {
            assert_eq!(num_features(n), k);
            assert_eq!(unit(n).num_features(), k);
            assert_eq!(unit(n).feature_names().len(), k);
        }
    }

    #[test]
    fn feature_values() {
        assert_eq!(unit(1).features(&v(&[0.0])).unwrap(), v(&[1.0, 0.0, -1.0]));
        assert_eq!(unit(1).features(&v(&[1.0])).unwrap(), v(&[1.0, 1.0, 1.0]));
        assert_eq!(
            unit(2).features(&v(&[0.5, -0.5])).unwrap(),
            v(&[1.0, 0.5, -0.5, -0.5, -0.5, -0.25])
        );
        assert_eq!(
            unit(3).feature_names(),
            ["const", "z1", "z2", "z3", "t2_z1", "t2_z2", "t2_z3", "z1_z2", "z1_z3", "z2_z3"]
        );
    }

    #[test]
    fn features_at_offset() {
        let basis = ChebyshevBasis::new(v(&[0.3, -2.0, 5.0]), v(&[1.0, 2.0, 0.5])).unwrap();
        let phi = basis.features(&v(&[0.3, -2.0, 5.0])).unwrap();
        assert_eq!(phi[0], 1.0);
        for j in 1..=3 {
            assert_eq!(phi[j], 0.0);
            assert_eq!(phi[3 + j], -1.0);
        }
        for j in 7..10 {
            assert_eq!(phi[j], 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let basis = unit(2);
        assert!(basis.features(&v(&[f64::NAN, 0.0])).is_err());
        assert!(basis.features(&v(&[0.0])).is_err());
        assert!(ChebyshevBasis::new(v(&[0.0]), v(&[0.0])).is_err());
        assert!(ChebyshevBasis::new(v(&[0.0]), v(&[-1.0])).is_err());
    }

    #[test]
    fn constant_and_linear_models() {
        let mut model = ValueModel::new(unit(3), 4);
        model
            .set(2, v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
            .unwrap();
        let x = v(&[0.4, -7.0, 2.0]);
        assert_eq!(model.value(2, &x).unwrap(), 1.0);
        assert_eq!(model.gradient(2, &x).unwrap(), DVector::zeros(3));

        let basis = ChebyshevBasis::new(v(&[0.0]), v(&[2.0])).unwrap();
        let mut model = ValueModel::new(basis, 1);
        model.set(1, v(&[0.0, 1.0, 0.0])).unwrap();
        for x in [-3.0, 0.0, 0.1, 10.0] {
            assert_eq!(model.gradient(1, &v(&[x])).unwrap(), v(&[0.5]));
        }
    }

    #[test]
    fn undefined_index_is_rejected() {
        let model = ValueModel::new(unit(1), 3);
        assert!(matches!(
            model.value(2, &v(&[0.0])),
            Err(Error::UndefinedTimeIndex(2))
        ));
        assert!(matches!(
            model.gradient(9, &v(&[0.0])),
            Err(Error::UndefinedTimeIndex(9))
        ));
        assert_eq!(model.defined_mask(), vec![false; 4]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 4, 8] {
            let offset = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let scale = DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0));
            let basis = ChebyshevBasis::new(offset, scale).unwrap();
            let k = basis.num_features();
            for _ in 0..100 {
                let alpha = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
                let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
                let g = basis.gradient(&alpha, &x).unwrap();
                let h = 1e-5;
                for j in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (basis.value(&alpha, &xp).unwrap()
                        - basis.value(&alpha, &xm).unwrap())
                        / (2.0 * h);
                    let tol = 1e-6 * fd.abs().max(1.0);
                    assert!((fd - g[j]).abs() < tol, "n={n} j={j}: {fd} vs {}", g[j]);
                }
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let basis = ChebyshevBasis::new(v(&[0.0, 1.0]), v(&[2.0, 0.5])).unwrap();
        let mut model = ValueModel::new(basis.clone(), 3);
        model
            .set(1, v(&[1.0, -2.0, 0.125, 3.5e-9, -1e12, 0.3]))
            .unwrap();
        model.set(3, v(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
        let mut buf = Vec::new();
        model.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,const,z1,z2,t2_z1,t2_z2,z1_z2\n"));
        let back = ValueModel::read_csv(buf.as_slice(), basis, 3).unwrap();
        assert_eq!(back, model);
        assert_abs_diff_eq!(
            back.value(1, &v(&[0.2, 0.9])).unwrap(),
            model.value(1, &v(&[0.2, 0.9])).unwrap()
        );
    }
}
