//! Clamped uniform B-splines evaluated on a fixed parameter grid.

use crate::real::Real;

use super::SamplingError;

/// Basis values of a clamped uniform B-spline sampled at `samples` evenly
/// spaced parameters in [0, 1]. Row `i` holds the weights that turn control
/// points into the `i`-th sample.
#[derive(Clone, Debug)]
pub struct BSplineBasis<S: Real> {
    degree: usize,
    control_points: usize,
    samples: usize,
    weights: Vec<S>,
}

fn clamped_knots(n: usize, p: usize) -> Vec<f64> {
    let spans = (n - p) as f64;
    (0..n + p + 1)
        .map(|i| {
            if i <= p {
                0.0
            } else if i >= n {
                1.0
            } else {
                (i - p) as f64 / spans
            }
        })
        .collect()
}

/// All `n` basis functions of degree `p` at `u` (Cox–de Boor).
fn basis_at(knots: &[f64], n: usize, p: usize, u: f64) -> Vec<f64> {
    // Span index `s` with knots[s] <= u < knots[s+1]; the right end belongs to the last span.
    let s = if u >= 1.0 {
        n - 1
    } else {
        (p..n).rfind(|&i| knots[i] <= u).unwrap_or(p)
    };
    let mut b = vec![0.0; n + p];
    b[s] = 1.0;
    for d in 1..=p {
        for i in 0..(n + p - d) {
            let left = {
                let den = knots[i + d] - knots[i];
                if den > 0.0 {
                    (u - knots[i]) / den * b[i]
                } else {
                    0.0
                }
            };
            let right = {
                let den = knots[i + d + 1] - knots[i + 1];
                if den > 0.0 {
                    (knots[i + d + 1] - u) / den * b[i + 1]
                } else {
                    0.0
                }
            };
            b[i] = left + right;
        }
    }
    b.truncate(n);
    b
}

impl<S: Real> BSplineBasis<S> {
    pub fn new(
        degree: usize,
        control_points: usize,
        samples: usize,
    ) -> Result<Self, SamplingError> {
        if control_points == 0 || samples == 0 {
            return Err(SamplingError::InvalidConfig(
                "spline needs at least one control point and one sample".into(),
            ));
        }
        if degree >= control_points {
            return Err(SamplingError::InvalidConfig(format!(
                "spline degree {degree} must be below the knot count {control_points}"
            )));
        }
        let knots = clamped_knots(control_points, degree);
        let mut weights = Vec::with_capacity(samples * control_points);
        for i in 0..samples {
            let u = if samples == 1 {
                0.0
            } else {
                i as f64 / (samples - 1) as f64
            };
            weights.extend(
                basis_at(&knots, control_points, degree, u)
                    .into_iter()
                    .map(S::lit),
            );
        }
        Ok(Self {
            degree,
            control_points,
            samples,
            weights,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn control_points(&self) -> usize {
        self.control_points
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.weights[i * self.control_points..(i + 1) * self.control_points]
    }

    /// Samples the spline with the given control points into `out`.
    pub fn evaluate_into(&self, control: &[S], out: &mut [S]) {
        debug_assert_eq!(control.len(), self.control_points);
        for (i, o) in out.iter_mut().enumerate().take(self.samples) {
            *o = self.row(i).iter().zip(control).map(|(w, c)| *w * *c).sum();
        }
    }

    pub fn evaluate(&self, control: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.samples];
        self.evaluate_into(control, &mut out);
        out
    }
}
