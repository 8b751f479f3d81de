//! Fixed-point problems in residual form.
//!
//! Every problem is represented by a residual operator `T` with `T(x) = 0` at
//! the solution. Problems stated as `x = S(x)` go through
//! [`from_fixed_point_form`], which wraps `S` into `T(x) = x - S(x)`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::dense::first_non_finite;
use crate::error::{AapError, Result};

/// A residual operator over `R^n`.
///
/// Implementations must be deterministic and re-entrant: the solver may call
/// `eval` from several threads on the same object.
pub trait Residual: Send + Sync {
    /// Writes `T(x)` into `out`. Both slices have the problem dimension.
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// Adapter turning a closure `(x, out)` into a [`Residual`].
pub struct FnResidual<F>(pub F);

impl<F> Residual for FnResidual<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.0)(x, out)
    }
}

/// Named, contiguous index ranges covering `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldLayout {
    fields: Vec<(String, Range<usize>)>,
}

impl FieldLayout {
    /// Validates that the ranges are non-empty, sorted, disjoint and cover `[0, n)`.
    pub fn new<S: Into<String>>(n: usize, fields: Vec<(S, Range<usize>)>) -> Result<Self> {
        let fields: Vec<(String, Range<usize>)> =
            fields.into_iter().map(|(s, r)| (s.into(), r)).collect();
        if fields.is_empty() {
            return Err(AapError::InvalidLayout("no fields".into()));
        }
        let mut next = 0;
        for (name, r) in &fields {
            if r.start != next {
                return Err(AapError::InvalidLayout(format!(
                    "field `{name}` starts at {} but the previous range ends at {next}",
                    r.start
                )));
            }
            if r.end <= r.start {
                return Err(AapError::InvalidLayout(format!("field `{name}` is empty")));
            }
            next = r.end;
        }
        if next != n {
            return Err(AapError::InvalidLayout(format!(
                "fields cover [0, {next}) but the dimension is {n}"
            )));
        }
        for (i, (a, _)) in fields.iter().enumerate() {
            if fields[..i].iter().any(|(b, _)| b == a) {
                return Err(AapError::InvalidLayout(format!("duplicate field `{a}`")));
            }
        }
        Ok(Self { fields })
    }

    /// Single field spanning all `n` unknowns.
    pub fn single(name: &str, n: usize) -> Self {
        Self {
            fields: vec![(name.to_string(), 0..n)],
        }
    }

    pub fn fields(&self) -> &[(String, Range<usize>)] {
        &self.fields
    }

    pub fn names(&self) -> Vec<String> {
        self.fields.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| AapError::UnknownField {
                name: name.to_string(),
                valid: self.names(),
            })
    }

    pub fn dim(&self) -> usize {
        self.fields.last().map_or(0, |(_, r)| r.end)
    }
}

/// A fixed-point problem `T(x) = 0` plus the metadata the solver and the
/// experiment driver need.
#[derive(Clone)]
pub struct FixedPointProblem {
    name: String,
    dim: usize,
    residual: Arc<dyn Residual>,
    layout: FieldLayout,
    recommended_omega: f64,
    recommended_window: usize,
    initial_guess: Option<Arc<[f64]>>,
}

impl fmt::Debug for FixedPointProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FixedPointProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("layout", &self.layout)
            .field("recommended_omega", &self.recommended_omega)
            .field("recommended_window", &self.recommended_window)
            .finish_non_exhaustive()
    }
}

impl FixedPointProblem {
    pub fn new(
        name: impl Into<String>,
        residual: Arc<dyn Residual>,
        layout: FieldLayout,
    ) -> Self {
        Self {
            name: name.into(),
            dim: layout.dim(),
            residual,
            layout,
            recommended_omega: 1.0,
            recommended_window: 10,
            initial_guess: None,
        }
    }

    /// Convenience constructor for a closure residual over a single field `x`.
    pub fn from_fn<F>(name: impl Into<String>, n: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(name, Arc::new(FnResidual(f)), FieldLayout::single("x", n))
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        assert!(omega > 0.0 && omega.is_finite(), "omega must be positive");
        self.recommended_omega = omega;
        self
    }

    pub fn with_window(mut self, m: usize) -> Self {
        assert!(m >= 1, "window must be positive");
        self.recommended_window = m;
        self
    }

    pub fn with_initial_guess(mut self, x0: Vec<f64>) -> Self {
        assert_eq!(x0.len(), self.dim);
        self.initial_guess = Some(x0.into());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }

    pub fn recommended_omega(&self) -> f64 {
        self.recommended_omega
    }

    pub fn recommended_window(&self) -> usize {
        self.recommended_window
    }

    /// Problem-supplied starting point, zeros otherwise.
    pub fn initial_guess(&self) -> Vec<f64> {
        match &self.initial_guess {
            Some(x0) => x0.to_vec(),
            None => vec![0.0; self.dim],
        }
    }

    /// Allocation-free residual evaluation with finiteness checks on both
    /// input and output.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(AapError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if out.len() != self.dim {
            return Err(AapError::DimensionMismatch {
                expected: self.dim,
                got: out.len(),
            });
        }
        if let Some(index) = first_non_finite(x) {
            return Err(AapError::NumericalBreakdown { index });
        }
        self.residual.eval(x, out);
        match first_non_finite(out) {
            Some(index) => Err(AapError::NumericalBreakdown { index }),
            None => Ok(()),
        }
    }

    /// Indices of a named field.
    pub fn field_indices(&self, field: &str) -> Result<Range<usize>> {
        self.layout.range(field)
    }
}

/// `f = T(x)`.
pub fn evaluate_residual(problem: &FixedPointProblem, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; problem.dim()];
    problem.evaluate_into(x, &mut out)?;
    Ok(out)
}

/// Returns the index range registered for `field`.
pub fn field_indices(problem: &FixedPointProblem, field: &str) -> Result<Range<usize>> {
    problem.field_indices(field)
}

struct FixedPointForm<S>(S);

impl<S> Residual for FixedPointForm<S>
where
    S: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        // g = S(x) first, then f = x - g
        (self.0)(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi - *o;
        }
    }
}

/// Wraps a fixed-point map `S` (written as `S(x, out)`) into the residual
/// `T(x) = x - S(x)`.
pub fn from_fixed_point_form<S>(
    name: impl Into<String>,
    map: S,
    layout: FieldLayout,
) -> FixedPointProblem
where
    S: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
{
    FixedPointProblem::new(name, Arc::new(FixedPointForm(map)), layout)
}
