//! Toy bidomain model: extracellular and intracellular potentials on an
//! `N x N` node grid of the unit square with insulated (Neumann) walls, one
//! implicit Euler step of length `dt` from rest.
//!
//! With `v = u_e - u_i`, graph Laplacian `L` (row sums zero) and
//! `a = h^2 / dt`:
//!
//! ```text
//! F_e = a v + D_e L u_e + h^2 (I_ion(v) - I_app)
//! F_i = -a v + D_i L u_i - h^2 (I_ion(v) - I_app)
//! ```
//!
//! `I_ion(v) = c v (v - v_th) (v - 1)` is a cubic excitable current and
//! `I_app` a constant stimulus on a corner patch. The residual is
//! `T = (F_e, F_i)` (no preconditioner), so `sum(T) = 0` for every input and
//! the common constant mode is never excited from a zero start.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AapError, Result};
use crate::fixed_point::{FieldLayout, FixedPointProblem, Residual};

use super::sparse::CsrMatrix;
use super::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidomainParams {
    pub extracellular_diffusion: f64,
    pub intracellular_diffusion: f64,
    pub dt: f64,
    /// Scale `c` of the cubic ionic current.
    pub ionic_scale: f64,
    /// Threshold `v_th` of the cubic ionic current.
    pub ionic_threshold: f64,
    pub stimulus: f64,
    /// Stimulus acts on `[0, extent]^2`.
    pub stimulus_extent: f64,
}

impl Default for BidomainParams {
    fn default() -> Self {
        Self {
            extracellular_diffusion: 0.12,
            intracellular_diffusion: 0.08,
            dt: 0.01,
            ionic_scale: 8.0,
            ionic_threshold: 0.1,
            stimulus: 50.0,
            stimulus_extent: 0.25,
        }
    }
}

impl BidomainParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("extracellular_diffusion", self.extracellular_diffusion),
            ("intracellular_diffusion", self.intracellular_diffusion),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AapError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("ionic_scale", self.ionic_scale),
            ("ionic_threshold", self.ionic_threshold),
            ("stimulus", self.stimulus),
            ("stimulus_extent", self.stimulus_extent),
        ] {
            if !v.is_finite() {
                return Err(AapError::InvalidConfig(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn ionic_current(&self, v: f64) -> f64 {
        self.ionic_scale * v * (v - self.ionic_threshold) * (v - 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct BidomainToy {
    grid: GridSpec,
    params: BidomainParams,
    nodes: usize,
    laplacian: CsrMatrix,
    stimulus: Vec<f64>,
}

impl BidomainToy {
    pub fn new(grid: GridSpec, params: BidomainParams) -> Result<Self> {
        if grid.dims() != 2 {
            return Err(AapError::InvalidConfig("bidomain problem is two-dimensional".into()));
        }
        params.validate()?;
        let n = grid.points();
        let nodes = n * n;
        let mut t = Vec::new();
        // Graph Laplacian: the stencil with every missing neighbour removed
        // from the diagonal.
        super::stencil_block(&mut t, 0, n, n, -1.0, -1.0);
        let laplacian = CsrMatrix::from_triplets(nodes, nodes, t);
        let h = grid.h();
        let mut stimulus = vec![0.0; nodes];
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (i as f64 * h, j as f64 * h);
                if x <= params.stimulus_extent + 1e-12 && y <= params.stimulus_extent + 1e-12 {
                    stimulus[j * n + i] = params.stimulus;
                }
            }
        }
        Ok(Self {
            grid,
            params,
            nodes,
            laplacian,
            stimulus,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.nodes
    }

    pub fn params(&self) -> &BidomainParams {
        &self.params
    }

    /// Neumann graph Laplacian (no `1/h^2`).
    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    pub fn stimulus(&self) -> &[f64] {
        &self.stimulus
    }

    /// Gershgorin bound on the Jacobian spectrum for `|v| <= 2`.
    pub fn jacobian_bound(&self) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        let a = h2 / self.params.dt;
        let c = self.params.ionic_scale.abs();
        let th = self.params.ionic_threshold.abs();
        let ionic = c * (12.0 + 4.0 * (1.0 + th) + th);
        let d = self.params.extracellular_diffusion.max(self.params.intracellular_diffusion);
        2.0 * (a + h2 * ionic) + 8.0 * d
    }

    pub fn into_problem(self) -> FixedPointProblem {
        let n = self.dim();
        let omega = 1.0 / self.jacobian_bound();
        let layout = FieldLayout::new(n, vec![("extracellular", 0..n / 2), ("intracellular", n / 2..n)])
            .expect("bidomain layout is contiguous");
        FixedPointProblem::new("bidomain", Arc::new(self), layout)
            .with_omega(omega)
            .with_window(50)
    }
}

impl Residual for BidomainToy {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let nn = self.nodes;
        let (ue, ui) = x.split_at(nn);
        let (fe, fi) = out.split_at_mut(nn);
        self.laplacian.matvec_into(ue, fe);
        self.laplacian.matvec_into(ui, fi);
        let h2 = self.grid.h() * self.grid.h();
        let a = h2 / self.params.dt;
        let (de, di) = (self.params.extracellular_diffusion, self.params.intracellular_diffusion);
        for p in 0..nn {
            let v = ue[p] - ui[p];
            let src = a * v + h2 * (self.params.ionic_current(v) - self.stimulus[p]);
            fe[p] = de * fe[p] + src;
            fi[p] = di * fi[p] - src;
        }
    }
}

/// Bidomain toy with default physiology and the given time step.
pub fn make_bidomain_toy(grid: GridSpec, dt: f64) -> Result<FixedPointProblem> {
    let params = BidomainParams {
        dt,
        ..BidomainParams::default()
    };
    Ok(BidomainToy::new(grid, params)?.into_problem())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::norm2;
    use nalgebra::DMatrix;

    /// Independent dense assembly straight from the node neighbourhoods.
    fn dense_residual(toy: &BidomainToy, x: &[f64]) -> Vec<f64> {
        let n = toy.grid.points();
        let nn = n * n;
        let h = toy.grid.h();
        let pr = &toy.params;
        let mut out = vec![0.0; 2 * nn];
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                let mut lap_e = 0.0;
                let mut lap_i = 0.0;
                let nbs = [
                    (i as i64 - 1, j as i64),
                    (i as i64 + 1, j as i64),
                    (i as i64, j as i64 - 1),
                    (i as i64, j as i64 + 1),
                ];
                for (a, b) in nbs {
                    if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                        continue;
                    }
                    let q = b as usize * n + a as usize;
                    lap_e += x[p] - x[q];
                    lap_i += x[nn + p] - x[nn + q];
                }
                let v = x[p] - x[nn + p];
                let (xc, yc) = (i as f64 * h, j as f64 * h);
                let iapp = if xc <= 0.25 && yc <= 0.25 { pr.stimulus } else { 0.0 };
                let ion = pr.ionic_scale * v * (v - pr.ionic_threshold) * (v - 1.0);
                out[p] = h * h * v / pr.dt + pr.extracellular_diffusion * lap_e + h * h * (ion - iapp);
                out[nn + p] = -h * h * v / pr.dt + pr.intracellular_diffusion * lap_i - h * h * (ion - iapp);
            }
        }
        out
    }

    fn sample(n: usize) -> Vec<f64> {
        (0..n).map(|k| ((k * 7 % 13) as f64 * 0.37).sin()).collect()
    }

    #[test]
    fn matches_dense_assembly() {
        let toy = BidomainToy::new(GridSpec::square(7).unwrap(), BidomainParams::default()).unwrap();
        let x = sample(toy.dim());
        let expected = dense_residual(&toy, &x);
        let p = toy.into_problem();
        let mut out = vec![0.0; p.dim()];
        p.evaluate_into(&x, &mut out).unwrap();
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_components_sum_to_zero() {
        let p = make_bidomain_toy(GridSpec::square(9).unwrap(), 0.01).unwrap();
        let x = sample(p.dim());
        let mut out = vec![0.0; p.dim()];
        p.evaluate_into(&x, &mut out).unwrap();
        assert!(out.iter().sum::<f64>().abs() < 1e-10);
        assert_eq!(p.recommended_window(), 50);
    }

    #[test]
    fn graph_laplacian_is_symmetric_with_zero_row_sums() {
        let toy = BidomainToy::new(GridSpec::square(6).unwrap(), BidomainParams::default()).unwrap();
        let l = toy.laplacian().to_dense();
        let d = DMatrix::from_column_slice(36, 36, l.as_slice());
        assert_eq!(d, d.transpose());
        for r in 0..36 {
            assert!(d.row(r).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn swapping_potentials_with_linear_kinetics() {
        // With equal diffusivities, no stimulus and no ionic current,
        // exchanging u_e and u_i exchanges the two residual blocks.
        let params = BidomainParams {
            intracellular_diffusion: 0.12,
            ionic_scale: 0.0,
            stimulus: 0.0,
            ..BidomainParams::default()
        };
        let p = BidomainToy::new(GridSpec::square(6).unwrap(), params).unwrap().into_problem();
        let n = p.dim();
        let x = sample(n);
        let mut swapped = x[n / 2..].to_vec();
        swapped.extend_from_slice(&x[..n / 2]);
        let mut f = vec![0.0; n];
        let mut fs = vec![0.0; n];
        p.evaluate_into(&x, &mut f).unwrap();
        p.evaluate_into(&swapped, &mut fs).unwrap();
        for k in 0..n / 2 {
            assert!((fs[k] - f[n / 2 + k]).abs() < 1e-13);
            assert!((fs[n / 2 + k] - f[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn swapping_potentials_with_cubic_kinetics() {
        // With the cubic current the exchange leaves a known defect,
        // h^2 (I(v) + I(-v)) per node, which is what the closed form gives.
        let toy = BidomainToy::new(
            GridSpec::square(5).unwrap(),
            BidomainParams {
                intracellular_diffusion: 0.12,
                stimulus: 0.0,
                ..BidomainParams::default()
            },
        )
        .unwrap();
        let h2 = toy.grid.h().powi(2);
        let pr = toy.params.clone();
        let p = toy.into_problem();
        let n = p.dim();
        let x = sample(n);
        let mut swapped = x[n / 2..].to_vec();
        swapped.extend_from_slice(&x[..n / 2]);
        let mut f = vec![0.0; n];
        let mut fs = vec![0.0; n];
        p.evaluate_into(&x, &mut f).unwrap();
        p.evaluate_into(&swapped, &mut fs).unwrap();
        for k in 0..n / 2 {
            let v = x[k] - x[n / 2 + k];
            let defect = h2 * (pr.ionic_current(v) + pr.ionic_current(-v));
            assert!((fs[k] - f[n / 2 + k] - defect).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_at_rest_is_the_stimulus() {
        let p = make_bidomain_toy(GridSpec::square(9).unwrap(), 0.01).unwrap();
        let mut out = vec![0.0; p.dim()];
        p.evaluate_into(&vec![0.0; p.dim()], &mut out).unwrap();
        assert!(norm2(&out) > 0.0);
        let h2 = (1.0f64 / 8.0).powi(2);
        assert!((out[0] + h2 * 50.0).abs() < 1e-12);
        assert!((out[81] - h2 * 50.0).abs() < 1e-12);
    }
}
