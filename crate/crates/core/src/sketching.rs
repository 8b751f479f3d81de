//! Static field masks and the stability-guarded dynamic row mask.
//!
//! The static restriction picks one physical field once, at allocation time.
//! The dynamic restriction is recomputed at every mixing step: it proposes a
//! row subset of the (already field-restricted) least-squares system and keeps
//! it only if the relative size of the discarded residual entries stays below
//! the budget derived from the backward-stability bound.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::ColMatrix;
use crate::error::{AapError, Result};
use crate::fixed_point::FixedPointProblem;
use crate::lsq::estimate_sigma_min_into;

/// Default exponent of the power weight sequence `eta_j = j^exponent`.
pub const DEFAULT_ETA_EXPONENT: f64 = 1.1;

/// Strictly increasing index subset of `[0, source_dim)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskOperator {
    kept: Vec<usize>,
    source_dim: usize,
}

impl MaskOperator {
    pub fn identity(n: usize) -> Self {
        Self {
            kept: (0..n).collect(),
            source_dim: n,
        }
    }

    pub fn from_range(range: std::ops::Range<usize>, source_dim: usize) -> Result<Self> {
        Self::from_indices(range.collect(), source_dim)
    }

    pub fn from_indices(kept: Vec<usize>, source_dim: usize) -> Result<Self> {
        if kept.is_empty() {
            return Err(AapError::InvalidMask("mask keeps no index".into()));
        }
        if kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AapError::InvalidMask("indices must be strictly increasing".into()));
        }
        if *kept.last().unwrap() >= source_dim {
            return Err(AapError::InvalidMask(format!(
                "index {} out of range for dimension {source_dim}",
                kept.last().unwrap()
            )));
        }
        Ok(Self { kept, source_dim })
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn is_identity(&self) -> bool {
        self.kept.len() == self.source_dim
    }

    /// `Pi v`
    pub fn restrict(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.source_dim);
        self.kept.iter().map(|&i| v[i]).collect()
    }

    /// `Pi^T Pi v`: zeroes every entry outside the mask.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.source_dim);
        let mut out = vec![0.0; v.len()];
        for &i in &self.kept {
            out[i] = v[i];
        }
        out
    }

    /// Contiguous range if the mask is one.
    pub fn as_range(&self) -> Option<std::ops::Range<usize>> {
        let first = *self.kept.first()?;
        let last = *self.kept.last()?;
        (last - first + 1 == self.kept.len()).then_some(first..last + 1)
    }
}

/// Static mask for a named field, or the identity when `field` is `None`.
pub fn build_static_mask(problem: &FixedPointProblem, field: Option<&str>) -> Result<MaskOperator> {
    match field {
        None => Ok(MaskOperator::identity(problem.dim())),
        Some(name) => MaskOperator::from_range(problem.field_indices(name)?, problem.dim()),
    }
}

/// Weight sequence used in the stability budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EtaKind {
    Power,
    Constant,
}

/// Row selection rule for the dynamic mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    /// Largest-magnitude residual entries.
    Subselection,
    /// Uniform sample without replacement.
    Randomized,
}

/// The five adaptivity strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Adaptivity {
    #[default]
    None,
    SubselectPower,
    SubselectConstant,
    RandomizedPower,
    RandomizedConstant,
}

impl Adaptivity {
    pub const ALL: [Adaptivity; 5] = [
        Adaptivity::None,
        Adaptivity::SubselectPower,
        Adaptivity::SubselectConstant,
        Adaptivity::RandomizedPower,
        Adaptivity::RandomizedConstant,
    ];

    pub fn is_enabled(self) -> bool {
        self != Adaptivity::None
    }

    pub fn selection(self) -> Option<Selection> {
        match self {
            Adaptivity::None => None,
            Adaptivity::SubselectPower | Adaptivity::SubselectConstant => Some(Selection::Subselection),
            Adaptivity::RandomizedPower | Adaptivity::RandomizedConstant => Some(Selection::Randomized),
        }
    }

    pub fn eta_kind(self) -> EtaKind {
        match self {
            Adaptivity::SubselectPower | Adaptivity::RandomizedPower => EtaKind::Power,
            _ => EtaKind::Constant,
        }
    }

    /// Short CLI name.
    pub fn as_str(self) -> &'static str {
        match self {
            Adaptivity::None => "none",
            Adaptivity::SubselectPower => "sub-pow",
            Adaptivity::SubselectConstant => "sub-const",
            Adaptivity::RandomizedPower => "rand-pow",
            Adaptivity::RandomizedConstant => "rand-const",
        }
    }
}

impl fmt::Display for Adaptivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Adaptivity {
    type Err = AapError;
    fn from_str(s: &str) -> Result<Self> {
        Adaptivity::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| AapError::InvalidConfig(format!("unknown adaptivity strategy `{s}`")))
    }
}

/// `L_k = max(L_{k-1}, |df| / |dx|)`; a stagnating step (`|dx| = 0`) keeps
/// the previous estimate.
#[inline]
pub fn update_lipschitz(l_prev: f64, norm_df: f64, norm_dx: f64) -> f64 {
    if norm_dx == 0.0 {
        return l_prev;
    }
    l_prev.max(norm_df / norm_dx)
}

/// `eta_j` for `j >= 1`.
#[inline]
pub fn eta(j: usize, kind: EtaKind, exponent: f64) -> f64 {
    debug_assert!(j >= 1);
    match kind {
        EtaKind::Constant => 1.0,
        EtaKind::Power => (j as f64).powf(exponent),
    }
}

/// Result of the LHS budget estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhsEstimate {
    /// `None` when every column was skipped.
    pub value: Option<f64>,
    /// Columns skipped because `|dx_j| = 0`.
    pub skipped: usize,
    pub eta_sum: f64,
}

/// `max_j N eta_j sigma / (L |f| |dx_j|) - 1` over the window columns
/// (oldest is `j = 1`). With `strict` the minimum over `j` is used instead,
/// which is the form that makes the per-column hypothesis hold for every `j`.
///
/// The factor `N` rescales the plain 2-norms `|f|` and `|dx_j|` to the
/// dimension-normalised norms `|v|^2 = (1/N) sum v_i^2`.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_lhs(
    n: usize,
    sigma: f64,
    lipschitz: f64,
    norm_f: f64,
    dx_norms: &[f64],
    kind: EtaKind,
    exponent: f64,
    strict: bool,
) -> LhsEstimate {
    let mut best: Option<f64> = None;
    let mut skipped = 0;
    let mut eta_sum = 0.0;
    for (idx, &dx) in dx_norms.iter().enumerate() {
        let w = eta(idx + 1, kind, exponent);
        eta_sum += w;
        if dx == 0.0 {
            skipped += 1;
            continue;
        }
        let v = n as f64 * w * sigma / (lipschitz * norm_f * dx) - 1.0;
        best = Some(match best {
            None => v,
            Some(b) if strict => b.min(v),
            Some(b) => b.max(v),
        });
    }
    LhsEstimate {
        value: best,
        skipped,
        eta_sum,
    }
}

/// `|(I - P) f| / |f|` for the mask keeping the sorted indices `kept`.
/// A zero residual yields 0.
pub fn epsilon_rhs(f: &[f64], kept: &[usize]) -> f64 {
    let total: f64 = f.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut removed = 0.0;
    let mut next = kept.iter().peekable();
    for (i, v) in f.iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
        } else {
            removed += v * v;
        }
    }
    (removed / total).sqrt().min(1.0)
}

/// Writes the indices of the `l2` largest-magnitude entries of `f` into
/// `order[..l2]`, sorted ascending. Ties go to the lower index. `order` must
/// hold at least `f.len()` entries.
pub fn select_subselection_into<'a>(f: &[f64], l2: usize, order: &'a mut [usize]) -> &'a [usize] {
    let l1 = f.len();
    assert!(l2 >= 1 && l2 <= l1);
    let order = &mut order[..l1];
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    if l2 < l1 {
        order.select_nth_unstable_by(l2 - 1, |&a, &b| {
            f[b].abs().total_cmp(&f[a].abs()).then(a.cmp(&b))
        });
    }
    let kept = &mut order[..l2];
    kept.sort_unstable();
    kept
}

pub fn select_subselection(f: &[f64], l2: usize) -> Vec<usize> {
    let mut order = vec![0; f.len()];
    select_subselection_into(f, l2, &mut order).to_vec()
}

/// Uniform sample of `l2` distinct indices out of `[0, l1)` (partial
/// Fisher-Yates), written sorted into `order[..l2]`.
pub fn select_randomized_into<'a, R: Rng + ?Sized>(
    l1: usize,
    l2: usize,
    rng: &mut R,
    order: &'a mut [usize],
) -> &'a [usize] {
    assert!(l2 >= 1 && l2 <= l1);
    let order = &mut order[..l1];
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    if l2 < l1 {
        for i in 0..l2 {
            let j = rng.gen_range(i..l1);
            order.swap(i, j);
        }
    }
    let kept = &mut order[..l2];
    kept.sort_unstable();
    kept
}

pub fn select_randomized<R: Rng + ?Sized>(l1: usize, l2: usize, rng: &mut R) -> Vec<usize> {
    let mut order = vec![0; l1];
    select_randomized_into(l1, l2, rng, &mut order).to_vec()
}

/// Number of retained rows for a sketch percentage.
#[inline]
pub fn retained_rows(sketch_percent: f64, l1: usize) -> usize {
    ((sketch_percent / 100.0 * l1 as f64).round() as usize).clamp(1, l1)
}

/// Outcome of one adaptive step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskStatus {
    /// Adaptivity disabled; `Pi_2 = I`.
    Disabled,
    /// No triangular factor stored yet.
    NoFactor,
    /// The stored factor is numerically singular.
    SingularFactor,
    /// Every window column had a zero step.
    NoValidColumn,
    /// `eps_lhs < 0`.
    BudgetNegative,
    /// Fewer retained rows than least-squares columns.
    TooFewRows,
    /// `eps_rhs` outside `(0, eps_lhs]`.
    Rejected,
    Accepted,
}

/// Trace record for one mixing step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub iteration: usize,
    pub columns: usize,
    pub status: MaskStatus,
    pub sigma_hat: Option<f64>,
    pub lipschitz: f64,
    pub eps_lhs: Option<f64>,
    pub eps_rhs: Option<f64>,
    pub l2: usize,
    pub accepted: bool,
    pub eta_sum: f64,
    pub skipped_columns: usize,
    /// The least-squares solve failed and the step fell back to Picard.
    pub ls_fallback: bool,
}

impl StabilityRecord {
    pub fn disabled(iteration: usize, columns: usize, lipschitz: f64, l1: usize) -> Self {
        Self {
            iteration,
            columns,
            status: MaskStatus::Disabled,
            sigma_hat: None,
            lipschitz,
            eps_lhs: None,
            eps_rhs: None,
            l2: l1,
            accepted: false,
            eta_sum: 0.0,
            skipped_columns: 0,
            ls_fallback: false,
        }
    }
}

/// Inputs of the adaptive step, borrowed from the solver workspace.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveInputs<'a> {
    pub iteration: usize,
    /// Factor retained at the previous mixing step: `(data, ld, c)`.
    pub stored_r: Option<(&'a [f64], usize, usize)>,
    pub sigma_iterations: usize,
    /// Problem dimension `N`.
    pub n: usize,
    pub lipschitz: f64,
    /// Plain 2-norm of the full residual.
    pub norm_f: f64,
    /// `|dx_j|` for the current window columns, oldest first.
    pub dx_norms: &'a [f64],
    /// Field-restricted residual.
    pub f_restricted: &'a [f64],
    pub sketch_percent: f64,
    pub strategy: Adaptivity,
    pub eta_exponent: f64,
    pub strict: bool,
}

/// Pre-allocated buffers for [`adaptive_step`].
#[derive(Debug, Clone)]
pub struct AdaptiveScratch {
    sigma_work: Vec<f64>,
    order: Vec<usize>,
    kept_len: usize,
}

impl AdaptiveScratch {
    pub fn new(l1: usize, m: usize) -> Self {
        Self {
            sigma_work: vec![0.0; 2 * m],
            order: vec![0; l1],
            kept_len: 0,
        }
    }

    /// Rows selected by the last accepted step.
    pub fn kept(&self) -> &[usize] {
        &self.order[..self.kept_len]
    }
}

/// Computes the dynamic mask for the current mixing step. Returns the trace
/// record; when `record.accepted` the selected rows are in
/// [`AdaptiveScratch::kept`], otherwise `Pi_2 = I`.
pub fn adaptive_step<R: Rng + ?Sized>(
    input: &AdaptiveInputs<'_>,
    scratch: &mut AdaptiveScratch,
    rng: &mut R,
) -> StabilityRecord {
    let l1 = input.f_restricted.len();
    let columns = input.dx_norms.len();
    let mut rec = StabilityRecord {
        iteration: input.iteration,
        columns,
        status: MaskStatus::NoFactor,
        sigma_hat: None,
        lipschitz: input.lipschitz,
        eps_lhs: None,
        eps_rhs: None,
        l2: l1,
        accepted: false,
        eta_sum: 0.0,
        skipped_columns: 0,
        ls_fallback: false,
    };
    scratch.kept_len = 0;
    let Some(selection) = input.strategy.selection() else {
        rec.status = MaskStatus::Disabled;
        return rec;
    };
    let Some((r, ld, c)) = input.stored_r else {
        return rec;
    };
    let sigma = match estimate_sigma_min_into(r, ld, c, input.sigma_iterations, &mut scratch.sigma_work) {
        Ok(s) => s,
        Err(_) => {
            rec.status = MaskStatus::SingularFactor;
            return rec;
        }
    };
    rec.sigma_hat = Some(sigma);
    if input.lipschitz <= 0.0 || input.norm_f <= 0.0 {
        rec.status = MaskStatus::NoValidColumn;
        return rec;
    }
    let lhs = epsilon_lhs(
        input.n,
        sigma,
        input.lipschitz,
        input.norm_f,
        input.dx_norms,
        input.strategy.eta_kind(),
        input.eta_exponent,
        input.strict,
    );
    rec.eta_sum = lhs.eta_sum;
    rec.skipped_columns = lhs.skipped;
    rec.eps_lhs = lhs.value;
    let Some(eps_lhs) = lhs.value else {
        rec.status = MaskStatus::NoValidColumn;
        return rec;
    };
    if eps_lhs < 0.0 {
        rec.status = MaskStatus::BudgetNegative;
        return rec;
    }

    let l2 = retained_rows(input.sketch_percent, l1);
    rec.l2 = l2;
    let kept = match selection {
        Selection::Subselection => select_subselection_into(input.f_restricted, l2, &mut scratch.order),
        Selection::Randomized => select_randomized_into(l1, l2, rng, &mut scratch.order),
    };
    let eps_rhs = epsilon_rhs(input.f_restricted, kept);
    rec.eps_rhs = Some(eps_rhs);
    if l2 < columns {
        rec.status = MaskStatus::TooFewRows;
        return rec;
    }
    if eps_rhs > 0.0 && eps_rhs <= eps_lhs {
        rec.status = MaskStatus::Accepted;
        rec.accepted = true;
        scratch.kept_len = l2;
    } else {
        rec.status = MaskStatus::Rejected;
    }
    rec
}

/// `|sum_j alpha_j (I - P_j) df_j|_2`, the effect of the row masks on the
/// mixed update. `columns` holds `df_j` (oldest first), `masks[j]` the rows
/// kept for column `j` (`None` = identity).
pub fn perturbation_norm(columns: &ColMatrix, masks: &[Option<&[usize]>], alpha: &[f64]) -> f64 {
    assert_eq!(masks.len(), columns.cols());
    assert_eq!(alpha.len(), columns.cols());
    let mut acc = vec![0.0; columns.rows()];
    let mut keep = vec![false; columns.rows()];
    for (j, mask) in masks.iter().enumerate() {
        let Some(kept) = mask else { continue };
        keep.fill(false);
        for &i in kept.iter() {
            keep[i] = true;
        }
        for (i, v) in columns.col(j).iter().enumerate() {
            if !keep[i] {
                acc[i] += alpha[j] * v;
            }
        }
    }
    acc.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lipschitz_tracking() {
        assert_eq!(update_lipschitz(2.0, 3.0, 1.0), 3.0);
        assert_eq!(update_lipschitz(5.0, 3.0, 1.0), 5.0);
        assert_eq!(update_lipschitz(5.0, 3.0, 0.0), 5.0);
    }

    #[test]
    fn eta_values() {
        assert_eq!(eta(1, EtaKind::Power, DEFAULT_ETA_EXPONENT), 1.0);
        assert_eq!(eta(4, EtaKind::Constant, DEFAULT_ETA_EXPONENT), 1.0);
        assert_eq!(eta(2, EtaKind::Power, 1.1), 2f64.powf(1.1));
    }

    #[test]
    fn lhs_examples() {
        let e = |s| epsilon_lhs(1, s, 1.0, 1.0, &[1.0], EtaKind::Constant, 1.1, false).value.unwrap();
        assert_eq!(e(1.0), 0.0);
        assert_eq!(e(2.0), 1.0);
        assert_eq!(e(0.5), -0.5);
    }

    #[test]
    fn lhs_skips_zero_steps_and_picks_extreme() {
        let est = epsilon_lhs(1, 1.0, 1.0, 1.0, &[0.0, 2.0, 0.5], EtaKind::Constant, 1.1, false);
        assert_eq!(est.skipped, 1);
        assert_eq!(est.value, Some(1.0));
        assert_eq!(est.eta_sum, 3.0);
        let strict = epsilon_lhs(1, 1.0, 1.0, 1.0, &[0.0, 2.0, 0.5], EtaKind::Constant, 1.1, true);
        assert_eq!(strict.value, Some(-0.5));
        let none = epsilon_lhs(1, 1.0, 1.0, 1.0, &[0.0], EtaKind::Constant, 1.1, false);
        assert_eq!(none.value, None);
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(epsilon_rhs(&[3.0, 4.0], &[0, 1]), 0.0);
        assert_eq!(epsilon_rhs(&[3.0, 4.0], &[]), 1.0);
        assert!((epsilon_rhs(&[3.0, 4.0], &[1]) - 0.6).abs() < 1e-15);
        assert_eq!(epsilon_rhs(&[0.0, 0.0], &[1]), 0.0);
        // keeping every nonzero entry gives exactly zero
        assert_eq!(epsilon_rhs(&[0.0, 2.0, 0.0], &[1]), 0.0);
    }

    #[test]
    fn subselection_examples() {
        assert_eq!(select_subselection(&[0.1, -5.0, 3.0], 2), vec![1, 2]);
        assert_eq!(select_subselection(&[1.0, 1.0, 0.0], 1), vec![0]);
        assert_eq!(select_subselection(&[1.0, 2.0, 0.0], 3), vec![0, 1, 2]);
    }

    #[test]
    fn randomized_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(select_randomized(5, 5, &mut rng), vec![0, 1, 2, 3, 4]);
        let a = select_randomized(100, 10, &mut ChaCha8Rng::seed_from_u64(3));
        let b = select_randomized(100, 10, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn randomized_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 10];
        let draws = 10_000;
        for _ in 0..draws {
            for i in select_randomized(10, 3, &mut rng) {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.3).abs() <= 0.02, "{freq}");
        }
    }

    #[test]
    fn retained_row_rounding() {
        assert_eq!(retained_rows(30.0, 10), 3);
        assert_eq!(retained_rows(30.0, 1), 1);
        assert_eq!(retained_rows(1.0, 10), 1);
        assert_eq!(retained_rows(100.0, 17), 17);
        assert_eq!(retained_rows(25.0, 10), 3); // 2.5 rounds away from zero
    }

    #[test]
    fn static_masks() {
        use crate::fixed_point::FieldLayout;
        use std::sync::Arc;
        let layout = FieldLayout::new(9, vec![("velocity", 0..6), ("pressure", 6..9)]).unwrap();
        let p = FixedPointProblem::new(
            "s",
            Arc::new(crate::fixed_point::FnResidual(|x: &[f64], o: &mut [f64]| o.copy_from_slice(x))),
            layout,
        );
        let m = build_static_mask(&p, Some("pressure")).unwrap();
        assert_eq!(m.kept(), &[6, 7, 8]);
        assert_eq!(m.as_range(), Some(6..9));
        assert!(build_static_mask(&p, None).unwrap().is_identity());
        assert!(build_static_mask(&p, Some("nope")).is_err());
    }

    #[test]
    fn projection_zeroes_complement() {
        let m = MaskOperator::from_indices(vec![1, 3], 4).unwrap();
        assert_eq!(m.project(&[1.0, 2.0, 3.0, 4.0]), vec![0.0, 2.0, 0.0, 4.0]);
        assert_eq!(m.restrict(&[1.0, 2.0, 3.0, 4.0]), vec![2.0, 4.0]);
        assert!(MaskOperator::from_indices(vec![], 4).is_err());
        assert!(MaskOperator::from_indices(vec![2, 1], 4).is_err());
        assert!(MaskOperator::from_indices(vec![4], 4).is_err());
    }

    fn inputs<'a>(r: &'a [f64], dx: &'a [f64], f: &'a [f64], strategy: Adaptivity) -> AdaptiveInputs<'a> {
        AdaptiveInputs {
            iteration: 3,
            stored_r: Some((r, 1, 1)),
            sigma_iterations: 3,
            n: 1,
            lipschitz: 1.0,
            norm_f: 1.0,
            dx_norms: dx,
            f_restricted: f,
            sketch_percent: 50.0,
            strategy,
            eta_exponent: DEFAULT_ETA_EXPONENT,
            strict: false,
        }
    }

    #[test]
    fn adaptive_step_without_factor_is_identity() {
        let f = [0.6, 0.8];
        let mut input = inputs(&[1.0], &[1.0], &f, Adaptivity::SubselectConstant);
        input.stored_r = None;
        let mut scratch = AdaptiveScratch::new(2, 1);
        let rec = adaptive_step(&input, &mut scratch, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(rec.status, MaskStatus::NoFactor);
        assert!(!rec.accepted);
        assert!(scratch.kept().is_empty());
    }

    #[test]
    fn adaptive_step_accepts_within_budget() {
        // sigma = 3 -> eps_lhs = 2; keeping the 0.8 entry gives eps_rhs = 0.6
        let f = [0.6, 0.8];
        let input = inputs(&[3.0], &[1.0], &f, Adaptivity::SubselectConstant);
        let mut scratch = AdaptiveScratch::new(2, 1);
        let rec = adaptive_step(&input, &mut scratch, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(rec.eps_lhs, Some(2.0));
        assert!((rec.eps_rhs.unwrap() - 0.6).abs() < 1e-15);
        assert!(rec.accepted);
        assert_eq!(scratch.kept(), &[1]);
    }

    #[test]
    fn adaptive_step_negative_budget() {
        let f = [0.6, 0.8];
        let input = inputs(&[0.5], &[1.0], &f, Adaptivity::RandomizedPower);
        let mut scratch = AdaptiveScratch::new(2, 1);
        let rec = adaptive_step(&input, &mut scratch, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(rec.eps_lhs, Some(-0.5));
        assert_eq!(rec.status, MaskStatus::BudgetNegative);
        assert!(!rec.accepted);
    }

    #[test]
    fn adaptive_step_rejects_over_budget() {
        // sigma = 1.5 -> eps_lhs = 0.5 < eps_rhs = 0.6
        let f = [0.6, 0.8];
        let input = inputs(&[1.5], &[1.0], &f, Adaptivity::SubselectPower);
        let mut scratch = AdaptiveScratch::new(2, 1);
        let rec = adaptive_step(&input, &mut scratch, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(rec.status, MaskStatus::Rejected);
        assert!(!rec.accepted);
    }

    #[test]
    fn perturbation_norm_cases() {
        let cols = ColMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(perturbation_norm(&cols, &[None, None], &[1.0, 2.0]), 0.0);
        let k: &[usize] = &[0];
        assert_eq!(perturbation_norm(&cols, &[Some(k), Some(k)], &[0.0, 0.0]), 0.0);
        // removed rows 1,2: alpha0*(3,5) + alpha1*(4,6) with alpha = (1, -1) -> (-1,-1)
        let v = perturbation_norm(&cols, &[Some(k), Some(k)], &[1.0, -1.0]);
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
    }
}
