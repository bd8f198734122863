//! Dictionary storage and the masked block-coordinate-descent update.
//!
//! Three storage regimes are supported:
//!
//! * ℓ2, exact lazy: `d_j = f_j / σ_j`. The norm `‖f_j‖₂` is tracked
//!   incrementally and the divisor is `σ_j ← max(σ_j, ‖f_j‖₂)` after each
//!   step, which is exactly the ball projection of the stepped atom, so a
//!   gradient step on `s` rows costs O(s). Right after a refresh `σ_j = 1`
//!   and `d_j = f_j / max(1, ‖f_j‖₂)`.
//! * ℓ1, exact lazy: `d_j = S_{l_j}(f_j)` where `l_j` is the ℓ1-ball
//!   projection threshold of `f_j`. Masked entries are lifted back through the
//!   soft-threshold after each step, using `S_a ∘ S_b = S_{a+b}`, so unmasked
//!   raw entries stay put. Finding the new threshold is O(p).
//! * approximate: `F` holds `d_j` directly. Only masked entries move, and they
//!   are projected onto the ball whose radius is what the frozen entries leave
//!   free.
//!
//! Rewriting a whole raw column (an O(p) event) is counted in
//! [`DictDiagnostics::fold_events`]. In ℓ1 mode this happens when a step
//! leaves the atom strictly inside the ball while the threshold was active;
//! in ℓ2 mode when a refresh resets a divisor above 1.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{ModlError, Result};
use crate::proj::{l1_ball_threshold, project_l2_radius_in_place, soft_threshold, Norm};
use crate::stats::SufficientStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionMode {
    ExactLazy,
    Approximate,
}

impl ProjectionMode {
    pub fn default_for(norm: Norm) -> Self {
        match norm {
            Norm::L1 => ProjectionMode::Approximate,
            Norm::L2 => ProjectionMode::ExactLazy,
        }
    }
}

impl std::str::FromStr for ProjectionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "exact" | "exact-lazy" | "lazy" => Ok(ProjectionMode::ExactLazy),
            "approximate" | "approx" => Ok(ProjectionMode::Approximate),
            other => Err(format!("unknown projection mode `{other}`")),
        }
    }
}

impl std::fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProjectionMode::ExactLazy => "exact-lazy",
            ProjectionMode::Approximate => "approximate",
        })
    }
}

/// Diagonal entries of `C` at or below this are treated as unused atoms.
pub const UNUSED_ATOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictDiagnostics {
    pub skipped_atoms: u64,
    pub drift_events: u64,
    pub fold_events: u64,
    /// Arithmetic operations spent in updates.
    pub ops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub(crate) raw: Array2<f64>,
    pub(crate) scale: Vec<f64>,
    /// Approximate mode: ψ(d_j) (ℓ1 norm, or squared ℓ2 norm). Exact-lazy ℓ2:
    /// `‖f_j‖₂`. Unused in exact-lazy ℓ1.
    pub(crate) norm_cache: Vec<f64>,
    /// Rows touched per column since the last exact recomputation of the
    /// incrementally maintained norms.
    pub(crate) touched: Vec<u64>,
    pub(crate) norm: Norm,
    pub(crate) mode: ProjectionMode,
    pub(crate) diagnostics: DictDiagnostics,
}

impl Dictionary {
    /// Builds a dictionary from `p × k` initial atoms, projecting each onto
    /// the unit ball.
    pub fn from_atoms(atoms: Array2<f64>, norm: Norm, mode: ProjectionMode) -> Self {
        let k = atoms.ncols();
        let mut dict = Dictionary {
            raw: atoms,
            scale: vec![0.0; k],
            norm_cache: vec![0.0; k],
            touched: vec![0; k],
            norm,
            mode,
            diagnostics: DictDiagnostics::default(),
        };
        for j in 0..k {
            let mut col = dict.raw.column(j).to_vec();
            norm.project_in_place(&mut col);
            dict.raw.column_mut(j).iter_mut().zip(&col).for_each(|(r, v)| *r = *v);
            dict.refresh_column(j);
        }
        dict
    }

    pub fn p(&self) -> usize {
        self.raw.nrows()
    }

    pub fn k(&self) -> usize {
        self.raw.ncols()
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn diagnostics(&self) -> DictDiagnostics {
        self.diagnostics
    }

    /// Raw storage `F`.
    pub fn raw(&self) -> ArrayView2<'_, f64> {
        self.raw.view()
    }

    /// Lazy scalars `l_j`.
    pub fn scales(&self) -> &[f64] {
        &self.scale
    }

    #[inline]
    fn materialize(norm: Norm, mode: ProjectionMode, raw: f64, scale: f64) -> f64 {
        match (mode, norm) {
            (ProjectionMode::Approximate, _) => raw,
            (ProjectionMode::ExactLazy, Norm::L2) => raw / scale.max(1.0),
            (ProjectionMode::ExactLazy, Norm::L1) => soft_threshold(raw, scale),
        }
    }

    #[inline]
    pub fn entry(&self, m: usize, j: usize) -> f64 {
        Self::materialize(self.norm, self.mode, self.raw[[m, j]], self.scale[j])
    }

    pub fn materialize_column(&self, j: usize) -> Vec<f64> {
        (0..self.p()).map(|m| self.entry(m, j)).collect()
    }

    /// Materialized `p × k` dictionary.
    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.p(), self.k()), |(m, j)| self.entry(m, j))
    }

    /// Materialized rows selected by `rows`, as an `s × k` block.
    pub fn masked_rows(&self, rows: &[usize]) -> Array2<f64> {
        let k = self.k();
        let mut out = Array2::zeros((rows.len(), k));
        for (i, &m) in rows.iter().enumerate() {
            let raw = self.raw.row(m);
            let mut dst = out.row_mut(i);
            for j in 0..k {
                dst[j] = Self::materialize(self.norm, self.mode, raw[j], self.scale[j]);
            }
        }
        out
    }

    /// Recomputes the incrementally maintained per-column quantity exactly.
    fn refresh_column(&mut self, j: usize) {
        let col = self.raw.column(j);
        match (self.mode, self.norm) {
            (ProjectionMode::Approximate, Norm::L1) => {
                self.norm_cache[j] = col.iter().map(|x| x.abs()).sum();
            }
            (ProjectionMode::Approximate, Norm::L2) => {
                self.norm_cache[j] = col.iter().map(|x| x * x).sum();
            }
            (ProjectionMode::ExactLazy, Norm::L2) => {
                let l = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                let sigma = self.scale[j].max(1.0).max(l);
                if sigma > 1.0 {
                    self.raw.column_mut(j).iter_mut().for_each(|x| *x /= sigma);
                    self.diagnostics.fold_events += 1;
                }
                self.norm_cache[j] = l / sigma;
                self.scale[j] = 1.0;
            }
            (ProjectionMode::ExactLazy, Norm::L1) => {
                let v = col.to_vec();
                self.scale[j] = l1_ball_threshold(&v, 1.0);
            }
        }
        self.touched[j] = 0;
        self.diagnostics.ops += 2 * self.p() as u64;
    }

    fn note_touched(&mut self, j: usize, rows: usize) {
        self.touched[j] += rows as u64;
        if self.touched[j] >= 4 * self.p() as u64 {
            self.refresh_column(j);
        }
    }

    /// One cycle of block coordinate descent over the atoms, restricted to
    /// `rows` (sorted, the union of the masks of the current iteration).
    /// Returns the number of atoms skipped for having `C[j,j] ≈ 0`.
    pub fn update(&mut self, stats: &SufficientStats, rows: &[usize]) -> Result<usize> {
        let k = self.k();
        if stats.k() != k || stats.p() != self.p() {
            return Err(ModlError::Dimension(format!(
                "statistics are {}×{} but dictionary is {}×{}",
                stats.p(),
                stats.k(),
                self.p(),
                k
            )));
        }
        if rows.is_empty() {
            return Ok(0);
        }
        let c = stats.c();
        let b = stats.b();
        let mut block = self.masked_rows(rows);
        let s = rows.len();
        let mut grad = vec![0.0; s];
        let mut step = vec![0.0; s];
        let mut skipped = 0;
        for j in 0..k {
            let cjj = c[[j, j]];
            if cjj <= UNUSED_ATOM_TOL {
                skipped += 1;
                continue;
            }
            self.diagnostics.ops += (s * (2 * k + 6)) as u64;
            let cj = c.column(j);
            for (i, &m) in rows.iter().enumerate() {
                let drow = block.row(i);
                let mut acc = 0.0;
                for l in 0..k {
                    acc += drow[l] * cj[l];
                }
                grad[i] = acc - b[[m, j]];
            }
            match (self.mode, self.norm) {
                (ProjectionMode::Approximate, norm) => {
                    for i in 0..s {
                        step[i] = block[[i, j]] - grad[i] / cjj;
                    }
                    self.approximate_column(j, rows, &mut block, &step, norm);
                }
                (ProjectionMode::ExactLazy, Norm::L2) => self.lazy_l2_column(j, rows, &mut block, &grad, cjj),
                (ProjectionMode::ExactLazy, Norm::L1) => {
                    for i in 0..s {
                        step[i] = block[[i, j]] - grad[i] / cjj;
                    }
                    self.lazy_l1_column(j, rows, &mut block, &step);
                }
            }
        }
        self.diagnostics.skipped_atoms += skipped as u64;
        Ok(skipped)
    }

    /// Projects the stepped masked entries of atom `j` onto `T_j`: the ball
    /// left free by the unmasked entries, which are frozen.
    fn approximate_column(&mut self, j: usize, rows: &[usize], block: &mut Array2<f64>, stepped: &[f64], norm: Norm) {
        let s = rows.len();
        let old_part = match norm {
            Norm::L1 => (0..s).map(|i| block[[i, j]].abs()).sum::<f64>(),
            Norm::L2 => (0..s).map(|i| block[[i, j]] * block[[i, j]]).sum::<f64>(),
        };
        let frozen = (self.norm_cache[j] - old_part).max(0.0);
        let mut new = stepped.to_vec();
        match norm {
            Norm::L1 => {
                let radius = (1.0 - frozen).max(0.0);
                let theta = if radius > 0.0 {
                    l1_ball_threshold(&new, radius)
                } else {
                    f64::INFINITY
                };
                if theta > 0.0 {
                    new.iter_mut().for_each(|x| *x = soft_threshold(*x, theta));
                }
            }
            Norm::L2 => {
                let radius = (1.0 - frozen).max(0.0).sqrt();
                project_l2_radius_in_place(&mut new, radius);
            }
        }
        let new_part = match norm {
            Norm::L1 => new.iter().map(|x| x.abs()).sum::<f64>(),
            Norm::L2 => new.iter().map(|x| x * x).sum::<f64>(),
        };
        for (i, &m) in rows.iter().enumerate() {
            self.raw[[m, j]] = new[i];
            block[[i, j]] = new[i];
        }
        self.norm_cache[j] = frozen + new_part;
        self.note_touched(j, s);
    }

    /// Gradient step on `f_j` scaled by `σ_j`, incremental norm update
    /// `l_j ← sqrt(l_j² − n_j + ‖M f_j‖²)`, then `σ_j ← max(σ_j, l_j)`.
    fn lazy_l2_column(&mut self, j: usize, rows: &[usize], block: &mut Array2<f64>, grad: &[f64], cjj: f64) {
        let sigma = self.scale[j].max(1.0);
        let l_old = self.norm_cache[j];
        let factor = sigma / cjj;
        let mut n_old = 0.0;
        let mut n_new = 0.0;
        for (i, &m) in rows.iter().enumerate() {
            let f = self.raw[[m, j]];
            n_old += f * f;
            let g = f - factor * grad[i];
            n_new += g * g;
            self.raw[[m, j]] = g;
        }
        let radicand = l_old * l_old - n_old + n_new;
        let l_new = if radicand < -1e-8 * l_old * l_old {
            self.diagnostics.drift_events += 1;
            log::debug!("atom {j}: negative radicand {radicand:e}, recomputing norm");
            self.raw.column(j).iter().map(|x| x * x).sum::<f64>().sqrt()
        } else {
            radicand.max(0.0).sqrt()
        };
        self.norm_cache[j] = l_new;
        self.scale[j] = sigma.max(l_new);
        let denom = self.scale[j];
        for (i, &m) in rows.iter().enumerate() {
            block[[i, j]] = self.raw[[m, j]] / denom;
        }
        self.note_touched(j, rows.len());
    }

    /// Writes the stepped values `u` back as `u + sign(u)·l_j` so that
    /// `S_{l_j}(f_j)` reproduces the stepped atom, then finds the projection
    /// threshold of the new `f_j`.
    fn lazy_l1_column(&mut self, j: usize, rows: &[usize], block: &mut Array2<f64>, stepped: &[f64]) {
        let l_old = self.scale[j];
        for (i, &m) in rows.iter().enumerate() {
            let u = stepped[i];
            self.raw[[m, j]] = if u != 0.0 { u + l_old.copysign(u) } else { 0.0 };
        }
        let col = self.raw.column(j).to_vec();
        let theta = l1_ball_threshold(&col, 1.0);
        if theta < l_old {
            // stepped atom S_{l_old}(f) is strictly inside the ball
            self.raw
                .column_mut(j)
                .iter_mut()
                .for_each(|x| *x = soft_threshold(*x, l_old));
            self.diagnostics.fold_events += 1;
            self.refresh_column(j);
        } else {
            self.scale[j] = theta;
        }
        let l = self.scale[j];
        for (i, &m) in rows.iter().enumerate() {
            block[[i, j]] = soft_threshold(self.raw[[m, j]], l);
        }
    }

    pub(crate) fn from_parts(
        raw: Array2<f64>,
        scale: Vec<f64>,
        norm_cache: Vec<f64>,
        touched: Vec<u64>,
        norm: Norm,
        mode: ProjectionMode,
        diagnostics: DictDiagnostics,
    ) -> Result<Self> {
        let k = raw.ncols();
        if scale.len() != k || norm_cache.len() != k || touched.len() != k {
            return Err(ModlError::Checkpoint("dictionary segment shapes disagree".into()));
        }
        Ok(Dictionary {
            raw,
            scale,
            norm_cache,
            touched,
            norm,
            mode,
            diagnostics,
        })
    }
}
