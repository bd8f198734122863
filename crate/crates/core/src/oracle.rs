//! Slow reference implementations used to check the fast paths.
//!
//! Nothing here calls into the solver, statistics or dictionary modules; the
//! only shared pieces are plain data types.

use ndarray::{Array1, Array2, ArrayView2};

use crate::code::{Code, Penalty, PenaltyKind};
use crate::data::{ColumnSource, DenseColumns};
use crate::error::{ModlError, Result};
use crate::proj::Norm;

fn soft(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Projection onto the unit ℓ1 ball by sorting magnitudes and scanning for
/// the threshold.
pub fn sort_project_l1_ball(v: &[f64]) -> (Vec<f64>, f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= 1.0 {
        return (v.to_vec(), 0.0);
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - 1.0) / (i + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    (v.iter().map(|&x| soft(x, theta)).collect(), theta)
}

/// Projection onto the unit ℓ1 ball by enumerating every face of the
/// polytope. Exponential in the dimension; for `len ≤ 4` only.
pub fn qp_project_l1_ball(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 6, "brute force is exponential");
    if v.iter().map(|x| x.abs()).sum::<f64>() <= 1.0 {
        return v.to_vec();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    // each coordinate: 0 fixed at zero, 1 positive, 2 negative
    let total = 3usize.pow(n as u32);
    for code in 1..total {
        let mut sign = vec![0.0; n];
        let mut c = code;
        for s in sign.iter_mut() {
            *s = match c % 3 {
                0 => 0.0,
                1 => 1.0,
                _ => -1.0,
            };
            c /= 3;
        }
        let support = sign.iter().filter(|s| **s != 0.0).count();
        if support == 0 {
            continue;
        }
        // project onto {u : Σ σ_i u_i = 1, u_i = 0 off support}
        let dot: f64 = v.iter().zip(&sign).map(|(x, s)| x * s).sum();
        let shift = (dot - 1.0) / support as f64;
        let u: Vec<f64> = v.iter().zip(&sign).map(|(x, s)| if *s == 0.0 { 0.0 } else { x - s * shift }).collect();
        if u.iter().zip(&sign).any(|(x, s)| x * s < 0.0) {
            continue;
        }
        let dist: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, u));
        }
    }
    best.expect("some face is feasible").1
}

fn project(norm: Norm, v: &[f64]) -> Vec<f64> {
    match norm {
        Norm::L1 => sort_project_l1_ball(v).0,
        Norm::L2 => {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1.0 {
                v.iter().map(|x| x / n).collect()
            } else {
                v.to_vec()
            }
        }
    }
}

/// Largest eigenvalue of `G` by power iteration.
fn top_eigenvalue(g: &Array2<f64>) -> f64 {
    let k = g.nrows();
    let mut v = Array1::from_elem(k, 1.0 / (k as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = g.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Minimizes `½‖x − Dα‖² + weight·Ω(α)` by proximal gradient with step
/// `1/L`, stopping once the gradient-map norm falls below `tol`. Lasso
/// solutions are then polished by solving the linear system on their
/// support, which is kept only if it still satisfies the optimality
/// conditions.
pub fn prox_gradient_code(x: &[f64], d: ArrayView2<f64>, kind: PenaltyKind, weight: f64, max_iter: usize, tol: f64) -> Result<Code> {
    let k = d.ncols();
    let g = d.t().dot(&d);
    let c = d.t().dot(&Array1::from(x.to_vec()));
    let lipschitz = top_eigenvalue(&g)
        + match kind {
            PenaltyKind::Ridge => 2.0 * weight,
            PenaltyKind::Lasso => 0.0,
        };
    if lipschitz == 0.0 {
        return Ok(Code::zeros(k));
    }
    let step = 1.0 / lipschitz;
    let mut a = Array1::<f64>::zeros(k);
    let mut converged = false;
    for _ in 0..max_iter {
        let mut grad = g.dot(&a) - &c;
        if kind == PenaltyKind::Ridge {
            grad = grad + 2.0 * weight * &a;
        }
        let next: Array1<f64> = match kind {
            PenaltyKind::Lasso => (&a - &(step * &grad)).mapv(|u| soft(u, step * weight)),
            PenaltyKind::Ridge => &a - &(step * &grad),
        };
        let map = (&a - &next) / step;
        a = next;
        if map.dot(&map).sqrt() < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ModlError::InsufficientData(format!(
            "proximal gradient did not reach tolerance {tol:e} in {max_iter} iterations"
        )));
    }
    if kind == PenaltyKind::Lasso {
        if let Some(p) = polish_lasso(&g, &c, &a, weight) {
            a = p;
        }
    }
    Ok(Code { alpha: a.to_vec() })
}

fn polish_lasso(g: &Array2<f64>, c: &Array1<f64>, a: &Array1<f64>, weight: f64) -> Option<Array1<f64>> {
    let support: Vec<usize> = (0..a.len()).filter(|&j| a[j] != 0.0).collect();
    let mut out = Array1::zeros(a.len());
    if !support.is_empty() {
        let s = support.len();
        let sys = nalgebra::DMatrix::from_fn(s, s, |i, j| g[[support[i], support[j]]]);
        let rhs = nalgebra::DVector::from_fn(s, |i, _| c[support[i]] - weight * a[support[i]].signum());
        let sol = sys.lu().solve(&rhs)?;
        for (i, &j) in support.iter().enumerate() {
            if sol[i].signum() != a[j].signum() {
                return None;
            }
            out[j] = sol[i];
        }
    }
    let grad = g.dot(&out) - c;
    for j in 0..a.len() {
        if out[j] == 0.0 && grad[j].abs() > weight * (1.0 + 1e-9) + 1e-12 {
            return None;
        }
    }
    Some(out)
}

/// One sample of a run: a column observed on `rows`, and its code.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
    pub alpha: Vec<f64>,
    pub p: usize,
}

/// Every sample of a small run, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryLog {
    pub penalty: Penalty,
    pub entries: Vec<HistoryEntry>,
}

impl HistoryLog {
    pub fn new(penalty: Penalty) -> Self {
        HistoryLog {
            penalty,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, rows: Vec<usize>, values: Vec<f64>, alpha: Vec<f64>, p: usize) {
        self.entries.push(HistoryEntry { rows, values, alpha, p });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Average over the log of `½‖M_i(x_i − Dα_i)‖² + λ (s_i/p) Ω(α_i)`,
/// summed term by term.
pub fn surrogate_from_history(log: &HistoryLog, d: ArrayView2<f64>) -> Result<f64> {
    if log.is_empty() {
        return Err(ModlError::InsufficientData("surrogate needs at least one sample".into()));
    }
    let mut total = 0.0;
    for e in &log.entries {
        let mut resid = 0.0;
        for (&m, &x) in e.rows.iter().zip(&e.values) {
            let fit: f64 = (0..d.ncols()).map(|j| d[[m, j]] * e.alpha[j]).sum();
            resid += (x - fit) * (x - fit);
        }
        let omega: f64 = match log.penalty.kind {
            PenaltyKind::Lasso => e.alpha.iter().map(|a| a.abs()).sum(),
            PenaltyKind::Ridge => e.alpha.iter().map(|a| a * a).sum(),
        };
        total += 0.5 * resid + log.penalty.lambda * (e.rows.len() as f64 / e.p as f64) * omega;
    }
    Ok(total / log.len() as f64)
}

/// State after one step of the reference algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaIterate {
    pub column: usize,
    pub alpha: Vec<f64>,
    pub d: Array2<f64>,
    pub c: Array2<f64>,
    pub b: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct VanillaRun {
    pub dictionary: Array2<f64>,
    pub iterates: Vec<VanillaIterate>,
    pub history: HistoryLog,
}

/// Unmasked online dictionary learning with exact averaged statistics
/// recomputed from the full history at every step, and one projected block
/// coordinate descent pass per step. Columns are visited in `order`.
pub fn vanilla_online_dl(
    data: &DenseColumns,
    init: Array2<f64>,
    penalty: Penalty,
    norm: Norm,
    order: &[usize],
) -> Result<VanillaRun> {
    let p = data.n_rows();
    let k = init.ncols();
    if init.nrows() != p {
        return Err(ModlError::Dimension("initial dictionary has the wrong row count".into()));
    }
    let mut d = init;
    for j in 0..k {
        let col = project(norm, &d.column(j).to_vec());
        d.column_mut(j).iter_mut().zip(&col).for_each(|(a, b)| *a = *b);
    }
    let mut history = HistoryLog::new(penalty);
    let mut iterates = Vec::with_capacity(order.len());
    for &col in order {
        let x = data.column(col).to_vec();
        let code = prox_gradient_code(&x, d.view(), penalty.kind, penalty.lambda, 1_000_000, 1e-13)?;
        history.push((0..p).collect(), x, code.alpha.clone(), p);
        let t = history.len() as f64;
        let mut c = Array2::<f64>::zeros((k, k));
        let mut b = Array2::<f64>::zeros((p, k));
        for e in &history.entries {
            for i in 0..k {
                for j in 0..k {
                    c[[i, j]] += e.alpha[i] * e.alpha[j];
                }
                for m in 0..p {
                    b[[m, i]] += e.values[m] * e.alpha[i];
                }
            }
        }
        c /= t;
        b /= t;
        for j in 0..k {
            if c[[j, j]] <= 1e-12 {
                continue;
            }
            let dc = d.dot(&c.column(j));
            let u: Vec<f64> = (0..p).map(|m| d[[m, j]] + (b[[m, j]] - dc[m]) / c[[j, j]]).collect();
            let pr = project(norm, &u);
            d.column_mut(j).iter_mut().zip(&pr).for_each(|(a, v)| *a = *v);
        }
        iterates.push(VanillaIterate {
            column: col,
            alpha: code.alpha,
            d: d.clone(),
            c,
            b,
        });
    }
    Ok(VanillaRun {
        dictionary: d,
        iterates,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sort_projection_examples() {
        assert_eq!(sort_project_l1_ball(&[2.0, 0.0]), (vec![1.0, 0.0], 1.0));
        assert_eq!(sort_project_l1_ball(&[0.2, -0.1]), (vec![0.2, -0.1], 0.0));
        assert_eq!(sort_project_l1_ball(&[1.0, 1.0]), (vec![0.5, 0.5], 0.5));
    }

    #[test]
    fn brute_force_projection_examples() {
        assert_eq!(qp_project_l1_ball(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(qp_project_l1_ball(&[1.0, -1.0]), vec![0.5, -0.5]);
        assert_eq!(qp_project_l1_ball(&[0.1, 0.2]), vec![0.1, 0.2]);
    }

    #[test]
    fn prox_gradient_orthonormal_and_least_squares() {
        let d = array![[1.0, 0.0], [0.0, 1.0]];
        let a = prox_gradient_code(&[1.0, 0.2], d.view(), PenaltyKind::Lasso, 0.5, 10_000, 1e-12).unwrap();
        assert_eq!(a.alpha, vec![0.5, 0.0]);
        let d = array![[2.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let x = [3.0, 1.0, 1.0];
        let a = prox_gradient_code(&x, d.view(), PenaltyKind::Lasso, 0.0, 100_000, 1e-12).unwrap();
        assert!((a.alpha[0] - 1.0).abs() < 1e-10 && (a.alpha[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_sample_surrogate() {
        let mut log = HistoryLog::new(Penalty::lasso(0.5));
        log.push(vec![0, 1], vec![1.0, 2.0], vec![1.0, -1.0], 2);
        let d = array![[1.0, 0.0], [0.0, 1.0]];
        // residual (0, 3), Ω = 2
        assert_eq!(surrogate_from_history(&log, d.view()).unwrap(), 4.5 + 1.0);
        assert!(surrogate_from_history(&HistoryLog::new(Penalty::lasso(0.5)), d.view()).is_err());
    }

    #[test]
    fn vanilla_zero_data_keeps_initial_dictionary() {
        let data = DenseColumns::from_columns(&vec![vec![0.0; 4]; 6]);
        let init = array![[2.0, 0.0], [0.0, 0.5], [0.0, 0.0], [0.0, 0.0]];
        let run = vanilla_online_dl(&data, init, Penalty::lasso(0.1), Norm::L2, &[0, 1, 2, 3]).unwrap();
        assert_eq!(run.dictionary, array![[1.0, 0.0], [0.0, 0.5], [0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn vanilla_repeated_unit_vector_converges_to_it() {
        let data = DenseColumns::from_columns(&[vec![1.0, 0.0, 0.0]]);
        let init = array![[0.6], [0.8], [0.0]];
        let run = vanilla_online_dl(&data, init, Penalty::lasso(0.0), Norm::L2, &[0; 30]).unwrap();
        let d = run.dictionary;
        assert!((d[[0, 0]].abs() - 1.0).abs() < 1e-8 && d[[1, 0]].abs() < 1e-8, "{d}");
    }
}
