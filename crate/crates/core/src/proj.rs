//! Norm-ball projections and soft-thresholding.
//!
//! Dictionary atoms live in a product of unit balls for either the ℓ1 or the
//! ℓ2 norm. Every projection here is a pure function of its input.

use serde::{Deserialize, Serialize};

/// Norm constraining each dictionary atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Projects `v` in place onto the unit ball of this norm.
    pub fn project_in_place(self, v: &mut [f64]) {
        match self {
            Norm::L1 => {
                let theta = l1_ball_threshold(v, 1.0);
                if theta > 0.0 {
                    v.iter_mut().for_each(|x| *x = soft_threshold(*x, theta));
                }
            }
            Norm::L2 => {
                let scale = Norm::L2.eval(v).max(1.0);
                if scale > 1.0 {
                    v.iter_mut().for_each(|x| *x /= scale);
                }
            }
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(format!("unknown norm `{other}` (expected l1 or l2)")),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        })
    }
}

#[inline]
pub fn soft_threshold(u: f64, theta: f64) -> f64 {
    debug_assert!(theta >= 0.0);
    let m = u.abs() - theta;
    if m > 0.0 {
        m.copysign(u)
    } else {
        0.0
    }
}

/// Returns `v / max(1, ‖v‖₂)`.
pub fn project_l2_ball(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    Norm::L2.project_in_place(&mut out);
    out
}

/// Threshold `θ` such that `soft_threshold(v, θ)` is the projection of `v`
/// onto the ℓ1 ball of the given radius. Zero when `v` is already inside.
///
/// Uses the active-set iteration: start from all nonzero magnitudes, drop
/// those not above the running threshold, recompute, until nothing is
/// dropped. The threshold only increases, so the loop terminates after at
/// most `len(v)` passes and usually after a handful.
pub fn l1_ball_threshold(v: &[f64], radius: f64) -> f64 {
    debug_assert!(radius >= 0.0);
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return 0.0;
    }
    if radius <= 0.0 {
        return v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    }
    let mut active: Vec<f64> = v.iter().map(|x| x.abs()).filter(|&a| a > 0.0).collect();
    let mut theta = (active.iter().sum::<f64>() - radius) / active.len() as f64;
    loop {
        let before = active.len();
        active.retain(|&a| a > theta);
        // with a radius far below the magnitudes, rounding can drop every
        // entry; θ ≥ max|v| then already maps v to zero
        if active.len() == before || active.is_empty() {
            return theta;
        }
        theta = (active.iter().sum::<f64>() - radius) / active.len() as f64;
    }
}

/// Euclidean projection onto the unit ℓ1 ball, with the threshold used.
pub fn project_l1_ball(v: &[f64]) -> (Vec<f64>, f64) {
    let theta = l1_ball_threshold(v, 1.0);
    let out = if theta > 0.0 {
        v.iter().map(|&x| soft_threshold(x, theta)).collect()
    } else {
        v.to_vec()
    };
    (out, theta)
}

/// Euclidean projection onto the ℓ1 ball of radius `radius`.
pub fn project_l1_ball_partial(v: &[f64], radius: f64) -> Vec<f64> {
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let theta = l1_ball_threshold(v, radius);
    if theta > 0.0 {
        v.iter().map(|&x| soft_threshold(x, theta)).collect()
    } else {
        v.to_vec()
    }
}

/// Euclidean projection onto the ℓ2 ball of radius `radius`, in place.
pub(crate) fn project_l2_radius_in_place(v: &mut [f64], radius: f64) {
    if radius <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let norm = Norm::L2.eval(v);
    if norm > radius {
        let scale = radius / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn soft_threshold_examples() {
        assert!((soft_threshold(1.2, 0.5) - 0.7).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.3, 0.5), 0.0);
        assert!((soft_threshold(-1.0, 0.5) + 0.5).abs() < 1e-15);
        // exact tie collapses to zero
        assert_eq!(soft_threshold(0.5, 0.5), 0.0);
    }

    #[test]
    fn l2_examples() {
        assert!(close(&project_l2_ball(&[3.0, 4.0]), &[0.6, 0.8], 1e-15));
        assert_eq!(project_l2_ball(&[0.3, 0.4]), vec![0.3, 0.4]);
        assert_eq!(project_l2_ball(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn l1_examples() {
        let (u, t) = project_l1_ball(&[2.0, 0.0]);
        assert_eq!(u, vec![1.0, 0.0]);
        assert_eq!(t, 1.0);
        let (u, t) = project_l1_ball(&[0.2, -0.1]);
        assert_eq!(u, vec![0.2, -0.1]);
        assert_eq!(t, 0.0);
        let (u, t) = project_l1_ball(&[1.0, 1.0]);
        assert_eq!(u, vec![0.5, 0.5]);
        assert_eq!(t, 0.5);
    }

    #[test]
    fn tiny_radius_does_not_lose_the_threshold() {
        let v = [3.0, -1.5, 0.25];
        let theta = l1_ball_threshold(&v, f64::EPSILON);
        assert!(theta.is_finite() && theta > 0.0);
        let out = project_l1_ball_partial(&v, f64::EPSILON);
        assert!(out.iter().map(|x| x.abs()).sum::<f64>() <= f64::EPSILON);
    }

    #[test]
    fn l1_partial_examples() {
        assert_eq!(project_l1_ball_partial(&[1.0, 1.0], 1.0), vec![0.5, 0.5]);
        assert_eq!(project_l1_ball_partial(&[0.1, 0.0], 1.0), vec![0.1, 0.0]);
        assert_eq!(project_l1_ball_partial(&[5.0], 0.0), vec![0.0]);
    }

    proptest! {
        #[test]
        fn l1_projection_is_feasible_idempotent_and_kkt(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let (u, theta) = project_l1_ball(&v);
            prop_assert!(Norm::L1.eval(&u) <= 1.0 + 1e-12);
            let (uu, _) = project_l1_ball(&u);
            prop_assert!(close(&u, &uu, 1e-12));
            for (x, y) in v.iter().zip(&u) {
                prop_assert_eq!(*y, soft_threshold(*x, theta));
                if *y != 0.0 {
                    prop_assert_eq!(y.signum(), x.signum());
                }
            }
            if theta > 0.0 {
                let s: f64 = v.iter().map(|x| (x.abs() - theta).max(0.0)).sum();
                prop_assert!((s - 1.0).abs() <= 1e-10);
            } else {
                prop_assert!(Norm::L1.eval(&v) <= 1.0);
            }
        }

        #[test]
        fn l2_projection_is_feasible_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let u = project_l2_ball(&v);
            prop_assert!(Norm::L2.eval(&u) <= 1.0 + 1e-12);
            prop_assert!(close(&u, &project_l2_ball(&u), 1e-12));
        }

        #[test]
        fn partial_projection_respects_radius(
            v in prop::collection::vec(-5.0f64..5.0, 1..20),
            radius in 0.0f64..3.0,
        ) {
            let u = project_l1_ball_partial(&v, radius);
            prop_assert!(Norm::L1.eval(&u) <= radius + 1e-12);
            let uu = project_l1_ball_partial(&u, radius);
            prop_assert!(close(&u, &uu, 1e-12));
        }
    }
}
