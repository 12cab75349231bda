use crate::error::{Error, Result};

/// Mass accuracy of the bisection on the shift `τ`.
pub const PROJECTION_TOL: f64 = 1e-12;

/// Euclidean projection of `v` onto `{0 ≤ w ≤ u, Σw = b}`.
///
/// `w_i = clamp(v_i − τ, 0, u_i)` with `τ` found by bisection until the mass
/// matches `b` to [`PROJECTION_TOL`]; the last step solves for `τ` exactly on
/// the free coordinates. Without caps the upper bound is infinite.
pub fn project_capped_simplex(v: &[f64], caps: Option<&[f64]>, mass: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if let Some(u) = caps {
        let caps_sum: f64 = u.iter().sum();
        if caps_sum < mass * (1.0 - 1e-14) {
            return Err(Error::InfeasibleCaps { caps_sum, mass });
        }
    }
    if n == 0 {
        return if mass == 0.0 { Ok(Vec::new()) } else { Err(Error::InfeasibleCaps { caps_sum: 0.0, mass }) };
    }
    let cap = |i: usize| caps.map_or(f64::INFINITY, |u| u[i]);
    let clamp = |i: usize, tau: f64| (v[i] - tau).max(0.0).min(cap(i));
    let total = |tau: f64| (0..n).map(|i| clamp(i, tau)).sum::<f64>();

    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut hi = vmax; // total(hi) = 0 ≤ b
    let mut lo = match caps {
        Some(u) => (0..n).map(|i| v[i] - u[i]).fold(f64::INFINITY, f64::min),
        None => v.iter().copied().fold(f64::INFINITY, f64::min) - mass,
    }; // total(lo) ≥ b
    let tol = PROJECTION_TOL * mass.max(1.0);
    let mut tau = 0.5 * (lo + hi);
    for _ in 0..200 {
        tau = 0.5 * (lo + hi);
        let m = total(tau);
        if (m - mass).abs() <= 0.25 * tol {
            break;
        }
        if m > mass {
            lo = tau;
        } else {
            hi = tau;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    // Exact shift for the current partition.
    let mut fixed = 0.0;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for i in 0..n {
        let x = v[i] - tau;
        if x <= 0.0 {
            continue;
        } else if x >= cap(i) {
            fixed += cap(i);
        } else {
            free_sum += v[i];
            free += 1;
        }
    }
    if free > 0 {
        let exact = (free_sum + fixed - mass) / free as f64;
        let before = (total(tau) - mass).abs();
        if (total(exact) - mass).abs() <= before {
            tau = exact;
        }
    }
    Ok((0..n).map(|i| clamp(i, tau)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn feasible_point_is_fixed() {
        let w = project_capped_simplex(&[0.5, 0.5], None, 1.0).unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn binding_cap() {
        let w = project_capped_simplex(&[10.0, 0.0], Some(&[0.7, 1.0]), 1.0).unwrap();
        assert_abs_diff_eq!(w[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_caps() {
        assert!(matches!(
            project_capped_simplex(&[1.0, 1.0], Some(&[0.3, 0.3]), 1.0),
            Err(Error::InfeasibleCaps { .. })
        ));
    }

    #[test]
    fn zero_caps_remove_nodes() {
        let w = project_capped_simplex(&[5.0, 0.1, 0.2], Some(&[0.0, 1.0, 1.0]), 1.0).unwrap();
        assert_eq!(w[0], 0.0);
        assert_abs_diff_eq!(w[1] + w[2], 1.0, epsilon = 1e-12);
    }

    /// Enumerates every assignment of coordinates to {0, free, cap} and keeps
    /// the KKT-consistent one.
    fn brute_force(v: &[f64], u: &[f64], b: f64) -> Vec<f64> {
        let n = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut state = vec![0u8; n];
            let mut c = code;
            for s in state.iter_mut() {
                *s = (c % 3) as u8;
                c /= 3;
            }
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
            let capped: f64 = (0..n).filter(|&i| state[i] == 2).map(|i| u[i]).sum();
            let w: Vec<f64> = if free.is_empty() {
                if (capped - b).abs() > 1e-12 {
                    continue;
                }
                (0..n).map(|i| if state[i] == 2 { u[i] } else { 0.0 }).collect()
            } else {
                let tau = (free.iter().map(|&i| v[i]).sum::<f64>() + capped - b) / free.len() as f64;
                (0..n)
                    .map(|i| match state[i] {
                        0 => 0.0,
                        1 => v[i] - tau,
                        _ => u[i],
                    })
                    .collect()
            };
            if w.iter().zip(u).any(|(x, c)| *x < -1e-12 || *x > c + 1e-12) {
                continue;
            }
            let d: f64 = w.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, w));
            }
        }
        best.unwrap().1
    }

    proptest! {
        #[test]
        fn matches_active_set_enumeration(
            v in prop::collection::vec(-2.0f64..2.0, 6),
            u in prop::collection::vec(0.05f64..1.0, 6),
            frac in 0.05f64..0.95,
        ) {
            let b = frac * u.iter().sum::<f64>();
            let w = project_capped_simplex(&v, Some(&u), b).unwrap();
            let oracle = brute_force(&v, &u, b);
            for (x, y) in w.iter().zip(&oracle) {
                prop_assert!((x - y).abs() < 1e-9, "{w:?} vs {oracle:?}");
            }
            prop_assert!((w.iter().sum::<f64>() - b).abs() < 1e-11);
        }

        #[test]
        fn uncapped_projection_is_on_simplex(v in prop::collection::vec(-5.0f64..5.0, 1..20), b in 0.1f64..3.0) {
            let w = project_capped_simplex(&v, None, b).unwrap();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - b).abs() < 1e-11);
        }
    }
}
