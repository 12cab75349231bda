//! Inversion in the unit sphere about `x₀` and the Kelvin transform of measures.

use serde::{Deserialize, Serialize};

use crate::balayage::balayage;
use crate::error::{Error, Result};
use crate::geometry::{distance, separation_radii_or_nearest, PointCloud, MIN_NODE_DISTANCE};
use crate::kernel::{assemble_with, check_parameters, riesz_value, AssembleOptions, DiscreteMeasure};

/// `x* = x₀ + (x − x₀)/|x − x₀|²`.
pub fn invert_point(x: &[f64], x0: &[f64]) -> Option<Vec<f64>> {
    let r = distance(x, x0);
    if r < MIN_NODE_DISTANCE {
        return None;
    }
    Some(x.iter().zip(x0).map(|(a, c)| c + (a - c) / (r * r)).collect())
}

pub fn invert(points: &[Vec<f64>], x0: &[f64]) -> Result<Vec<Vec<f64>>> {
    points
        .iter()
        .enumerate()
        .map(|(i, x)| invert_point(x, x0).ok_or(Error::AtInversionCenter(i)))
        .collect()
}

/// Inverted copy of `cloud` with the same labels and node order. Quadrature
/// weights pick up the surface Jacobian `|x − x₀|^{−2(n−1)}`.
pub fn invert_cloud(cloud: &PointCloud, x0: &[f64]) -> Result<PointCloud> {
    let n = cloud.dim();
    if x0.len() != n {
        return Err(Error::InvalidGeometry(format!("centre has {} coordinates, cloud has {n}", x0.len())));
    }
    let mut coords = Vec::with_capacity(cloud.coords().len());
    let mut weights = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        let x = cloud.point(i);
        let xs = invert_point(x, x0).ok_or(Error::AtInversionCenter(i))?;
        coords.extend_from_slice(&xs);
        weights.push(cloud.quad_weight(i) * distance(x, x0).powi(-2 * (n as i32 - 1)));
    }
    PointCloud::new(n, coords, cloud.labels().to_vec(), weights)
}

/// Kelvin transform `w*_i = |x_i − x₀|^{α−n}·w_i`, carried by the same node
/// indices of the inverted cloud.
pub fn kelvin_measure(cloud: &PointCloud, mu: &DiscreteMeasure, x0: &[f64], alpha: f64) -> Result<DiscreteMeasure> {
    let n = cloud.dim();
    check_parameters(alpha, n)?;
    let mut idx = Vec::with_capacity(mu.node_indices().len());
    let mut w = Vec::with_capacity(idx.capacity());
    for (i, wi) in mu.iter() {
        let r = distance(cloud.point(i), x0);
        if r < MIN_NODE_DISTANCE {
            return Err(Error::AtInversionCenter(i));
        }
        idx.push(i);
        w.push(riesz_value(r, alpha, n) * wi);
    }
    DiscreteMeasure::new(mu.space(), idx, w)
}

/// Riesz potential of `mu` at an arbitrary point.
pub fn potential_at(cloud: &PointCloud, mu: &DiscreteMeasure, alpha: f64, x: &[f64]) -> Result<f64> {
    let mut u = 0.0;
    for (i, w) in mu.iter() {
        let r = distance(x, cloud.point(i));
        if r < MIN_NODE_DISTANCE {
            return Err(Error::CoincidentPoints);
        }
        u += w * riesz_value(r, alpha, cloud.dim());
    }
    Ok(u)
}

fn offdiag_energy(cloud: &PointCloud, mu: &DiscreteMeasure, alpha: f64) -> f64 {
    let atoms: Vec<(usize, f64)> = mu.iter().collect();
    let mut e = 0.0;
    for (a, &(i, wi)) in atoms.iter().enumerate() {
        for &(j, wj) in &atoms[a + 1..] {
            e += 2.0 * wi * wj * riesz_value(cloud.distance(i, j), alpha, cloud.dim());
        }
    }
    e
}

fn self_energy(cloud: &PointCloud, mu: &DiscreteMeasure, alpha: f64) -> Result<f64> {
    let h = separation_radii_or_nearest(cloud)?;
    Ok(mu.iter().map(|(i, w)| w * w * riesz_value(h[i], alpha, cloud.dim())).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KelvinEnergy {
    /// Relative difference of the off-diagonal energies.
    pub offdiag_residual: f64,
    /// Same with the regularized diagonal included (not expected to vanish).
    pub full_residual: f64,
}

pub fn kelvin_energy_check(cloud: &PointCloud, mu: &DiscreteMeasure, x0: &[f64], alpha: f64) -> Result<KelvinEnergy> {
    let inv = invert_cloud(cloud, x0)?;
    let star = kelvin_measure(cloud, mu, x0, alpha)?;
    let e = offdiag_energy(cloud, mu, alpha);
    let es = offdiag_energy(&inv, &star, alpha);
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    let f = e + self_energy(cloud, mu, alpha)?;
    let fs = es + self_energy(&inv, &star, alpha)?;
    Ok(KelvinEnergy {
        offdiag_residual: rel(e, es),
        full_residual: rel(f, fs),
    })
}

/// Largest relative residual of `U^{μ*}(x*) = |x − x₀|^{n−α}·U^μ(x)` over the probes.
pub fn kelvin_potential_residual(cloud: &PointCloud, mu: &DiscreteMeasure, x0: &[f64], alpha: f64, probes: &[Vec<f64>]) -> Result<f64> {
    let inv = invert_cloud(cloud, x0)?;
    let star = kelvin_measure(cloud, mu, x0, alpha)?;
    let n = cloud.dim() as f64;
    let mut worst = 0.0f64;
    for (k, x) in probes.iter().enumerate() {
        let xs = invert_point(x, x0).ok_or(Error::AtInversionCenter(k))?;
        let lhs = potential_at(&inv, &star, alpha, &xs)?;
        let rhs = distance(x, x0).powf(n - alpha) * potential_at(cloud, mu, alpha, x)?;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// L1 distance between the transform of the balayage of `mu` onto `q_nodes`
/// and the balayage of the transform, recomputed on the inverted cloud.
pub fn balayage_covariance(cloud: &PointCloud, mu: &DiscreteMeasure, q_nodes: &[usize], x0: &[f64], alpha: f64, opts: AssembleOptions) -> Result<f64> {
    let k = assemble_with(cloud, alpha, opts)?;
    let swept = balayage(mu, &k, q_nodes)?.measure;
    let swept_star = kelvin_measure(cloud, &swept, x0, alpha)?;
    let inv = invert_cloud(cloud, x0)?;
    let k_inv = assemble_with(&inv, alpha, opts)?;
    let star = kelvin_measure(cloud, mu, x0, alpha)?;
    let star_swept = balayage(&star, &k_inv, q_nodes)?.measure;
    Ok(crate::linalg::l1_distance(&swept_star.dense(), &star_swept.dense()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_example, norm, ExampleName, GenerateOptions, Label};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn unit_sphere_is_fixed_and_inversion_is_involutive() {
        let x0 = [0.3, -0.2, 0.1];
        let x = [1.3, -0.2, 0.1];
        let xs = invert_point(&x, &x0).unwrap();
        assert!(distance(&x, &xs) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let y = random_point(&mut rng);
            let back = invert_point(&invert_point(&y, &x0).unwrap(), &x0).unwrap();
            assert!(distance(&y, &back) < 1e-12 * norm(&y).max(1.0));
        }
        assert!(matches!(invert(&[x0.to_vec()], &x0), Err(Error::AtInversionCenter(0))));
    }

    #[test]
    fn distance_identity() {
        let x0 = [0.1, 0.2, -0.4];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (x, y) = (random_point(&mut rng), random_point(&mut rng));
            let (xs, ys) = (invert_point(&x, &x0).unwrap(), invert_point(&y, &x0).unwrap());
            let expect = distance(&x, &y) / (distance(&x0, &x) * distance(&x0, &y));
            assert!((distance(&xs, &ys) - expect).abs() <= 1e-12 * expect);
        }
    }

    fn random_cloud(rng: &mut ChaCha8Rng, count: usize) -> (PointCloud, DiscreteMeasure) {
        let coords: Vec<f64> = (0..3 * count).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cloud = PointCloud::new(3, coords, vec![Label::F; count], vec![1.0; count]).unwrap();
        let w: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..1.0)).collect();
        let idx: Vec<usize> = (0..count).collect();
        let mu = DiscreteMeasure::on_nodes(count, &idx, &w).unwrap();
        (cloud, mu)
    }

    #[test]
    fn weights_on_unit_sphere_and_double_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (cloud, mu) = random_cloud(&mut rng, 30);
        let x0 = [2.5, 0.0, 0.0];
        let star = kelvin_measure(&cloud, &mu, &x0, 1.5).unwrap();
        let inv = invert_cloud(&cloud, &x0).unwrap();
        let back = kelvin_measure(&inv, &star, &x0, 1.5).unwrap();
        for ((_, a), (_, b)) in mu.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
        let sphere = crate::geometry::sphere_cloud(1.0, 50).unwrap();
        let idx: Vec<usize> = (0..50).collect();
        let m = DiscreteMeasure::on_nodes(50, &idx, &[0.02; 50]).unwrap();
        let s = kelvin_measure(&sphere, &m, &[0.0; 3], 2.0).unwrap();
        for (_, w) in s.iter() {
            assert!((w - 0.02).abs() < 1e-15);
        }
    }

    #[test]
    fn potential_relation_and_energy_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (cloud, mu) = random_cloud(&mut rng, 30);
        let x0 = [0.0, 0.0, 2.0];
        for alpha in [1.0, 1.5, 2.0] {
            let probes: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(1.5..3.0)).collect()).collect();
            assert!(kelvin_potential_residual(&cloud, &mu, &x0, alpha, &probes).unwrap() <= 1e-10);
            let e = kelvin_energy_check(&cloud, &mu, &x0, alpha).unwrap();
            assert!(e.offdiag_residual <= 1e-10, "{e:?}");
            assert!(e.full_residual.is_finite());
        }
        let single = DiscreteMeasure::dirac(cloud.len(), 4).unwrap();
        assert_eq!(kelvin_energy_check(&cloud, &single, &x0, 2.0).unwrap().offdiag_residual, 0.0);
    }

    #[test]
    fn additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (cloud, a) = random_cloud(&mut rng, 20);
        let b = a.scaled(0.5);
        let x0 = [0.0, 3.0, 0.0];
        let lhs = kelvin_measure(&cloud, &a.add(&b).unwrap(), &x0, 2.0).unwrap();
        let rhs = kelvin_measure(&cloud, &a, &x0, 2.0).unwrap().add(&kelvin_measure(&cloud, &b, &x0, 2.0).unwrap()).unwrap();
        assert!(crate::linalg::l1_distance(&lhs.dense(), &rhs.dense()) < 1e-12);
    }

    #[test]
    fn balayage_commutes_with_kelvin() {
        let opts = GenerateOptions {
            resolution: 8,
            truncation_radius: 8.0,
            ..Default::default()
        };
        let g = generate_example(ExampleName::Concentric, &opts).unwrap();
        let f = g.f_nodes();
        let w = vec![1.0 / f.len() as f64; f.len()];
        let mu = DiscreteMeasure::on_nodes(g.cloud.len(), &f, &w).unwrap();
        let l1 = balayage_covariance(&g.cloud, &mu, &g.dc_nodes(), &[0.0; 3], 2.0, AssembleOptions { diag_scale: 1.9, certify: true }).unwrap();
        assert!(l1 <= 5e-2, "L1 {l1}");
    }
}
