//! Shape and tilt imperfections of the atom trio.
//!
//! Pairs are always ordered (1,2), (2,3), (3,1).

use std::f64::consts::PI;

use crate::error::{param, Result, RffError};
use crate::linalg::{c, cross3, dot3, norm3, scale3, sub3, C64};
use crate::spin;

pub const PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub sites: [[f64; 3]; 3],
    /// Unit vector along the bias field.
    pub e_z: [f64; 3],
    /// Mean distance defined by Σ (a/a_kl)³ = 3.
    pub a: f64,
    pub a_kl: [f64; 3],
    pub alpha_kl: [f64; 3],
    pub ez_dot_ekl: [f64; 3],
    pub eps_kl: [f64; 3],
    pub eps: f64,
    pub kappa: C64,
    /// φ = arg(κ²), so that κ = e^{iφ} κ*.
    pub phi: f64,
}

/// Equilateral triangle of side `a` in the xy-plane, centred on the origin,
/// site 1 on the +x axis, sites numbered counter-clockwise.
pub fn equilateral_sites(a: f64) -> [[f64; 3]; 3] {
    let r = a / 3f64.sqrt();
    [0.0, 1.0, 2.0].map(|k: f64| {
        let t = 2.0 * PI * k / 3.0;
        [r * t.cos(), r * t.sin(), 0.0]
    })
}

/// (a/a_kl)³ = 1 − 3α_kl with a from Σ (a/a_kl)³ = 3, solved in closed form.
pub fn mean_distance(a_kl: &[f64; 3]) -> f64 {
    let s: f64 = a_kl.iter().map(|d| d.powi(-3)).sum();
    (3.0 / s).cbrt()
}

/// ε_kl = α_kl + (e_z·e_kl)² − 3α_kl(e_z·e_kl)².
pub fn pair_eps(alpha: f64, ez_dot: f64) -> f64 {
    let c2 = ez_dot * ez_dot;
    alpha + c2 - 3.0 * alpha * c2
}

/// κ = ε12 + q²ε23 + qε31.
pub fn imperfection_kappa(eps_kl: &[f64; 3]) -> C64 {
    let q = spin::q();
    c(eps_kl[0], 0.0) + q * q * eps_kl[1] + q * eps_kl[2]
}

/// Derives every imperfection descriptor from the three site positions and
/// the bias direction.
pub fn analyze(sites: &[[f64; 3]; 3], e_z: &[f64; 3]) -> Result<TriangleGeometry> {
    let nz = norm3(e_z);
    if !(nz > 0.0 && nz.is_finite()) {
        return param("bias direction must be a nonzero vector");
    }
    let e_z = scale3(e_z, 1.0 / nz);
    let mut a_kl = [0.0; 3];
    let mut ez_dot = [0.0; 3];
    for (p, &(k, l)) in PAIRS.iter().enumerate() {
        let r = sub3(&sites[l], &sites[k]);
        let d = norm3(&r);
        if !(d > 0.0) {
            return Err(RffError::Geometry(format!("sites {} and {} coincide", k + 1, l + 1)));
        }
        a_kl[p] = d;
        ez_dot[p] = dot3(&e_z, &r) / d;
    }
    let area2 = norm3(&cross3(&sub3(&sites[1], &sites[0]), &sub3(&sites[2], &sites[0])));
    let dmax = a_kl.iter().cloned().fold(0.0, f64::max);
    if area2 <= 1e-10 * dmax * dmax {
        return Err(RffError::Geometry("sites are collinear".into()));
    }
    let a = mean_distance(&a_kl);
    let alpha_kl = a_kl.map(|d| (1.0 - (a / d).powi(3)) / 3.0);
    let eps_kl = [0, 1, 2].map(|p| pair_eps(alpha_kl[p], ez_dot[p]));
    let kappa = imperfection_kappa(&eps_kl);
    let phi = if kappa.norm() == 0.0 { 0.0 } else { (kappa * kappa).arg() };
    Ok(TriangleGeometry {
        sites: *sites,
        e_z,
        a,
        a_kl,
        alpha_kl,
        ez_dot_ekl: ez_dot,
        eps_kl,
        eps: eps_kl.iter().sum(),
        kappa,
        phi,
    })
}

impl TriangleGeometry {
    /// Σ_cyclic (1 − 3α_kl)^{−1/3} e_z·e_kl, which vanishes for a closed
    /// triangle.
    pub fn closure_sum(&self) -> f64 {
        (0..3).map(|p| (1.0 - 3.0 * self.alpha_kl[p]).powf(-1.0 / 3.0) * self.ez_dot_ekl[p]).sum()
    }
}

/// Ω1,2 = (Ω/2)(√((1−ε)² + 8|κ|²) ± (1−ε)).
pub fn frequencies_from(eps: f64, kappa: C64, omega: f64) -> (f64, f64) {
    let d = 1.0 - eps;
    let root = (d * d + 8.0 * kappa.norm_sqr()).sqrt();
    let omega1 = 0.5 * omega * (root + d);
    // Ω2 written without cancellation: (root − d) = 8|κ|²/(root + d)
    let omega2 = 0.5 * omega * 8.0 * kappa.norm_sqr() / (root + d);
    (omega1, omega2)
}

pub fn effective_frequencies(geom: &TriangleGeometry, omega: f64) -> (f64, f64) {
    frequencies_from(geom.eps, geom.kappa, omega)
}

/// Squared tilt targets (e_z·e_kl)² = √((2/3) Σ α²) − α_kl that equalize the
/// ε_kl to first order.
pub fn compensate_tilt(alpha_kl: &[f64; 3]) -> Result<[f64; 3]> {
    if alpha_kl.iter().any(|a| !(a.abs() <= 0.05)) {
        return param(format!("compensation formula is first order; need |α| ≤ 0.05, got {alpha_kl:?}"));
    }
    let r = (2.0 / 3.0 * alpha_kl.iter().map(|a| a * a).sum::<f64>()).sqrt();
    let t = alpha_kl.map(|a| r - a);
    if let Some(bad) = t.iter().find(|&&x| x < -1e-15) {
        return Err(RffError::InfeasibleCompensation(format!("target square {bad:e} is negative")));
    }
    Ok(t.map(|x| x.max(0.0)))
}

/// Best-effort bias direction whose squared projections on the pair
/// directions approach `targets`, by least squares over directions
/// n cosθ + u(ψ) sinθ around the trio's plane normal n. Not a closed-form
/// result: returns the direction and the residual Σ (achieved − target)².
pub fn realize_tilt(sites: &[[f64; 3]; 3], targets: &[f64; 3]) -> Result<([f64; 3], f64)> {
    let e12 = sub3(&sites[1], &sites[0]);
    let e13 = sub3(&sites[2], &sites[0]);
    let nrm = cross3(&e12, &e13);
    let nn = norm3(&nrm);
    if !(nn > 0.0) {
        return Err(RffError::Geometry("sites are collinear".into()));
    }
    let n = scale3(&nrm, 1.0 / nn);
    let u0 = scale3(&e12, 1.0 / norm3(&e12));
    let v0 = cross3(&n, &u0);
    let dirs: Vec<[f64; 3]> = PAIRS
        .iter()
        .map(|&(k, l)| {
            let r = sub3(&sites[l], &sites[k]);
            scale3(&r, 1.0 / norm3(&r))
        })
        .collect();
    let direction = |theta: f64, psi: f64| {
        let (s, cth) = theta.sin_cos();
        let (sp, cp) = psi.sin_cos();
        [
            n[0] * cth + s * (u0[0] * cp + v0[0] * sp),
            n[1] * cth + s * (u0[1] * cp + v0[1] * sp),
            n[2] * cth + s * (u0[2] * cp + v0[2] * sp),
        ]
    };
    let cost = |theta: f64, psi: f64| {
        let e = direction(theta, psi);
        dirs.iter().zip(targets).map(|(d, t)| (dot3(&e, d).powi(2) - t).powi(2)).sum::<f64>()
    };
    // coarse grid, then coordinate-wise golden-section refinement
    let mut best = (0.0, 0.0, cost(0.0, 0.0));
    for i in 0..=90 {
        let theta = 0.5 * PI * i as f64 / 90.0 * 0.5;
        for j in 0..360 {
            let psi = PI * j as f64 / 360.0;
            let cst = cost(theta, psi);
            if cst < best.2 {
                best = (theta, psi, cst);
            }
        }
    }
    let (mut th, mut ps) = (best.0, best.1);
    let mut width = PI / 90.0;
    for _ in 0..60 {
        th = golden(|x| cost(x, ps), th - width, th + width);
        ps = golden(|x| cost(th, x), ps - width, ps + width);
        width *= 0.7;
    }
    Ok((direction(th, ps), cost(th, ps)))
}

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Rotates `v` about the unit axis `k` by `angle` (Rodrigues).
pub fn rotate(v: &[f64; 3], k: &[f64; 3], angle: f64) -> [f64; 3] {
    let (s, cth) = angle.sin_cos();
    let kv = cross3(k, v);
    let kd = dot3(k, v);
    [
        v[0] * cth + kv[0] * s + k[0] * kd * (1.0 - cth),
        v[1] * cth + kv[1] * s + k[1] * kd * (1.0 - cth),
        v[2] * cth + kv[2] * s + k[2] * kd * (1.0 - cth),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const EZ: [f64; 3] = [0.0, 0.0, 1.0];

    #[test]
    fn perfect_triangle() {
        let g = analyze(&equilateral_sites(883e-9), &EZ).unwrap();
        assert!(g.alpha_kl.iter().all(|a| a.abs() < 1e-14));
        assert!(g.eps.abs() < 1e-14 && g.kappa.norm() < 1e-14);
        assert!((g.a - 883e-9).abs() < 1e-20);
    }

    #[test]
    fn equal_tilt_descriptors() {
        // a closed equilateral trio cannot have equal nonzero (e_z·e_kl)², so the
        // equal-tilt case is checked on the descriptors themselves
        let c2: f64 = 0.0004;
        let eps_kl = [pair_eps(0.0, c2.sqrt()); 3];
        let eps: f64 = eps_kl.iter().sum();
        assert!((eps - 3.0 * c2).abs() < 1e-18);
        assert!(imperfection_kappa(&eps_kl).norm() < 1e-18);
        let g = analyze(&equilateral_sites(1.0), &EZ).unwrap();
        assert_eq!(g.ez_dot_ekl, [0.0; 3]);
    }

    #[test]
    fn collinear_rejected() {
        let s = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(matches!(analyze(&s, &EZ), Err(RffError::Geometry(_))));
    }

    #[test]
    fn stretched_pair_against_bisection() {
        let mut s = equilateral_sites(1.0);
        // move site 2 away from site 1 along their joining line by 1%
        let d = sub3(&s[1], &s[0]);
        s[1] = [s[1][0] + 0.01 * d[0], s[1][1] + 0.01 * d[1], s[1][2] + 0.01 * d[2]];
        let g = analyze(&s, &EZ).unwrap();
        let f = |a: f64| g.a_kl.iter().map(|d| (a / d).powi(3)).sum::<f64>() - 3.0;
        let (mut lo, mut hi) = (0.5, 2.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if f(m) > 0.0 { hi = m } else { lo = m }
        }
        let a_bis = 0.5 * (lo + hi);
        assert!((g.a - a_bis).abs() < 1e-14);
        let alpha: Vec<f64> = g.a_kl.iter().map(|d| (1.0 - (a_bis / d).powi(3)) / 3.0).collect();
        for p in 0..3 {
            assert!((alpha[p] - g.alpha_kl[p]).abs() < 1e-14);
        }
        assert!(g.alpha_kl.iter().sum::<f64>().abs() < 1e-12);
        let q = spin::q();
        let kappa = c(alpha[0], 0.0) + q * q * alpha[1] + q * alpha[2];
        assert!((kappa - g.kappa).norm() < 1e-14);
        assert!(g.alpha_kl[0] > 0.0);
    }

    #[test]
    fn phase_convention() {
        let mut s = equilateral_sites(1.0);
        s[2][0] += 0.013;
        s[1][2] += 0.02;
        let g = analyze(&s, &[0.01, -0.02, 1.0]).unwrap();
        let rhs = C64::from_polar(1.0, g.phi) * g.kappa.conj();
        assert!((g.kappa - rhs).norm() < 1e-15);
        assert!(g.closure_sum().abs() < 1e-10);
    }

    #[test]
    fn frequency_examples() {
        let (o1, o2) = frequencies_from(0.02, c(0.0, 0.0), 2.0);
        assert!((o1 - 2.0 * 0.98).abs() < 1e-15 && o2 == 0.0);
        let kappa = c(0.007, 0.0071);
        let (o1, o2) = frequencies_from(1e-4, kappa, 1.0);
        assert!((o1 - 1.0).abs() < 1e-3);
        assert!((o2 - 2.0 * kappa.norm_sqr()).abs() < 1e-3 * o2);
        assert!((o1 * o2 - 2.0 * kappa.norm_sqr()).abs() < 1e-12 * o1 * o2);
    }

    #[test]
    fn compensation_examples() {
        assert_eq!(compensate_tilt(&[0.0; 3]).unwrap(), [0.0; 3]);
        let t = compensate_tilt(&[0.05, 0.0, -0.05]).unwrap();
        assert!(t.iter().all(|&x| x >= 0.0));
        assert!(compensate_tilt(&[0.06, -0.03, -0.03]).is_err());
    }

    #[test]
    fn compensation_reduces_kappa() {
        let alpha = [0.01, -0.005, -0.005];
        // build a triangle with these α: a_kl = a (1 − 3α)^{−1/3}
        let a_kl = alpha.map(|x: f64| (1.0 - 3.0 * x).powf(-1.0 / 3.0));
        let sites = sites_from_lengths(&a_kl);
        let before = analyze(&sites, &EZ).unwrap();
        let targets = compensate_tilt(&before.alpha_kl).unwrap();
        let (ez, resid) = realize_tilt(&sites, &targets).unwrap();
        assert!(resid < 1e-10, "{resid}");
        let after = analyze(&sites, &ez).unwrap();
        assert!(after.kappa.norm() * 10.0 <= before.kappa.norm(), "{} vs {}", after.kappa.norm(), before.kappa.norm());
    }

    pub(crate) fn sites_from_lengths(a_kl: &[f64; 3]) -> [[f64; 3]; 3] {
        let (d12, d23, d31) = (a_kl[0], a_kl[1], a_kl[2]);
        let x = (d12 * d12 + d31 * d31 - d23 * d23) / (2.0 * d12);
        let y = (d31 * d31 - x * x).sqrt();
        [[0.0, 0.0, 0.0], [d12, 0.0, 0.0], [x, y, 0.0]]
    }
}
