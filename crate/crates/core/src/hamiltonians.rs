//! Bias, noise and dipole-dipole Hamiltonians plus the derived time scales.
//!
//! Every Hamiltonian is returned as H/ħ, i.e. in rad/s for SI inputs. The same
//! functions serve the dimensionless mode (ħ = 1, times in 1/Γ or 1/Ω) when
//! frequencies are passed in those units.

use crate::error::{param, Result, RffError};
use crate::linalg::{self, c, CMat};
use crate::noise::NoiseParams;
use crate::spin::{self, Axis};

/// Fixed physical constants (SI).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Bohr magneton, J/T.
    pub mu_b: f64,
    /// μ0/4π, T·m/A.
    pub mu0_over_4pi: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Gyromagnetic ratio of the f = 1/2 ground doublet.
    pub gyro_ratio: f64,
    /// Ground-state hyperfine splitting, Hz.
    pub hyperfine_split: f64,
    /// Mass of a ⁶Li atom, kg (6.0151228874 u).
    pub atom_mass: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    mu_b: 9.2740100783e-24,
    mu0_over_4pi: 1e-7,
    hbar: 1.054571817e-34,
    gyro_ratio: -2.0 / 3.0,
    hyperfine_split: 228.2e6,
    atom_mass: 6.0151228874 * 1.66053906660e-27,
};

/// Derived frequencies (rad/s) and times (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConstants {
    pub omega0: f64,
    pub omega: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub tau1: f64,
    pub omega_tau: f64,
}

/// ω0 J_z.
pub fn h_bias(omega0: f64, n_atoms: usize) -> Result<CMat> {
    if !(omega0 >= 0.0) {
        return param(format!("omega0 must be nonnegative, got {omega0}"));
    }
    Ok(spin::total_spin(n_atoms)?.jz * c(omega0, 0.0))
}

/// Which magnetic moment couples the stray field to the atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseCoupling {
    /// f = 1/2 ground doublet: H = −(μ_B/3) Σ b_k·σ_k.
    Effective,
    /// Bare electron moment: H = μ_B Σ b_k·σ_k.
    Raw,
}

impl NoiseCoupling {
    /// Coefficient γ in H/ħ = −γ Σ b_k·σ_k, rad/(s·T).
    pub fn gamma(self) -> f64 {
        match self {
            NoiseCoupling::Effective => CONSTANTS.mu_b / (3.0 * CONSTANTS.hbar),
            NoiseCoupling::Raw => -CONSTANTS.mu_b / CONSTANTS.hbar,
        }
    }
}

/// −γ Σ_k b_k·σ_k with one field vector per site.
pub fn h_noise_scaled(fields: &[[f64; 3]], gamma: f64) -> Result<CMat> {
    let n = fields.len();
    let dim = 1usize << n;
    let mut h = linalg::zeros(dim);
    for (k, b) in fields.iter().enumerate() {
        for (ax, &bc) in Axis::ALL.iter().zip(b.iter()) {
            if bc != 0.0 {
                h += spin::pauli_site(k + 1, *ax, n)? * c(-gamma * bc, 0.0);
            }
        }
    }
    Ok(h)
}

/// Stray-field Hamiltonian for SI fields (tesla).
pub fn h_noise(fields: &[[f64; 3]], coupling: NoiseCoupling) -> Result<CMat> {
    h_noise_scaled(fields, coupling.gamma())
}

/// Ω = (μ0/4π) μ_B² / (3 a³ ħ).
pub fn omega_dd(a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return param(format!("distance must be positive, got {a}"));
    }
    let k = &CONSTANTS;
    Ok(k.mu0_over_4pi * k.mu_b * k.mu_b / (3.0 * a.powi(3) * k.hbar))
}

/// Dipole coupling that scales as d⁻³ from a reference pair distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleCoupling {
    pub omega_ref: f64,
    pub a_ref: f64,
}

impl DipoleCoupling {
    pub fn si(a_ref: f64) -> Result<Self> {
        Ok(Self { omega_ref: omega_dd(a_ref)?, a_ref })
    }

    pub fn omega_at(&self, d: f64) -> f64 {
        self.omega_ref * (self.a_ref / d).powi(3)
    }
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..n {
        for l in k + 1..n {
            out.push((k, l));
        }
    }
    out
}

/// Full dipole-dipole interaction (1/3) Σ_pairs Ω_kl σ_k·(1 − 3 e_kl e_kl)·σ_l.
pub fn h_dd_full(sites: &[[f64; 3]], coupling: &DipoleCoupling) -> Result<CMat> {
    let n = sites.len();
    if n != 3 && n != 4 {
        return param(format!("need 3 or 4 sites, got {n}"));
    }
    let sig: Vec<[CMat; 3]> = (1..=n)
        .map(|k| Axis::ALL.map(|ax| spin::pauli_site(k, ax, n).unwrap()))
        .collect();
    let mut h = linalg::zeros(1 << n);
    for (k, l) in pairs(n) {
        let r = linalg::sub3(&sites[l], &sites[k]);
        let d = linalg::norm3(&r);
        if !(d > 1e-12 * (linalg::norm3(&sites[k]) + linalg::norm3(&sites[l])).max(f64::MIN_POSITIVE)) {
            return Err(RffError::Geometry(format!("sites {} and {} coincide", k + 1, l + 1)));
        }
        let e = linalg::scale3(&r, 1.0 / d);
        let pref = coupling.omega_at(d) / 3.0;
        for a in 0..3 {
            for b in 0..3 {
                let dyad = if a == b { 1.0 } else { 0.0 } - 3.0 * e[a] * e[b];
                if dyad != 0.0 {
                    h += &sig[k][a] * &sig[l][b] * c(pref * dyad, 0.0);
                }
            }
        }
    }
    Ok(h)
}

/// Keeps the matrix elements between states of equal J_z (the rotating-wave
/// truncation for a bias field along z).
pub fn secular_part(h: &CMat) -> CMat {
    let mut out = h.clone();
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            if i.count_ones() != j.count_ones() {
                out[(i, j)] = linalg::ZERO;
            }
        }
    }
    out
}

/// J_z² − J²/3.
pub fn ideal_dd_shape(n_atoms: usize) -> Result<CMat> {
    let js = spin::total_spin(n_atoms)?;
    Ok(&js.jz * &js.jz - &js.jsq * c(1.0 / 3.0, 0.0))
}

/// K = Σ_pairs ε_kl (σ_k·σ_l − 3σ_kz σ_lz)/2 for the pairs (1,2), (2,3), (3,1).
pub fn k_operator(eps: [f64; 3]) -> CMat {
    let mut k = linalg::zeros(8);
    for (&e, (a, b)) in eps.iter().zip([(1, 2), (2, 3), (3, 1)]) {
        k += pair_anisotropy(a, b, 3) * c(0.5 * e, 0.0);
    }
    k
}

/// σ_a·σ_b − 3σ_az σ_bz.
fn pair_anisotropy(a: usize, b: usize, n: usize) -> CMat {
    spin::pair_dot(a, b, n).unwrap()
        - spin::pauli_site(a, Axis::Z, n).unwrap() * spin::pauli_site(b, Axis::Z, n).unwrap() * c(3.0, 0.0)
}

/// Ω(J_z² − J²/3 + K) for the imperfection parameters ε_kl.
pub fn h_dd_effective_eps(eps: [f64; 3], omega: f64) -> CMat {
    (ideal_dd_shape(3).unwrap() + k_operator(eps)) * c(omega, 0.0)
}

/// Effective three-atom dipole-dipole Hamiltonian for an analyzed geometry.
pub fn h_dd_effective(geom: &crate::geometry::TriangleGeometry, omega: f64) -> CMat {
    h_dd_effective_eps(geom.eps_kl, omega)
}

/// Relative weakening of the diagonal pairs of a square, c = (4 − √2)/6.
pub fn square_diagonal_c() -> f64 {
    (4.0 - 2f64.sqrt()) / 6.0
}

/// Ω(J_z² − J²/3 + K) on four spins with K = (c/4)(σ1·σ3 + σ2·σ4 − 3σ1zσ3z − 3σ2zσ4z).
pub fn h_dd_four_square_with(c_diag: f64, omega: f64) -> CMat {
    let k = (pair_anisotropy(1, 3, 4) + pair_anisotropy(2, 4, 4)) * c(c_diag / 4.0, 0.0);
    (ideal_dd_shape(4).unwrap() + k) * c(omega, 0.0)
}

/// Effective square-geometry Hamiltonian; sites 1-2-3-4 run around the square.
pub fn h_dd_four_square(omega: f64) -> CMat {
    h_dd_four_square_with(square_diagonal_c(), omega)
}

/// Corners of a unit-side square in the xy-plane, in cyclic order.
pub fn square_sites(a: f64) -> [[f64; 3]; 4] {
    let h = a / 2.0;
    [[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]]
}

/// Equilateral base of side `a` in the xy-plane with the apex at height `h`
/// above its centroid.
pub fn pyramid_sites(a: f64, h: f64) -> [[f64; 3]; 4] {
    let r = a / 3f64.sqrt();
    let ang = |k: f64| 2.0 * std::f64::consts::PI * k / 3.0;
    [
        [r * ang(0.0).cos(), r * ang(0.0).sin(), 0.0],
        [r * ang(1.0).cos(), r * ang(1.0).sin(), 0.0],
        [r * ang(2.0).cos(), r * ang(2.0).sin(), 0.0],
        [0.0, 0.0, h],
    ]
}

/// Rotating-wave pair strengths d⁻³ · ½[1 − 3(e_z·e)²] for all pairs.
pub fn effective_pair_strengths(sites: &[[f64; 3]]) -> Vec<f64> {
    pairs(sites.len())
        .into_iter()
        .map(|(k, l)| {
            let r = linalg::sub3(&sites[l], &sites[k]);
            let d = linalg::norm3(&r);
            let cz = r[2] / d;
            0.5 * (1.0 - 3.0 * cz * cz) / d.powi(3)
        })
        .collect()
}

/// (max − min)/max|·| of the effective pair strengths of a pyramid with
/// height ratio h/a.
pub fn pyramid_coupling_spread(h_over_a: f64) -> f64 {
    let s = effective_pair_strengths(&pyramid_sites(1.0, h_over_a));
    let max = s.iter().cloned().fold(f64::MIN, f64::max);
    let min = s.iter().cloned().fold(f64::MAX, f64::min);
    let scale = s.iter().map(|x| x.abs()).fold(0.0, f64::max);
    (max - min) / scale
}

/// Mismatch between apex and base pair strengths at height ratio h/a.
fn pyramid_mismatch(h_over_a: f64) -> f64 {
    let s = effective_pair_strengths(&pyramid_sites(1.0, h_over_a));
    // pairs (0,3), (1,3), (2,3) involve the apex; (0,1) is a base edge
    s[2] - s[0]
}

/// Height ratio h/a that balances all six pyramid couplings, found by
/// bisection on [0.3, 1.0].
pub fn pyramid_balance_height() -> Result<f64> {
    let (mut lo, mut hi) = (0.3, 1.0);
    let (flo, fhi) = (pyramid_mismatch(lo), pyramid_mismatch(hi));
    if flo * fhi > 0.0 {
        return Err(RffError::Numerical(format!(
            "pyramid balance not bracketed: f({lo}) = {flo:e}, f({hi}) = {fhi:e}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = pyramid_mismatch(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Ratio b/a of apex-to-base distance over base side at the balance height.
pub fn pyramid_balance_ratio() -> Result<f64> {
    let h = pyramid_balance_height()?;
    Ok((1.0 / 3.0 + h * h).sqrt())
}

/// Effective (secular) dipole-dipole Hamiltonian of the balanced pyramid,
/// normalized so that every pair has the strength of a base edge of length
/// `a` with coupling Ω.
pub fn h_dd_pyramid(omega: f64, h_over_a: f64) -> Result<CMat> {
    let sites = pyramid_sites(1.0, h_over_a);
    let full = h_dd_full(&sites, &DipoleCoupling { omega_ref: omega, a_ref: 1.0 })?;
    Ok(secular_part(&full))
}

/// τ and τ′ for a coupling H/ħ = −γ Σ b·σ: τ = Γ/(3γ²(ga)²),
/// τ′ = Γ/(γ²(8b² − 3(ga)²)).
pub fn lindblad_times(noise: &NoiseParams, a: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return param(format!("distance must be positive, got {a}"));
    }
    let ga2 = (noise.g * a).powi(2);
    let b2 = noise.b * noise.b;
    if !(noise.g > 0.0) {
        return param("gradient strength g must be positive");
    }
    if !(8.0 * b2 > 3.0 * ga2) {
        return param(format!(
            "unphysical regime: 8b² = {:e} must exceed 3(ga)² = {:e}",
            8.0 * b2,
            3.0 * ga2
        ));
    }
    let g2 = gamma * gamma;
    let tau = noise.gamma / (3.0 * g2 * ga2);
    let tau_prime = noise.gamma / (g2 * (8.0 * b2 - 3.0 * ga2));
    Ok((tau, tau_prime))
}

/// τ1 = 2ττ′/(τ + τ′).
pub fn tau1_from(tau: f64, tau_prime: f64) -> f64 {
    2.0 * tau * tau_prime / (tau + tau_prime)
}

/// ω0 = 2 μ_B B0 / (3ħ).
pub fn omega0_from_field(b0: f64) -> f64 {
    2.0 * CONSTANTS.mu_b * b0 / (3.0 * CONSTANTS.hbar)
}

/// All derived constants in SI from the noise statistics, the trio size and
/// the bias field.
pub fn derived_constants(noise: &NoiseParams, a: f64, b0: f64) -> Result<CouplingConstants> {
    noise.validate()?;
    if !(b0 > 0.0) {
        return param(format!("bias field must be positive, got {b0}"));
    }
    let (tau, tau_prime) = lindblad_times(noise, a, NoiseCoupling::Effective.gamma())?;
    let omega = omega_dd(a)?;
    Ok(CouplingConstants {
        omega0: omega0_from_field(b0),
        omega,
        tau,
        tau_prime,
        tau1: tau1_from(tau, tau_prime),
        omega_tau: omega * tau,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegimeWarning {
    /// ω0 is not small against the hyperfine transition frequency.
    HyperfineMixing { ratio: f64 },
    /// ω0 does not dominate the dipole-dipole coupling.
    WeakBias { ratio: f64 },
}

impl std::fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeWarning::HyperfineMixing { ratio } => {
                write!(f, "bias frequency is {ratio:.3e} of the hyperfine splitting (threshold 1e-3)")
            }
            RegimeWarning::WeakBias { ratio } => {
                write!(f, "bias frequency is only {ratio:.3e} times the dipole coupling (need > 10)")
            }
        }
    }
}

/// Checks ω0 ≪ 2π × 228.2 MHz and ω0 > 10 Ω.
pub fn validate_regime(omega0: f64, omega: f64) -> Vec<RegimeWarning> {
    let mut out = Vec::new();
    let hf = 2.0 * std::f64::consts::PI * CONSTANTS.hyperfine_split;
    let r = omega0 / hf;
    if r > 1e-3 {
        out.push(RegimeWarning::HyperfineMixing { ratio: r });
    }
    if omega0 <= 10.0 * omega {
        out.push(RegimeWarning::WeakBias { ratio: omega0 / omega });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, max_abs_diff};
    use crate::spin::{RffOperators, SpinSector};
    use std::f64::consts::PI;

    fn triangle(a: f64) -> [[f64; 3]; 3] {
        let r = a / 3f64.sqrt();
        [0.0, 1.0, 2.0].map(|k: f64| {
            let t = 2.0 * PI * k / 3.0;
            [r * t.cos(), r * t.sin(), 0.0]
        })
    }

    #[test]
    fn bias_spectrum() {
        let h = h_bias(2.0, 3).unwrap();
        let ev = linalg::eigvalsh(&h);
        let want = [-3.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 3.0];
        for (e, w) in ev.iter().zip(want) {
            assert!((e - w).abs() < 1e-12);
        }
        assert!(max_abs(&h_bias(0.0, 3).unwrap()) == 0.0);
        for s in &RffOperators::shared().sigma {
            assert!(max_abs(&linalg::commutator(&h, s)) < 1e-12);
        }
        assert!(h_bias(-1.0, 3).is_err());
    }

    #[test]
    fn homogeneous_noise_is_invisible() {
        let b = 1e-9;
        let h = h_noise(&[[0.0, 0.0, b]; 3], NoiseCoupling::Effective).unwrap();
        let jz = spin::total_spin(3).unwrap().jz;
        let want = jz * c(-NoiseCoupling::Effective.gamma() * b * 2.0, 0.0);
        assert!(max_abs_diff(&h, &want) < 1e-12 * max_abs(&want));
        for s in &RffOperators::shared().sigma {
            assert!(max_abs(&linalg::commutator(&h, s)) < 1e-12 * max_abs(&h));
        }
        assert_eq!(max_abs(&h_noise(&[[0.0; 3]; 3], NoiseCoupling::Raw).unwrap()), 0.0);
    }

    #[test]
    fn noise_hermitian() {
        let f = [[0.3, -1.2, 0.7], [2.0, 0.1, -0.4], [-0.9, 0.5, 1.1]];
        let h = h_noise_scaled(&f, 1.7).unwrap();
        assert!(linalg::hermiticity_defect(&h) <= 1e-15 * max_abs(&h));
    }

    #[test]
    fn dipole_frequency_values() {
        let two_pi = 2.0 * PI;
        let w = omega_dd(883e-9).unwrap() / two_pi;
        assert!((w - 6e-3).abs() < 0.1 * 6e-3, "{w}");
        let w = omega_dd(663e-9).unwrap() / two_pi;
        assert!((w - 16e-3).abs() < 0.1 * 16e-3, "{w}");
        let r = omega_dd(1e-6).unwrap() / omega_dd(2e-6).unwrap();
        assert!((r - 8.0).abs() < 1e-12);
        assert!(omega_dd(0.0).is_err());
    }

    #[test]
    fn pair_along_z_dyadic() {
        let sites = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [50.0, 0.0, 0.0]];
        let coupling = DipoleCoupling { omega_ref: 3.0, a_ref: 1.0 };
        let h = h_dd_full(&sites, &coupling).unwrap();
        // restrict to the (1,2) pair by comparing with its explicit form
        let n = 3;
        let s = |k, ax| spin::pauli_site(k, ax, n).unwrap();
        let pair12 = s(1, Axis::X) * s(2, Axis::X) + s(1, Axis::Y) * s(2, Axis::Y) - s(1, Axis::Z) * s(2, Axis::Z) * c(2.0, 0.0);
        let rest = &h - &pair12;
        assert!(max_abs(&rest) < 1e-4);
    }

    #[test]
    fn coincident_sites_rejected() {
        let sites = [[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]];
        assert!(matches!(
            h_dd_full(&sites, &DipoleCoupling { omega_ref: 1.0, a_ref: 1.0 }),
            Err(RffError::Geometry(_))
        ));
    }

    #[test]
    fn relabeling_keeps_spectrum() {
        let sites = [[0.0, 0.0, 0.0], [1.0, 0.1, 0.02], [0.4, 0.9, -0.03]];
        let swapped = [sites[1], sites[0], sites[2]];
        let cpl = DipoleCoupling { omega_ref: 1.0, a_ref: 1.0 };
        let a = linalg::eigvalsh(&h_dd_full(&sites, &cpl).unwrap());
        let b = linalg::eigvalsh(&h_dd_full(&swapped, &cpl).unwrap());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_triangle_secular_matches_effective() {
        let cpl = DipoleCoupling { omega_ref: 0.7, a_ref: 1.0 };
        let full = h_dd_full(&triangle(1.0), &cpl).unwrap();
        let eff = h_dd_effective_eps([0.0; 3], 0.7);
        assert!(max_abs_diff(&secular_part(&full), &eff) < 1e-12);
        let p = RffOperators::shared().p_half.clone();
        assert!(max_abs(&(&p * &eff * &p)) < 1e-12);
    }

    #[test]
    fn combined_ideal_spectrum() {
        let (w0, om) = (10.0, 0.3);
        let h = h_bias(w0, 3).unwrap() + h_dd_effective_eps([0.0; 3], om);
        let mut want = vec![1.5 * w0 + om, -1.5 * w0 + om, 0.5 * w0 - om, -0.5 * w0 - om, 0.5 * w0, 0.5 * w0, -0.5 * w0, -0.5 * w0];
        want.sort_by(f64::total_cmp);
        for (e, w) in linalg::eigvalsh(&h).iter().zip(want) {
            assert!((e - w).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_eps_commutes_with_sigma() {
        let e = 0.01;
        let h = h_dd_effective_eps([e / 3.0; 3], 1.0);
        let ops = RffOperators::shared();
        for s in &ops.sigma {
            let restricted = &ops.p_half * &h * &ops.p_half;
            assert!(max_abs(&linalg::commutator(&restricted, s)) < 1e-12);
        }
    }

    #[test]
    fn k_vanishes_in_sector() {
        let p = spin::projector_j(SpinSector::Half);
        let k = k_operator([0.013, -0.004, 0.021]);
        assert!(max_abs(&(&p * &k * &p)) < 1e-12);
    }

    #[test]
    fn square_matches_secular_full() {
        let c_sq = square_diagonal_c();
        assert!((c_sq - 0.43096).abs() < 1e-5);
        let full = h_dd_full(&square_sites(1.0), &DipoleCoupling { omega_ref: 1.0, a_ref: 1.0 }).unwrap();
        assert!(max_abs_diff(&secular_part(&full), &h_dd_four_square(1.0)) < 1e-12);
    }

    #[test]
    fn balanced_square_commutes_with_singlet_projector() {
        let p = spin::four_atom_sector().projector;
        let h = h_dd_four_square_with(0.0, 1.0);
        assert!(max_abs(&linalg::commutator(&h, &p)) < 1e-12);
        let h = h_dd_four_square(1.0);
        assert!(max_abs(&linalg::commutator(&h, &p)) > 1e-3);
    }

    #[test]
    fn pyramid_ratio() {
        let r = pyramid_balance_ratio().unwrap();
        assert!((r - 0.661).abs() < 1e-3, "{r}");
        // independent check: b/a solves 1 − 2x² − x⁵ = 0
        assert!((1.0 - 2.0 * r * r - r.powi(5)).abs() < 1e-12);
        let h = pyramid_balance_height().unwrap();
        assert!(pyramid_coupling_spread(h) < 1e-9);
        assert!(pyramid_coupling_spread(0.3) > 1e-2 && pyramid_coupling_spread(0.6) > 1e-2);
    }

    #[test]
    fn balanced_pyramid_is_rotationally_invariant() {
        let h = h_dd_pyramid(1.0, pyramid_balance_height().unwrap()).unwrap();
        let p = spin::four_atom_sector().projector;
        assert!(max_abs(&linalg::commutator(&h, &p)) < 1e-10);
    }

    #[test]
    fn reference_constants() {
        let noise = NoiseParams { b: 5e-10, g: 1e-9, gamma: 50.0 };
        let k = derived_constants(&noise, 883e-9, 2e-7).unwrap();
        assert!(k.tau > 1e10 && k.tau < 4e10, "{}", k.tau);
        assert!(k.tau1 > 0.02 && k.tau1 < 0.08, "{}", k.tau1);
        assert!(k.omega_tau > 1e8 && k.omega_tau < 1e10);
        assert!(k.tau_prime <= k.tau);
        assert!((k.omega0 / (2.0 * PI) - 2.0e3).abs() < 0.15e3, "{}", k.omega0 / (2.0 * PI));
        assert!(validate_regime(k.omega0, k.omega).is_empty());
        assert_eq!(validate_regime(k.omega, k.omega).len(), 1);
        assert!(validate_regime(2.0 * PI * 228.2e6, k.omega)
            .iter()
            .any(|w| matches!(w, RegimeWarning::HyperfineMixing { .. })));
    }

    #[test]
    fn unphysical_noise_rejected() {
        let noise = NoiseParams { b: 1e-12, g: 1e-3, gamma: 50.0 };
        assert!(matches!(derived_constants(&noise, 883e-9, 2e-7), Err(RffError::Parameter(_))));
    }
}
