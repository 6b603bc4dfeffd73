//! Invariant batteries run by `rff validate` and the acceptance tests.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, RffError};
use crate::evolution::{self, four_atom, lindblad};
use crate::geometry::{self, TriangleGeometry};
use crate::hamiltonians;
use crate::linalg::{self, c, max_abs_diff, CMat};
use crate::noise::{self, NoiseParams};
use crate::spin::{self, Axis, BlochVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Measured deviation (or statistic) compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value.abs() <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self { suite: suite.into(), checks: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        self.checks.push(Check::below(name, value, tolerance));
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for ch in &self.checks {
            let tag = if ch.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{tag} {}/{}: {:.3e} (tol {:.1e})", self.suite, ch.name, ch.value, ch.tolerance);
        }
        let _ = writeln!(out, "{} {}: {}/{} checks", if self.passed() { "PASS" } else { "FAIL" }, self.suite,
            self.checks.iter().filter(|c| c.passed).count(), self.checks.len());
        out
    }
}

/// Operators under test: the sector projector and Σ operators as used by
/// the rest of the crate, their independent constructions, and J.
#[derive(Debug, Clone)]
pub struct AlgebraInputs {
    pub p_half: CMat,
    pub sigma: [CMat; 3],
    pub p_half_alternatives: Vec<(String, CMat)>,
    pub sigma_alternatives: [CMat; 3],
    pub j: [CMat; 3],
}

impl AlgebraInputs {
    pub fn standard() -> Self {
        let ops = spin::RffOperators::build();
        let js = spin::total_spin(3).expect("three atoms");
        Self {
            p_half: ops.p_half.clone(),
            sigma: ops.sigma.clone(),
            p_half_alternatives: vec![
                ("pairwise".into(), spin::projector_half_pairwise()),
                ("outer".into(), spin::projector_half_outer()),
            ],
            sigma_alternatives: [0, 1, 2].map(|i| spin::sigma_rff_outer(i + 1).expect("index in range")),
            j: [Axis::X, Axis::Y, Axis::Z].map(|a| js.component(a).clone()),
        }
    }
}

pub const ALGEBRA_TOL: f64 = 1e-12;

pub fn algebra_suite(inp: &AlgebraInputs) -> SuiteReport {
    let mut r = SuiteReport::new("algebra");
    let p = &inp.p_half;
    let s = &inp.sigma;
    r.add("P² = P", max_abs_diff(&(p * p), p), ALGEBRA_TOL);
    r.add("tr P = 4", (linalg::trace(p).re - 4.0).abs(), ALGEBRA_TOL);
    for (i, si) in s.iter().enumerate() {
        r.add(format!("Σ{}² = P", i + 1), max_abs_diff(&(si * si), p), ALGEBRA_TOL);
        r.add(format!("Σ{} Hermitian", i + 1), linalg::hermiticity_defect(si), ALGEBRA_TOL);
        r.add(format!("PΣ{}P = Σ{}", i + 1, i + 1), max_abs_diff(&(p * si * p), si), ALGEBRA_TOL);
        for (a, ja) in inp.j.iter().enumerate() {
            let name = format!("[Σ{}, J{}] = 0", i + 1, ["x", "y", "z"][a]);
            r.add(name, linalg::max_abs(&linalg::commutator(si, ja)), ALGEBRA_TOL);
        }
    }
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        let name = format!("Σ{}Σ{} = iΣ{}", i + 1, j + 1, k + 1);
        r.add(name, max_abs_diff(&(&s[i] * &s[j]), &(&s[k] * c(0.0, 1.0))), ALGEBRA_TOL);
    }
    for (name, alt) in &inp.p_half_alternatives {
        r.add(format!("P matches {name} construction"), max_abs_diff(p, alt), ALGEBRA_TOL);
    }
    for (i, alt) in inp.sigma_alternatives.iter().enumerate() {
        r.add(format!("Σ{} matches outer-product construction", i + 1), max_abs_diff(&s[i], alt), ALGEBRA_TOL);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSuiteOptions {
    pub params: NoiseParams,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub z_threshold: f64,
    /// Relative agreement required of the variance ratio and the
    /// autocorrelation at lags 0, 1/Γ, 2/Γ.
    pub rel_tol: f64,
}

impl Default for NoiseSuiteOptions {
    fn default() -> Self {
        Self {
            params: NoiseParams { b: 1.0, g: 1.0, gamma: 1.0 },
            dt: 0.05,
            n_steps: 1_000_000,
            seed: 7,
            z_threshold: 4.0,
            rel_tol: 0.05,
        }
    }
}

pub fn noise_suite(opts: &NoiseSuiteOptions) -> Result<SuiteReport> {
    let path = noise::sample_path(opts.params, opts.dt, opts.n_steps, opts.seed)?;
    let sites = geometry::equilateral_sites(1.0);
    let report = noise::validate_statistics(&path, &sites, opts.z_threshold)?;
    let mut r = SuiteReport::new("noise");
    r.add("max |G − Gᵀ|", report.max_asymmetry, 1e-12);
    r.add("max |tr G|", report.max_trace, 1e-12);
    for ch in &report.checks {
        r.add(format!("z({})", ch.name), ch.z, opts.z_threshold);
    }
    let rel = |name: &str| -> Result<f64> {
        let ch = report.check(name).ok_or_else(|| RffError::Numerical(format!("missing statistic '{name}'")))?;
        Ok((ch.empirical - ch.theoretical) / ch.theoretical)
    };
    r.add("var ratio diagonal/off-diagonal vs 4/3 (relative)", rel("var ratio diagonal/off-diagonal")?, opts.rel_tol);
    for lag in ["0.00", "1.00", "2.00"] {
        let name = format!("difference autocorrelation lag {lag}/Γ");
        r.add(format!("{name} (relative)"), rel(&name)?, opts.rel_tol);
    }
    Ok(r)
}

/// Ω(J_z² − J²/3 + K) restricted to the three states with one spin down;
/// returns (Ω1, Ω2) from its extreme eigenvalues −Ω1 and Ω2.
pub fn frequencies_by_diagonalization(eps_kl: [f64; 3], omega: f64) -> (f64, f64) {
    let h = hamiltonians::h_dd_effective_eps(eps_kl, omega);
    let idx = [4usize, 2, 1];
    let block = CMat::from_fn(3, 3, |i, j| h[(idx[i], idx[j])]);
    let vals = linalg::eigvalsh(&block);
    (-vals[0], vals[2])
}

/// A triangle near the equilateral one with side 1, each coordinate
/// jittered by up to `scale`, and a bias direction tilted by up to `scale`.
pub fn random_imperfect_triangle(rng: &mut impl Rng, scale: f64) -> Result<TriangleGeometry> {
    let mut sites = geometry::equilateral_sites(1.0);
    for s in sites.iter_mut() {
        for x in s.iter_mut() {
            *x += scale * rng.random_range(-1.0..1.0);
        }
    }
    let tilt = [scale * rng.random_range(-1.0..1.0), scale * rng.random_range(-1.0..1.0), 1.0];
    let n = linalg::norm3(&tilt);
    geometry::analyze(&sites, &linalg::scale3(&tilt, 1.0 / n))
}

/// Largest relative mismatch between the closed-form and diagonalized
/// (Ω1, Ω2) over `n` random geometries.
pub fn frequency_oracle_mismatch(n: usize, scale: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let g = random_imperfect_triangle(&mut rng, scale)?;
        let (a1, a2) = geometry::effective_frequencies(&g, 1.0);
        let (b1, b2) = frequencies_by_diagonalization(g.eps_kl, 1.0);
        worst = worst.max(((a1 - b1) / b1).abs()).max(((a2 - b2) / b2).abs());
    }
    Ok(worst)
}

/// Worst deviations of the master-equation integrator from the closed-form
/// three-atom decay and from the superoperator exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterEquationCheck {
    pub closed_form_deviation: f64,
    pub oracle_deviation: f64,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

/// Ω(J_z² − J²/3) with dephasing times τ = 1, τ′ = 0.5, Ωτ = `omega`, over
/// [0, 3τ] on `points` outputs, from s(0) = `s0`.
pub fn master_equation_check(omega: f64, s0: [f64; 3], points: usize) -> Result<MasterEquationCheck> {
    let (tau, tau_prime) = (1.0, 0.5);
    let h = hamiltonians::ideal_dd_shape(3)? * c(omega, 0.0);
    let spec = lindblad::LindbladSpec::stray_field(tau, tau_prime, 3)?;
    let s0 = BlochVector::new(s0)?;
    let rho0 = spin::encode_rff(&s0);
    let grid = evolution::linspace(3.0 * tau, points);
    let ops = spin::RffOperators::shared();
    let obs = [
        ("P", ops.p_half.clone()),
        ("S1", ops.sigma[0].clone()),
        ("S2", ops.sigma[1].clone()),
        ("S3", ops.sigma[2].clone()),
    ];
    let run = lindblad::lindblad_evolve(&rho0, &h, &spec, &grid, &obs, &lindblad::IntegratorOptions::default())?;
    let closed = evolution::analytic_three_atom(&s0, tau, &grid);
    let mut dev = 0.0f64;
    for name in ["P", "S1", "S2", "S3"] {
        let (a, b) = (run.result.get(name).unwrap_or_default(), closed.get(name).unwrap_or_default());
        for (x, y) in a.iter().zip(b) {
            dev = dev.max((x - y).abs());
        }
    }
    let oracle = lindblad::propagate_superoperator(rho0.matrix(), &h, &spec, &grid)?;
    let odev = run.states.iter().zip(&oracle).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max);
    Ok(MasterEquationCheck {
        closed_form_deviation: dev,
        oracle_deviation: odev,
        max_trace_drift: run.max_trace_drift,
        min_eigenvalue: run.min_eigenvalue,
    })
}

/// Cross-checks between closed forms and independent numerical routes.
pub fn oracle_suite(seed: u64) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("oracle");

    let me = master_equation_check(1000.0, [0.6, 0.0, 0.8], 31)?;
    r.add("master equation vs closed-form decay", me.closed_form_deviation, 1e-6);
    r.add("master equation vs superoperator exponential", me.oracle_deviation, 1e-8);
    r.add("master equation trace drift", me.max_trace_drift, 1e-10);
    r.add("master equation positivity", (-me.min_eigenvalue).max(0.0), 1e-9);

    r.add("(Ω1, Ω2) closed form vs diagonalization", frequency_oracle_mismatch(100, 0.01, seed)?, 1e-10);

    let square = four_atom::FourAtomGeometry::Square.hamiltonian(1.0)?;
    let (o1, o2) = four_atom::sector_frequencies(&square)?;
    let cd = hamiltonians::square_diagonal_c();
    let root = ((2.0 - cd).powi(2) + 8.0 * cd * cd).sqrt();
    r.add("square Ω1 vs closed form", (o1 - 0.5 * (root + 2.0 - cd)).abs(), 1e-10);
    r.add("square Ω2 vs closed form", (o2 - 0.5 * (root - 2.0 + cd)).abs(), 1e-10);
    r.add("balanced pyramid coupling spread", hamiltonians::pyramid_coupling_spread(hamiltonians::pyramid_balance_height()?), 1e-9);

    // imperfect trio: closed-form persistence and fidelity against direct propagation
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let g = random_imperfect_triangle(&mut rng, 0.05)?;
    let h = hamiltonians::h_dd_effective(&g, 1.0);
    let (o1, o2) = geometry::effective_frequencies(&g, 1.0);
    let s0 = BlochVector::new([0.3, -0.5, 0.6])?;
    let rho0 = spin::encode_rff(&s0);
    let ops = spin::RffOperators::shared();
    let mut worst_p = 0.0f64;
    let mut worst_f = 0.0f64;
    let mut worst_u = 0.0f64;
    for k in 1..=12 {
        let t = 0.9 * k as f64;
        let u = linalg::expm_hermitian(&h, t);
        let rho = &u * rho0.matrix() * u.adjoint();
        let p = linalg::expect(&ops.p_half, &rho);
        let (st, _) = spin::decode_rff(&rho)?;
        let closed = evolution::imperfect_state(&s0, o1, o2, g.phi, t);
        worst_p = worst_p.max((p - closed.p).abs());
        worst_f = worst_f.max((evolution::fidelity_qubit(&st, &s0) - closed.fidelity).abs());
        let numeric = evolution::effective_unitary_numeric(&h, &ops.p_half, t);
        let analytic = evolution::analytic_effective_unitary(o1, o2, g.phi, t);
        worst_u = worst_u.max(max_abs_diff(&numeric, &analytic));
    }
    r.add("imperfect trio persistence vs propagation", worst_p, 1e-9);
    r.add("imperfect trio fidelity vs propagation", worst_f, 1e-7);
    r.add("effective unitary vs projected propagator", worst_u, 1e-9);

    // fidelity of decoded qubits against the density-matrix formula
    let (a, b) = (BlochVector::new([0.2, 0.4, -0.1])?, BlochVector::new([-0.5, 0.1, 0.7])?);
    let qubit = |s: &BlochVector| {
        let [x, y, z] = s.components();
        linalg::real_matrix(2, 2, &[0.5 * (1.0 + z), 0.0, 0.0, 0.5 * (1.0 - z)])
            + CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5 * x, -0.5 * y), c(0.5 * x, 0.5 * y), c(0.0, 0.0)])
    };
    let (ra, rb) = (qubit(&a), qubit(&b));
    let (vals, vecs) = linalg::eigh(&ra);
    let sqrt_a = &vecs * CMat::from_diagonal(&vals.iter().map(|v| c(v.max(0.0).sqrt(), 0.0)).collect::<Vec<_>>().into()) * vecs.adjoint();
    let inner = &sqrt_a * &rb * &sqrt_a;
    let uhlmann: f64 = linalg::eigvalsh(&inner).iter().map(|v| v.max(0.0).sqrt()).sum();
    r.add("Bloch fidelity vs Uhlmann fidelity", (evolution::fidelity_qubit(&a, &b) - uhlmann).abs(), 1e-12);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algebra_passes_and_catches_sign_error() {
        let good = AlgebraInputs::standard();
        let rep = algebra_suite(&good);
        assert!(rep.passed(), "{}", rep.render());
        let mut bad = good.clone();
        bad.sigma[2] = -bad.sigma[2].clone();
        let rep = algebra_suite(&bad);
        assert!(!rep.passed());
        assert!(rep.failures().iter().any(|c| c.name.contains("iΣ3") || c.name.contains("Σ3 matches")));
    }

    #[test]
    fn noise_suite_short_path_is_insufficient() {
        let opts = NoiseSuiteOptions { n_steps: 100, ..NoiseSuiteOptions::default() };
        assert!(matches!(noise_suite(&opts), Err(RffError::InsufficientData(_))));
    }

    #[test]
    fn oracle_suite_passes() {
        let rep = oracle_suite(11).unwrap();
        assert!(rep.passed(), "{}", rep.render());
    }
}
