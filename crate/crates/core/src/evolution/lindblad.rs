//! Dense master-equation integration dρ/dt = −i[H, ρ] + Σ r [A, [ρ, A]]
//! with an adaptive Dormand–Prince 5(4) stepper, plus the reference
//! propagator exp(𝓛 Δt) on the row-major vectorized density matrix.

use crate::error::{param, Result, RffError};
use crate::linalg::{self, c, CMat, C64};
use crate::spin::{self, Axis, DensityMatrix};

use super::ExperimentResult;

/// One double-commutator term r·[A, [ρ, A]].
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTerm {
    pub rate: f64,
    pub op: CMat,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LindbladSpec {
    pub terms: Vec<LindbladTerm>,
}

fn rate_of(time: f64, factor: f64) -> Result<Option<f64>> {
    if time.is_infinite() && time > 0.0 {
        return Ok(None);
    }
    if !(time > 0.0) {
        return param(format!("decay time must be positive or infinite, got {time}"));
    }
    Ok(Some(1.0 / (factor * time)))
}

impl LindbladSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_term(mut self, rate: f64, op: CMat) -> Self {
        self.terms.push(LindbladTerm { rate, op });
        self
    }

    /// Site dephasing (1/8τ) Σ_k [σ_kz, [ρ, σ_kz]]; τ = ∞ switches it off.
    pub fn site_dephasing(mut self, tau: f64, n_atoms: usize) -> Result<Self> {
        if let Some(r) = rate_of(tau, 8.0)? {
            for k in 1..=n_atoms {
                self.terms.push(LindbladTerm { rate: r, op: spin::pauli_site(k, Axis::Z, n_atoms)? });
            }
        }
        Ok(self)
    }

    /// Collective dephasing (1/2τ′) [J_z, [ρ, J_z]]; τ′ = ∞ switches it off.
    pub fn collective_dephasing(mut self, tau_prime: f64, n_atoms: usize) -> Result<Self> {
        if let Some(r) = rate_of(tau_prime, 2.0)? {
            self.terms.push(LindbladTerm { rate: r, op: spin::total_spin(n_atoms)?.jz });
        }
        Ok(self)
    }

    /// Full stray-field generator: both terms above.
    pub fn stray_field(tau: f64, tau_prime: f64, n_atoms: usize) -> Result<Self> {
        Self::none().site_dephasing(tau, n_atoms)?.collective_dephasing(tau_prime, n_atoms)
    }

    /// Stray-field generator with 1/τ → 0 and 2τ′ → τ1.
    pub fn collective_only(tau1: f64, n_atoms: usize) -> Result<Self> {
        let mut s = Self::none();
        if let Some(r) = rate_of(tau1, 1.0)? {
            s.terms.push(LindbladTerm { rate: r, op: spin::total_spin(n_atoms)?.jz });
        }
        Ok(s)
    }

    /// Single atom: (1/4τ1)[σz, [ρ, σz]] with the bias, all three axes
    /// without it.
    pub fn single_atom(tau1: f64, bias_on: bool) -> Result<Self> {
        let mut s = Self::none();
        if let Some(r) = rate_of(tau1, 4.0)? {
            let axes: &[Axis] = if bias_on { &[Axis::Z] } else { &Axis::ALL };
            for &a in axes {
                s.terms.push(LindbladTerm { rate: r, op: spin::pauli(a) });
            }
        }
        Ok(s)
    }

    /// 𝓛ρ.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(rho.nrows(), rho.ncols());
        for t in &self.terms {
            let a = &t.op;
            let a2 = a * a;
            out += (a * rho * a * c(2.0, 0.0) - &a2 * rho - rho * &a2) * c(t.rate, 0.0);
        }
        out
    }
}

/// Right-hand side with diagonal dissipators folded into an elementwise
/// mask, which covers every term built from σ_z-type operators.
struct Generator {
    h: CMat,
    mask: CMat,
    general: Vec<LindbladTerm>,
}

impl Generator {
    fn new(h: &CMat, spec: &LindbladSpec) -> Self {
        let n = h.nrows();
        let mut mask = CMat::zeros(n, n);
        let mut general = Vec::new();
        for t in &spec.terms {
            let diag = (0..n).all(|i| (0..n).all(|j| i == j || t.op[(i, j)] == linalg::ZERO));
            if diag {
                for i in 0..n {
                    for j in 0..n {
                        let d = t.op[(i, i)] - t.op[(j, j)];
                        mask[(i, j)] -= d * d * t.rate;
                    }
                }
            } else {
                general.push(t.clone());
            }
        }
        Self { h: h.clone(), mask, general }
    }

    fn rhs(&self, rho: &CMat) -> CMat {
        let comm = &self.h * rho - rho * &self.h;
        let mut out = comm * c(0.0, -1.0);
        out += self.mask.component_mul(rho);
        for t in &self.general {
            let a = &t.op;
            let a2 = a * a;
            out += (a * rho * a * c(2.0, 0.0) - &a2 * rho - rho * &a2) * c(t.rate, 0.0);
        }
        out
    }
}

/// Tolerances for the adaptive stepper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed |tr ρ − 1| after a step.
    pub trace_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, trace_tol: 1e-8, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct LindbladRun {
    pub result: ExperimentResult,
    pub states: Vec<CMat>,
    /// Smallest eigenvalue of ρ seen at the output times.
    pub min_eigenvalue: f64,
    pub max_trace_drift: f64,
    pub steps: usize,
    pub rejected: usize,
}

// Dormand–Prince 5(4) tableau
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn axpy(acc: &mut CMat, a: f64, x: &CMat) {
    if a != 0.0 {
        acc.zip_apply(x, |p, q| *p += q * a);
    }
}

fn stepper_norm(err: &CMat, y0: &CMat, y1: &CMat, opts: &IntegratorOptions) -> f64 {
    let mut worst: f64 = 0.0;
    for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
        let scale = opts.atol + opts.rtol * a.norm().max(b.norm());
        worst = worst.max(e.norm() / scale);
    }
    worst
}

/// One Dormand–Prince attempt: (new state, error estimate, rhs at new state).
fn dp_step(g: &Generator, y: &CMat, k1: &CMat, h: f64) -> (CMat, CMat, CMat) {
    let mut ks: Vec<CMat> = Vec::with_capacity(7);
    ks.push(k1.clone());
    for row in A.iter().take(5) {
        let mut yi = y.clone();
        for (j, k) in ks.iter().enumerate() {
            axpy(&mut yi, h * row[j], k);
        }
        ks.push(g.rhs(&yi));
    }
    let mut y1 = y.clone();
    for (j, k) in ks.iter().enumerate() {
        axpy(&mut y1, h * A[5][j], k);
    }
    let k7 = g.rhs(&y1);
    ks.push(k7.clone());
    let mut err = CMat::zeros(y.nrows(), y.ncols());
    for (j, k) in ks.iter().enumerate() {
        axpy(&mut err, h * E[j], k);
    }
    (y1, err, k7)
}

fn min_eigenvalue(rho: &CMat) -> f64 {
    let herm = (rho + rho.adjoint()) * c(0.5, 0.0);
    linalg::eigvalsh(&herm)[0]
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return param("time grid is empty");
    }
    if t_grid[0] < 0.0 || t_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return param("time grid must be nonnegative and nondecreasing");
    }
    Ok(())
}

/// Integrates from t = 0 and records `observables` at every grid time.
pub fn lindblad_evolve(
    rho0: &DensityMatrix,
    h: &CMat,
    spec: &LindbladSpec,
    t_grid: &[f64],
    observables: &[(&str, CMat)],
    opts: &IntegratorOptions,
) -> Result<LindbladRun> {
    check_grid(t_grid)?;
    let n = rho0.dim();
    if h.nrows() != n || spec.terms.iter().any(|t| t.op.nrows() != n) {
        return param("Hamiltonian and Lindblad operators must match the state dimension");
    }
    if linalg::hermiticity_defect(h) > 1e-12 * linalg::max_abs(h).max(1.0) {
        return param("Hamiltonian is not Hermitian");
    }
    let g = Generator::new(h, spec);
    let mut y = rho0.matrix().clone();
    let mut t = 0.0;
    let span = t_grid.last().copied().unwrap_or(0.0);
    let scale = linalg::max_abs(h) + spec.terms.iter().map(|t| t.rate * linalg::max_abs(&t.op).powi(2)).sum::<f64>();
    let mut hstep = if scale > 0.0 { 0.01 / scale } else { span.max(1.0) };
    let mut k1 = g.rhs(&y);
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut max_drift: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut states = Vec::with_capacity(t_grid.len());

    for &target in t_grid {
        while t < target {
            if steps + rejected > opts.max_steps {
                return Err(RffError::Numerical(format!("step budget exhausted at t = {t}")));
            }
            let h_try = hstep.min(target - t);
            let (y1, err, k7) = dp_step(&g, &y, &k1, h_try);
            let e = stepper_norm(&err, &y, &y1, opts);
            let drift = (linalg::trace(&y1) - c(1.0, 0.0)).norm();
            if e <= 1.0 && drift <= opts.trace_tol {
                t = if target - t <= h_try { target } else { t + h_try };
                y = y1;
                k1 = k7;
                steps += 1;
                max_drift = max_drift.max(drift);
                let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                // a step clipped to the output time does not shrink the next one
                hstep = (h_try * fac).max(if h_try < hstep { hstep } else { 0.0 });
            } else {
                rejected += 1;
                hstep = if e > 1.0 { h_try * (0.9 * e.powf(-0.2)).clamp(0.1, 0.9) } else { 0.5 * h_try };
                if hstep < 1e-15 * span.max(1e-300) {
                    return Err(RffError::StepRejected(format!(
                        "step size underflow at t = {t} (error ratio {e:.3e}, trace drift {drift:.3e})"
                    )));
                }
            }
        }
        min_eig = min_eig.min(min_eigenvalue(&y));
        states.push(y.clone());
    }

    let mut result = ExperimentResult::new("t", t_grid.to_vec());
    for (name, op) in observables {
        result.push(name, states.iter().map(|r| linalg::expect(op, r)).collect());
    }
    result.push("trace", states.iter().map(|r| linalg::trace(r).re).collect());
    Ok(LindbladRun { result, states, min_eigenvalue: min_eig, max_trace_drift: max_drift, steps, rejected })
}

/// 𝓛 as a d²×d² matrix on the row-major vectorization, where
/// vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ).
pub fn superoperator(h: &CMat, spec: &LindbladSpec) -> CMat {
    let n = h.nrows();
    let id = linalg::identity(n);
    let mut l = (linalg::kron(h, &id) - linalg::kron(&id, &h.transpose())) * c(0.0, -1.0);
    for t in &spec.terms {
        let a = &t.op;
        let a2 = a * a;
        let term = linalg::kron(a, &a.transpose()) * c(2.0, 0.0)
            - linalg::kron(&a2, &id)
            - linalg::kron(&id, &a2.transpose());
        l += term * c(t.rate, 0.0);
    }
    l
}

fn vectorize(rho: &CMat) -> linalg::CVec {
    let n = rho.nrows();
    linalg::CVec::from_fn(n * n, |k, _| rho[(k / n, k % n)])
}

fn unvectorize(v: &linalg::CVec, n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| v[i * n + j])
}

/// Reference propagation ρ(t_k) = exp(𝓛 (t_k − t_{k−1})) ρ(t_{k−1}).
pub fn propagate_superoperator(rho0: &CMat, h: &CMat, spec: &LindbladSpec, t_grid: &[f64]) -> Result<Vec<CMat>> {
    check_grid(t_grid)?;
    let n = rho0.nrows();
    let l = superoperator(h, spec);
    let mut v = vectorize(rho0);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        if target > t {
            let prop = (&l * C64::new(target - t, 0.0)).exp();
            v = prop * v;
            t = target;
        }
        out.push(unvectorize(&v, n));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians;
    use crate::linalg::{max_abs, max_abs_diff};
    use crate::spin::{encode_rff, BlochVector, RffOperators};

    fn trio_observables() -> Vec<(&'static str, CMat)> {
        let ops = RffOperators::shared();
        vec![
            ("P", ops.p_half.clone()),
            ("S1", ops.sigma[0].clone()),
            ("S2", ops.sigma[1].clone()),
            ("S3", ops.sigma[2].clone()),
        ]
    }

    #[test]
    fn vectorization_identity() {
        let a = CMat::from_fn(3, 3, |i, j| c(i as f64 + 0.5, j as f64 - 1.0));
        let b = CMat::from_fn(3, 3, |i, j| c((i * j) as f64, 1.0));
        let rho = CMat::from_fn(3, 3, |i, j| c(1.0 / (1.0 + i as f64 + j as f64), 0.2 * i as f64));
        let lhs = vectorize(&(&a * &rho * &b));
        let rhs = linalg::kron(&a, &b.transpose()) * vectorize(&rho);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn generator_matches_apply() {
        let spec = LindbladSpec::stray_field(1.3, 0.4, 3).unwrap().with_term(0.2, spin::pauli_site(2, Axis::X, 3).unwrap());
        let h = hamiltonians::ideal_dd_shape(3).unwrap();
        let rho = encode_rff(&BlochVector::new([0.2, 0.5, -0.3]).unwrap()).into_matrix();
        let g = Generator::new(&h, &spec);
        let want = (&h * &rho - &rho * &h) * c(0.0, -1.0) + spec.apply(&rho);
        assert!(max_abs_diff(&g.rhs(&rho), &want) < 1e-13);
    }

    #[test]
    fn homogeneous_bias_leaves_rff_values() {
        let h = hamiltonians::h_bias(3.0, 3).unwrap();
        let s = BlochVector::new([0.3, -0.4, 0.5]).unwrap();
        let run = lindblad_evolve(&encode_rff(&s), &h, &LindbladSpec::none(), &super::super::linspace(10.0, 11), &trio_observables(), &IntegratorOptions::default()).unwrap();
        for (i, name) in ["S1", "S2", "S3"].iter().enumerate() {
            assert!(run.result.get(name).unwrap().iter().all(|v| (v - s.components()[i] * 1.0).abs() < 1e-10));
        }
        assert!(run.result.get("P").unwrap().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn integrator_matches_superoperator_oracle() {
        let eps = [0.04, -0.02, 0.01];
        let h = hamiltonians::h_bias(2.0, 3).unwrap() + hamiltonians::h_dd_effective_eps(eps, 1.0);
        let spec = LindbladSpec::stray_field(3.0, 0.7, 3).unwrap();
        let rho0 = encode_rff(&BlochVector::new([0.6, 0.0, 0.8]).unwrap());
        let grid = super::super::linspace(6.0, 7);
        let run = lindblad_evolve(&rho0, &h, &spec, &grid, &[], &IntegratorOptions::default()).unwrap();
        let oracle = propagate_superoperator(rho0.matrix(), &h, &spec, &grid).unwrap();
        for (a, b) in run.states.iter().zip(&oracle) {
            assert!(max_abs_diff(a, b) < 1e-8, "{}", max_abs_diff(a, b));
        }
        assert!(run.max_trace_drift < 1e-10);
        assert!(run.min_eigenvalue > -1e-9);
    }

    #[test]
    fn single_atom_dephasing_matches_closed_form() {
        let (omega0, tau1) = (7.0, 2.0);
        let plus = spin::StateVector::normalized(linalg::CVec::from_vec(vec![c(1.0, 0.0), c(0.6, 0.8)])).unwrap();
        let rho0 = DensityMatrix::from_pure(&plus);
        let s0 = Axis::ALL.map(|a| rho0.expect(&spin::pauli(a)));
        let grid = super::super::linspace(5.0, 21);
        let obs: Vec<(&str, CMat)> = vec![("sx", spin::pauli(Axis::X)), ("sy", spin::pauli(Axis::Y)), ("sz", spin::pauli(Axis::Z))];
        for bias in [true, false] {
            let h = if bias { spin::pauli(Axis::Z) * c(0.5 * omega0, 0.0) } else { linalg::zeros(2) };
            let spec = LindbladSpec::single_atom(tau1, bias).unwrap();
            let run = lindblad_evolve(&rho0, &h, &spec, &grid, &obs, &IntegratorOptions::default()).unwrap();
            for (k, &t) in grid.iter().enumerate() {
                let want = super::super::single_atom_bloch(s0, if bias { omega0 } else { 0.0 }, tau1, bias, t);
                for (i, name) in ["sx", "sy", "sz"].iter().enumerate() {
                    let got = run.result.get(name).unwrap()[k];
                    assert!((got - want[i]).abs() < 1e-9, "{name} at {t}: {got} vs {}", want[i]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let rho = encode_rff(&BlochVector::zero());
        assert!(lindblad_evolve(&rho, &linalg::zeros(4), &LindbladSpec::none(), &[0.0], &[], &IntegratorOptions::default()).is_err());
        assert!(LindbladSpec::stray_field(-1.0, 1.0, 3).is_err());
        assert!(LindbladSpec::stray_field(f64::INFINITY, f64::INFINITY, 3).unwrap().terms.is_empty());
        let nh = CMat::from_fn(8, 8, |i, j| if i == 0 && j == 1 { c(1.0, 0.0) } else { linalg::ZERO });
        assert!(lindblad_evolve(&rho, &nh, &LindbladSpec::none(), &[0.0, 1.0], &[], &IntegratorOptions::default()).is_err());
        assert!(max_abs(&LindbladSpec::none().apply(rho.matrix())) == 0.0);
    }
}
