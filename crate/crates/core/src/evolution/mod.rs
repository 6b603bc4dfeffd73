//! Time evolution: closed-form evaluators, master-equation integration,
//! field-sampling trajectory ensembles and the four-atom sector dynamics.

pub mod four_atom;
pub mod lindblad;
pub mod trajectory;

use std::fmt::Write as _;

use crate::error::{param, Result, RffError};
use crate::linalg::{c, CMat, C64};
use crate::spin::{BlochVector, DensityMatrix, RffOperators};

pub use four_atom::{four_atom_evolution, FourAtomGeometry, FourAtomRun};
pub use lindblad::{lindblad_evolve, IntegratorOptions, LindbladRun, LindbladSpec, LindbladTerm};
pub use trajectory::{stochastic_ensemble, EnsembleProblem, EnsembleResult, StepMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Si,
    Dimensionless,
}

/// Run parameters shared by the integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub units: Units,
    pub dt: f64,
    pub t_end: f64,
    pub omega0: f64,
    pub omega: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub tau1: f64,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return param(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return param(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if self.n_trajectories == 0 {
            return param("n_trajectories must be at least 1");
        }
        Ok(())
    }

    /// dt·ω0 ≤ 0.1, required for trajectory runs.
    pub fn check_resolution(&self) -> Result<()> {
        if self.dt * self.omega0 > 0.1 + 1e-12 {
            return Err(RffError::Resolution(format!(
                "dt·ω0 = {} exceeds 0.1",
                self.dt * self.omega0
            )));
        }
        Ok(())
    }
}

/// Time grid plus named observable columns and `#` metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub t_label: String,
    pub t: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
    pub meta: Vec<(String, String)>,
}

impl ExperimentResult {
    pub fn new(t_label: &str, t: Vec<f64>) -> Self {
        Self { t_label: t_label.to_string(), t, series: Vec::new(), meta: Vec::new() }
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.t.len(), "column {name} has the wrong length");
        self.series.push((name.to_string(), values));
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.series.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Probabilities (columns starting with `P`) in [−1e−9, 1 + 1e−9] and
    /// fidelities (columns starting with `F`) in [0, 1] within 1e−9.
    pub fn check_ranges(&self) -> Result<()> {
        for (name, vals) in &self.series {
            if !(name.starts_with('P') || name.starts_with('F')) || name.ends_with("_err") {
                continue;
            }
            if let Some(v) = vals.iter().find(|v| v.is_finite() && !(-1e-9..=1.0 + 1e-9).contains(*v)) {
                return Err(RffError::Numerical(format!("{name} left [0, 1]: {v}")));
            }
        }
        Ok(())
    }

    /// CSV with `# key = value` header lines; non-finite values are written
    /// as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out.push_str(&self.t_label);
        for (n, _) in &self.series {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, t) in self.t.iter().enumerate() {
            out.push_str(&fmt_num(*t));
            for (_, v) in &self.series {
                out.push(',');
                out.push_str(&fmt_num(v[i]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.12e}")
    } else {
        "nan".to_string()
    }
}

/// Evenly spaced grid of `n` points on [0, t_end].
pub fn linspace(t_end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Fidelity of two single-qubit states given by their Pauli vectors.
pub fn fidelity_qubit(s1: &BlochVector, s2: &BlochVector) -> f64 {
    let (l1, l2) = (s1.length().min(1.0), s2.length().min(1.0));
    let mixed = ((1.0 - l1 * l1).max(0.0) * (1.0 - l2 * l2).max(0.0)).sqrt();
    (0.5 * (1.0 + s1.dot(s2)) + 0.5 * mixed).max(0.0).sqrt().min(1.0)
}

/// f(t) = (Ω1 e^{−iΩ2 t} + Ω2 e^{iΩ1 t})/(Ω1 + Ω2).
pub fn f_of_t(omega1: f64, omega2: f64, t: f64) -> C64 {
    let s = omega1 + omega2;
    assert!(s > 0.0, "Ω1 + Ω2 must be positive");
    (C64::from_polar(omega1, -omega2 * t) + C64::from_polar(omega2, omega1 * t)) / s
}

/// Ideal trio under stray-field decoherence, initial state in the j = 1/2
/// sector with signal Bloch vector `s0`.
pub fn analytic_three_atom(s0: &BlochVector, tau: f64, t_grid: &[f64]) -> ExperimentResult {
    let s = s0.components();
    let mut r = ExperimentResult::new("t", t_grid.to_vec());
    let e = |rate: f64| t_grid.iter().map(|t| (-rate * t / tau).exp()).collect::<Vec<_>>();
    let (e1, e23) = (e(1.0), e(2.0 / 3.0));
    r.push("P", e1.iter().map(|x| (2.0 + x) / 3.0).collect());
    r.push("S1", e23.iter().map(|x| x * s[0]).collect());
    r.push("S2", e23.iter().map(|x| x * s[1]).collect());
    r.push("S3", e1.iter().map(|x| x * s[2]).collect());
    r.meta("tau", tau);
    r
}

/// Expectation values at time t for the imperfect trio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImperfectState {
    pub p: f64,
    pub sigma: [f64; 3],
    /// Length of the signal Pauli vector.
    pub s: f64,
    pub fidelity: f64,
    pub fidelity_bound: f64,
    pub f: C64,
}

/// Rotated components (Σ1^φ, Σ2^φ, Σ3) of a Bloch vector.
pub fn rotate_to_phi(s: [f64; 3], phi: f64) -> [f64; 3] {
    let (sn, cs) = phi.sin_cos();
    [s[0] * cs - s[1] * sn, s[1] * cs + s[0] * sn, s[2]]
}

pub fn rotate_from_phi(r: [f64; 3], phi: f64) -> [f64; 3] {
    let (sn, cs) = phi.sin_cos();
    [r[0] * cs + r[1] * sn, r[1] * cs - r[0] * sn, r[2]]
}

/// Persistence probability for a given f and ⟨Σ1^φ⟩_0.
pub fn persistence(f: C64, sigma1_phi0: f64) -> f64 {
    let a = f.norm_sqr();
    0.5 * (1.0 + a) - 0.5 * (1.0 - a) * sigma1_phi0
}

/// Signal-qubit fidelity with the initial state, in terms of f, ⟨P⟩_t,
/// ⟨Σ1^φ⟩_0 and the initial length s(0).
pub fn fidelity_imperfect(f: C64, p: f64, sigma1_phi0: f64, s0: f64) -> f64 {
    let one_minus = (c(1.0, 0.0) - f).norm_sqr();
    let f2 = 1.0 - one_minus / (4.0 * p) * (1.0 - sigma1_phi0 * sigma1_phi0)
        + (f.norm() - f.re) / (2.0 * p) * (1.0 - s0 * s0);
    f2.clamp(0.0, 1.0).sqrt()
}

/// Lower bound on the fidelity over all initial states.
pub fn fidelity_bound(f: C64) -> f64 {
    let num = (c(1.0, 0.0) - f).norm_sqr();
    let den = (1.0 + f.norm()).powi(2);
    (1.0 - num / den).max(0.0).sqrt()
}

/// Two-term small-Ω2/Ω1 expansion of the fidelity bound.
pub fn fidelity_bound_expansion(omega1: f64, omega2: f64, t: f64) -> f64 {
    let x = 0.5 * omega2 * t;
    x.cos() - omega2 / (2.0 * omega1) * x.sin()
}

/// s(t)² = 1 − |f|²(1 − s(0)²)/⟨P⟩_t².
pub fn signal_length(f: C64, p: f64, s0: f64) -> f64 {
    (1.0 - f.norm_sqr() / (p * p) * (1.0 - s0 * s0)).max(0.0).sqrt()
}

/// Sign of s(t) − s(0) predicted from (1 + |f|)(1 + ⟨Σ1^φ⟩_0) against 2:
/// +1 when the signal purifies, −1 when it loses purity, 0 on the boundary.
pub fn purity_trend(f: C64, sigma1_phi0: f64) -> i32 {
    let lhs = (1.0 + f.norm()) * (1.0 + sigma1_phi0);
    if (lhs - 2.0).abs() < 1e-15 {
        0
    } else if lhs < 2.0 {
        1
    } else {
        -1
    }
}

pub fn imperfect_state(s0: &BlochVector, omega1: f64, omega2: f64, phi: f64, t: f64) -> ImperfectState {
    let f = f_of_t(omega1, omega2, t);
    let r0 = rotate_to_phi(s0.components(), phi);
    let p = persistence(f, r0[0]);
    let a = f.norm_sqr();
    let r1 = 0.5 * (1.0 + a) * r0[0] - 0.5 * (1.0 - a);
    let z = f * c(r0[1], -r0[2]);
    let sigma = rotate_from_phi([r1, z.re, -z.im], phi);
    ImperfectState {
        p,
        sigma,
        s: signal_length(f, p, s0.length()),
        fidelity: fidelity_imperfect(f, p, r0[0], s0.length()),
        fidelity_bound: fidelity_bound(f),
        f,
    }
}

/// Closed-form signal-qubit dynamics for an imperfect trio with effective
/// frequencies Ω1, Ω2 and phase φ.
pub fn analytic_imperfect(s0: &BlochVector, omega1: f64, omega2: f64, phi: f64, t_grid: &[f64]) -> ExperimentResult {
    let states: Vec<ImperfectState> = t_grid.iter().map(|&t| imperfect_state(s0, omega1, omega2, phi, t)).collect();
    let mut r = ExperimentResult::new("t", t_grid.to_vec());
    let col = |g: &dyn Fn(&ImperfectState) -> f64| states.iter().map(g).collect::<Vec<_>>();
    r.push("P", col(&|s| s.p));
    r.push("S1", col(&|s| s.sigma[0]));
    r.push("S2", col(&|s| s.sigma[1]));
    r.push("S3", col(&|s| s.sigma[2]));
    r.push("s", col(&|s| s.s));
    r.push("F", col(&|s| s.fidelity));
    r.push("F_bound", col(&|s| s.fidelity_bound));
    r.push("abs_f", col(&|s| s.f.norm()));
    r.meta("omega1", omega1);
    r.meta("omega2", omega2);
    r.meta("phi", phi);
    r
}

/// (1 + f)/2 P − (1 − f)/2 (Σ1 cos φ − Σ2 sin φ) on the trio.
pub fn analytic_effective_unitary(omega1: f64, omega2: f64, phi: f64, t: f64) -> CMat {
    let ops = RffOperators::shared();
    let f = f_of_t(omega1, omega2, t);
    let sig = &ops.sigma[0] * c(phi.cos(), 0.0) - &ops.sigma[1] * c(phi.sin(), 0.0);
    &ops.p_half * ((c(1.0, 0.0) + f) * 0.5) - sig * ((c(1.0, 0.0) - f) * 0.5)
}

/// P e^{−iHt} P computed directly.
pub fn effective_unitary_numeric(h: &CMat, projector: &CMat, t: f64) -> CMat {
    projector * crate::linalg::expm_hermitian(h, t) * projector
}

/// First time in (0, t_max] at which `g` drops below `threshold`, located
/// by a scan of `n` points and bisection. None if it never does.
pub fn first_crossing(g: impl Fn(f64) -> f64, threshold: f64, t_max: f64, n: usize) -> Option<f64> {
    let mut prev = 0.0;
    for i in 1..=n {
        let t = t_max * i as f64 / n as f64;
        if g(t) < threshold {
            let (mut lo, mut hi) = (prev, t);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev = t;
    }
    None
}

/// Single-atom Bloch vector under the bias (or without it) with dephasing
/// time τ1.
pub fn single_atom_bloch(s0: [f64; 3], omega0: f64, tau1: f64, bias_on: bool, t: f64) -> [f64; 3] {
    if bias_on {
        let z = C64::new(s0[0], s0[1]) * C64::from_polar((-t / tau1).exp(), omega0 * t);
        [z.re, z.im, s0[2]]
    } else {
        let d = (-2.0 * t / tau1).exp();
        [s0[0] * d, s0[1] * d, s0[2] * d]
    }
}

/// Lower bound on the single-atom fidelity.
pub fn single_atom_fidelity_bound(omega0: f64, tau1: f64, bias_on: bool, t: f64) -> f64 {
    let inner = if bias_on {
        (-t / tau1).exp() * (omega0 * t).cos()
    } else {
        (-2.0 * t / tau1).exp()
    };
    (0.5 * (1.0 + inner)).max(0.0).sqrt()
}

/// Closed-form single-atom qubit under stray-field dephasing.
pub fn single_atom(
    rho0: &DensityMatrix,
    omega0: f64,
    tau1: f64,
    bias_on: bool,
    t_grid: &[f64],
) -> Result<ExperimentResult> {
    if rho0.dim() != 2 {
        return param(format!("single-atom state must be 2-dimensional, got {}", rho0.dim()));
    }
    if !(tau1 > 0.0) {
        return param(format!("tau1 must be positive, got {tau1}"));
    }
    let s0 = crate::spin::Axis::ALL.map(|a| rho0.expect(&crate::spin::pauli(a)));
    let b0 = BlochVector::new(s0)?;
    let mut cols = [vec![], vec![], vec![], vec![], vec![]];
    for &t in t_grid {
        let s = single_atom_bloch(s0, omega0, tau1, bias_on, t);
        let bt = BlochVector::new(s)?;
        for i in 0..3 {
            cols[i].push(s[i]);
        }
        cols[3].push(fidelity_qubit(&bt, &b0));
        cols[4].push(single_atom_fidelity_bound(omega0, tau1, bias_on, t));
    }
    let mut r = ExperimentResult::new("t", t_grid.to_vec());
    for (name, col) in ["sx", "sy", "sz", "F", "F_bound"].iter().zip(cols) {
        r.push(name, col);
    }
    r.meta("omega0", omega0);
    r.meta("tau1", tau1);
    r.meta("bias", bias_on);
    Ok(r)
}

/// Corrections from the finite spread of the atomic wave packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComCorrections {
    /// erf(a/√(2w1² + 2w2²)).
    pub overlap_factor: f64,
    /// 1 − overlap_factor, computed without cancellation.
    pub overlap_deficit: f64,
    /// Equilibrium shift in units of the width w1.
    pub shift_fraction: f64,
}

pub fn com_corrections(a: f64, w1: f64, w2: f64, omega: f64, omega_trap: f64) -> Result<ComCorrections> {
    if !(a > 0.0) || !(w1 >= 0.0) || !(w2 >= 0.0) || !(omega_trap > 0.0) {
        return param(format!("need a, ω_trap > 0 and w ≥ 0 (a = {a}, w = {w1}, {w2}, ω_trap = {omega_trap})"));
    }
    let spread = (2.0 * w1 * w1 + 2.0 * w2 * w2).sqrt();
    let (overlap_factor, overlap_deficit) = if spread == 0.0 {
        (1.0, 0.0)
    } else {
        let z = a / spread;
        (libm::erf(z), libm::erfc(z))
    };
    Ok(ComCorrections { overlap_factor, overlap_deficit, shift_fraction: 2.0 * omega * w1 / (omega_trap * a) })
}
