//! Field-sampling trajectories: each run draws its own stray-field history
//! and propagates the support of the initial states through the resulting
//! unitary; observables are averaged over runs.

use rayon::prelude::*;

use crate::error::{param, Result, RffError};
use crate::hamiltonians;
use crate::linalg::{self, c, CMat, C64};
use crate::noise::{self, NoiseParams, OuField};
use crate::spin::DensityMatrix;

use super::{ExperimentResult, SimConfig};

/// How one time step of e^{−iH(t)dt} is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    /// Power series of the full step exponential, summed to round-off.
    Exact,
    /// e^{−iH₀dt/2} e^{−iH_noise dt} e^{−iH₀dt/2}; the noise factor is a
    /// product of exact single-site rotations.
    Split,
}

pub struct EnsembleProblem<'a> {
    /// Field-independent part (bias plus dipole-dipole).
    pub h_static: &'a CMat,
    pub sites: &'a [[f64; 3]],
    /// γ in H_noise = −γ Σ_k b_k·σ_k.
    pub coupling: f64,
    pub noise: NoiseParams,
    pub initial: &'a [DensityMatrix],
    pub observables: &'a [(&'a str, CMat)],
    pub t_out: &'a [f64],
    pub method: StepMethod,
}

/// Per initial state and observable: mean and standard error at each output
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub t: Vec<f64>,
    pub observables: Vec<String>,
    pub mean: Vec<Vec<Vec<f64>>>,
    pub stderr: Vec<Vec<Vec<f64>>>,
    pub n_trajectories: usize,
}

impl EnsembleResult {
    pub fn mean_of(&self, state: usize, obs: &str) -> Option<&[f64]> {
        let k = self.observables.iter().position(|o| o == obs)?;
        Some(&self.mean[state][k])
    }

    pub fn stderr_of(&self, state: usize, obs: &str) -> Option<&[f64]> {
        let k = self.observables.iter().position(|o| o == obs)?;
        Some(&self.stderr[state][k])
    }

    /// Columns `{prefix}{obs}` and `{prefix}{obs}_err` for one initial state.
    pub fn append_to(&self, r: &mut ExperimentResult, state: usize, prefix: &str) {
        for (k, name) in self.observables.iter().enumerate() {
            r.push(&format!("{prefix}{name}"), self.mean[state][k].clone());
            r.push(&format!("{prefix}{name}_err"), self.stderr[state][k].clone());
        }
    }
}

/// Orthonormal basis of the joint support of the initial states.
fn support_basis(initial: &[DensityMatrix]) -> Result<CMat> {
    let dim = initial[0].dim();
    let mut sum = linalg::zeros(dim);
    for r in initial {
        if r.dim() != dim {
            return param("initial states differ in dimension");
        }
        sum += r.matrix();
    }
    let (vals, vecs) = linalg::eigh(&sum);
    let top = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..dim).filter(|&i| vals[i] > 1e-12 * top).collect();
    let mut b = CMat::zeros(dim, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        b.set_column(col, &vecs.column(i));
    }
    Ok(b)
}

/// Nonzero entries of a dense matrix, for cheap repeated products.
struct Sparse {
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    fn new(m: &CMat) -> Self {
        let scale = linalg::max_abs(m);
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)].norm() > 1e-17 * scale {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self { entries }
    }

    fn apply(&self, v: &mut [C64], tmp: &mut [C64]) {
        tmp.iter_mut().for_each(|x| *x = linalg::ZERO);
        for &(i, j, a) in &self.entries {
            tmp[i] += a * v[j];
        }
        v.copy_from_slice(tmp);
    }
}

struct Kernel<'a> {
    dim: usize,
    n_atoms: usize,
    rank: usize,
    problem: &'a EnsembleProblem<'a>,
    half: Sparse,
    full: Sparse,
    static_dense: Vec<C64>,
    offsets: Vec<[f64; 3]>,
    basis: CMat,
    /// B† ρ_i B for every initial state.
    reduced: Vec<CMat>,
    steps_per_segment: Vec<usize>,
}

impl<'a> Kernel<'a> {
    fn site_fields(&self, sample: &noise::FieldSample) -> Vec<[f64; 3]> {
        self.offsets
            .iter()
            .map(|d| {
                let gd = sample.g_dot(d);
                [sample.b[0] + gd[0], sample.b[1] + gd[1], sample.b[2] + gd[2]]
            })
            .collect()
    }

    /// Exact single-site rotations e^{iγ dt b_k·σ_k} applied to every vector.
    fn apply_noise(&self, fields: &[[f64; 3]], dt: f64, v: &mut [C64]) {
        let gdt = self.problem.coupling * dt;
        for (k, b) in fields.iter().enumerate() {
            let norm = linalg::norm3(b);
            if norm == 0.0 {
                continue;
            }
            let (s, co) = (gdt * norm).sin_cos();
            let n = [b[0] / norm, b[1] / norm, b[2] / norm];
            // cos θ + i sin θ n·σ in the (up, down) basis
            let u00 = c(co, s * n[2]);
            let u11 = c(co, -s * n[2]);
            let u01 = c(0.0, s) * c(n[0], -n[1]);
            let u10 = c(0.0, s) * c(n[0], n[1]);
            let mask = 1usize << (self.n_atoms - 1 - k);
            for col in 0..self.rank {
                let w = &mut v[col * self.dim..(col + 1) * self.dim];
                for i in 0..self.dim {
                    if i & mask == 0 {
                        let j = i | mask;
                        let (a, b) = (w[i], w[j]);
                        w[i] = u00 * a + u01 * b;
                        w[j] = u10 * a + u11 * b;
                    }
                }
            }
        }
    }

    /// Power series of e^{−iH dt} on every vector, H = H₀ + H_noise.
    fn apply_exact(&self, fields: &[[f64; 3]], dt: f64, v: &mut [C64], term: &mut [C64], tmp: &mut [C64]) {
        let d = self.dim;
        let mut h = self.static_dense.clone();
        let g = self.problem.coupling;
        for (k, b) in fields.iter().enumerate() {
            let mask = 1usize << (self.n_atoms - 1 - k);
            for i in 0..d {
                let up = i & mask == 0;
                let j = i ^ mask;
                h[i * d + i] += c(-g * if up { b[2] } else { -b[2] }, 0.0);
                // ⟨i|σx + σy|j⟩ with i the row index
                let off = if up { c(b[0], -b[1]) } else { c(b[0], b[1]) };
                h[i * d + j] += off * -g;
            }
        }
        let scale = c(0.0, -dt);
        for col in 0..self.rank {
            let w = &mut v[col * d..(col + 1) * d];
            term.copy_from_slice(w);
            for order in 1..40 {
                for i in 0..d {
                    let mut acc = linalg::ZERO;
                    for j in 0..d {
                        acc += h[i * d + j] * term[j];
                    }
                    tmp[i] = acc * scale / order as f64;
                }
                term.copy_from_slice(tmp);
                let mut size = 0.0f64;
                for i in 0..d {
                    w[i] += term[i];
                    size = size.max(term[i].norm());
                }
                if size < 1e-17 {
                    break;
                }
            }
        }
    }

    fn record(&self, v: &[C64], out: &mut Vec<f64>) {
        let d = self.dim;
        let vm = CMat::from_fn(d, self.rank, |i, col| v[col * d + i]);
        let vd = vm.adjoint();
        for (_, a) in self.problem.observables {
            let m = &vd * a * &vm;
            for rs in &self.reduced {
                out.push(linalg::expect(&m, rs));
            }
        }
    }

    /// Observable values ordered [time][observable][state].
    fn run(&self, cfg: &SimConfig, index: usize) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut field = OuField::new(self.problem.noise, cfg.dt, cfg.seed, index as u64 + 1)?;
        let mut v: Vec<C64> = (0..self.rank).flat_map(|col| (0..d).map(move |i| (col, i))).map(|(col, i)| self.basis[(i, col)]).collect();
        let (mut term, mut tmp) = (vec![linalg::ZERO; d], vec![linalg::ZERO; d]);
        let mut out = Vec::with_capacity(self.steps_per_segment.len() * self.problem.observables.len() * self.reduced.len());
        for &m in &self.steps_per_segment {
            if m > 0 && self.problem.method == StepMethod::Split {
                for col in 0..self.rank {
                    self.half.apply(&mut v[col * d..(col + 1) * d], &mut tmp);
                }
            }
            for s in 0..m {
                let fields = self.site_fields(&field.current());
                match self.problem.method {
                    StepMethod::Split => {
                        self.apply_noise(&fields, cfg.dt, &mut v);
                        let last = s + 1 == m;
                        let prop = if last { &self.half } else { &self.full };
                        for col in 0..self.rank {
                            prop.apply(&mut v[col * d..(col + 1) * d], &mut tmp);
                        }
                    }
                    StepMethod::Exact => self.apply_exact(&fields, cfg.dt, &mut v, &mut term, &mut tmp),
                }
                field.advance();
            }
            self.record(&v, &mut out);
        }
        Ok(out)
    }
}

/// Averages the observables over `cfg.n_trajectories` independent field
/// histories. Trajectory i draws its noise from stream i + 1 of `cfg.seed`;
/// the reduction runs in trajectory order, so results do not depend on the
/// number of worker threads.
pub fn stochastic_ensemble(problem: &EnsembleProblem, cfg: &SimConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    cfg.check_resolution()?;
    if problem.initial.is_empty() {
        return param("no initial states");
    }
    let n_atoms = problem.sites.len();
    let dim = 1usize << n_atoms;
    if problem.h_static.nrows() != dim || problem.initial.iter().any(|r| r.dim() != dim) {
        return param(format!("operators must be {dim}-dimensional for {n_atoms} sites"));
    }
    let fastest = linalg::eigvalsh(problem.h_static).iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if cfg.dt * fastest > 1.0 {
        return Err(RffError::Resolution(format!("dt·‖H₀‖ = {} is not small", cfg.dt * fastest)));
    }
    let mut steps_per_segment = Vec::with_capacity(problem.t_out.len());
    let mut prev = 0usize;
    for &t in problem.t_out {
        let k = (t / cfg.dt).round();
        if t < 0.0 || (k * cfg.dt - t).abs() > 1e-9 * cfg.dt.max(t) {
            return param(format!("output time {t} is not a multiple of dt = {}", cfg.dt));
        }
        let k = k as usize;
        if k < prev {
            return param("output times must be nondecreasing");
        }
        steps_per_segment.push(k - prev);
        prev = k;
    }
    let basis = support_basis(problem.initial)?;
    let reduced = problem.initial.iter().map(|r| basis.adjoint() * r.matrix() * &basis).collect();
    let center = noise::centroid(problem.sites);
    let kernel = Kernel {
        dim,
        n_atoms,
        rank: basis.ncols(),
        problem,
        half: Sparse::new(&linalg::expm_hermitian(problem.h_static, 0.5 * cfg.dt)),
        full: Sparse::new(&linalg::expm_hermitian(problem.h_static, cfg.dt)),
        static_dense: problem.h_static.transpose().iter().copied().collect(),
        offsets: problem.sites.iter().map(|r| linalg::sub3(r, &center)).collect(),
        basis,
        reduced,
        steps_per_segment,
    };

    let runs: Vec<Vec<f64>> =
        (0..cfg.n_trajectories).into_par_iter().map(|i| kernel.run(cfg, i)).collect::<Result<_>>()?;

    let (n_t, n_o, n_s) = (problem.t_out.len(), problem.observables.len(), problem.initial.len());
    let n = runs.len() as f64;
    let mut mean = vec![vec![vec![0.0; n_t]; n_o]; n_s];
    let mut stderr = vec![vec![vec![f64::NAN; n_t]; n_o]; n_s];
    let idx = |t: usize, o: usize, s: usize| (t * n_o + o) * n_s + s;
    for t in 0..n_t {
        for o in 0..n_o {
            for s in 0..n_s {
                let m = runs.iter().map(|r| r[idx(t, o, s)]).sum::<f64>() / n;
                mean[s][o][t] = m;
                if runs.len() > 1 {
                    let var = runs.iter().map(|r| (r[idx(t, o, s)] - m).powi(2)).sum::<f64>() / (n - 1.0);
                    stderr[s][o][t] = (var / n).sqrt();
                }
            }
        }
    }
    Ok(EnsembleResult {
        t: problem.t_out.to_vec(),
        observables: problem.observables.iter().map(|(n, _)| n.to_string()).collect(),
        mean,
        stderr,
        n_trajectories: runs.len(),
    })
}

/// Dimensionless trio parameters for ensemble runs: Γ = 1, triangle side
/// 1, coupling γ = 1, and the homogeneous noise strength b = g·a.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledTrio {
    pub gamma_tau: f64,
    pub omega_over_gamma: f64,
    pub omega0_over_gamma: f64,
    pub dt_omega0: f64,
}

impl Default for RescaledTrio {
    fn default() -> Self {
        Self { gamma_tau: 100.0, omega_over_gamma: 0.1, omega0_over_gamma: 50.0, dt_omega0: 0.1 }
    }
}

impl RescaledTrio {
    pub fn noise(&self) -> NoiseParams {
        let g = (1.0 / (3.0 * self.gamma_tau)).sqrt();
        NoiseParams { b: g, g, gamma: 1.0 }
    }

    pub fn tau(&self) -> f64 {
        self.gamma_tau
    }

    pub fn tau_prime(&self) -> Result<f64> {
        Ok(hamiltonians::lindblad_times(&self.noise(), 1.0, 1.0)?.1)
    }

    pub fn omega(&self) -> f64 {
        self.omega_over_gamma
    }

    pub fn omega0(&self) -> f64 {
        self.omega0_over_gamma
    }

    pub fn dt(&self) -> f64 {
        self.dt_omega0 / self.omega0_over_gamma
    }

    pub fn sites(&self) -> [[f64; 3]; 3] {
        crate::geometry::equilateral_sites(1.0)
    }

    /// ω0 J_z + Ω(J_z² − J²/3); `with_dd = false` drops the second term.
    pub fn h_static(&self, with_dd: bool) -> CMat {
        let mut h = hamiltonians::h_bias(self.omega0(), 3).expect("nonnegative bias");
        if with_dd {
            h += hamiltonians::ideal_dd_shape(3).expect("three atoms") * c(self.omega(), 0.0);
        }
        h
    }

    /// Output grid t/τ ∈ {0, 0.5, …, 3}.
    pub fn output_times(&self) -> Vec<f64> {
        (0..=6).map(|k| 0.5 * k as f64 * self.tau()).collect()
    }
}

/// Ensemble and closed-form curves for the ideal trio: persistence and Σ1
/// from s(0) = (1, 0, 0), Σ3 from s(0) = (0, 0, 1); optionally the same
/// ensemble with the dipole-dipole term switched off. Time is in units of τ.
pub fn fig4_experiment(p: &RescaledTrio, n_trajectories: usize, seed: u64, with_no_dd: bool, method: StepMethod) -> Result<ExperimentResult> {
    let t_out = p.output_times();
    let sites = p.sites();
    let ops = crate::spin::RffOperators::shared();
    let observables = [("P", ops.p_half.clone()), ("S1", ops.sigma[0].clone()), ("S3", ops.sigma[2].clone())];
    let initial = [
        crate::spin::encode_rff(&crate::spin::BlochVector::new([1.0, 0.0, 0.0])?),
        crate::spin::encode_rff(&crate::spin::BlochVector::new([0.0, 0.0, 1.0])?),
    ];
    let cfg = SimConfig {
        units: super::Units::Dimensionless,
        dt: p.dt(),
        t_end: *t_out.last().unwrap_or(&0.0),
        omega0: p.omega0(),
        omega: p.omega(),
        tau: p.tau(),
        tau_prime: p.tau_prime()?,
        tau1: hamiltonians::tau1_from(p.tau(), p.tau_prime()?),
        n_trajectories,
        seed,
    };
    let run = |with_dd: bool| {
        let h = p.h_static(with_dd);
        let problem = EnsembleProblem {
            h_static: &h,
            sites: &sites,
            coupling: 1.0,
            noise: p.noise(),
            initial: &initial,
            observables: &observables,
            t_out: &t_out,
            method,
        };
        stochastic_ensemble(&problem, &cfg)
    };
    let ens = run(true)?;
    let grid: Vec<f64> = t_out.iter().map(|t| t / p.tau()).collect();
    let mut r = ExperimentResult::new("t_over_tau", grid.clone());
    let e1: Vec<f64> = grid.iter().map(|t| (-t).exp()).collect();
    r.push("P_closed", e1.iter().map(|x| (2.0 + x) / 3.0).collect());
    r.push("S1_closed", grid.iter().map(|t| (-2.0 * t / 3.0).exp()).collect());
    r.push("S3_closed", e1);
    r.push("P", ens.mean[0][0].clone());
    r.push("P_err", ens.stderr[0][0].clone());
    r.push("S1", ens.mean[0][1].clone());
    r.push("S1_err", ens.stderr[0][1].clone());
    r.push("S3", ens.mean[1][2].clone());
    r.push("S3_err", ens.stderr[1][2].clone());
    // master equation at the same finite Ωτ, bias dropped since it commutes
    // with everything involved
    let spec = super::lindblad::LindbladSpec::stray_field(cfg.tau, cfg.tau_prime, 3)?;
    let h_dd = hamiltonians::ideal_dd_shape(3)? * c(p.omega(), 0.0);
    let opts = super::lindblad::IntegratorOptions::default();
    let obs = [("P", ops.p_half.clone()), ("S1", ops.sigma[0].clone()), ("S3", ops.sigma[2].clone())];
    let me1 = super::lindblad::lindblad_evolve(&initial[0], &h_dd, &spec, &t_out, &obs, &opts)?;
    let me3 = super::lindblad::lindblad_evolve(&initial[1], &h_dd, &spec, &t_out, &obs, &opts)?;
    r.push("P_master", me1.result.get("P").unwrap_or_default().to_vec());
    r.push("S1_master", me1.result.get("S1").unwrap_or_default().to_vec());
    r.push("S3_master", me3.result.get("S3").unwrap_or_default().to_vec());
    if with_no_dd {
        let free = run(false)?;
        r.push("S1_no_dd", free.mean[0][1].clone());
        r.push("S1_no_dd_err", free.stderr[0][1].clone());
    }
    for (k, v) in [
        ("gamma_tau", p.gamma_tau),
        ("omega_over_gamma", p.omega_over_gamma),
        ("omega0_over_gamma", p.omega0_over_gamma),
        ("dt_omega0", p.dt_omega0),
        ("tau_prime_over_tau", cfg.tau_prime / cfg.tau),
    ] {
        r.meta(k, v);
    }
    r.meta("trajectories", n_trajectories);
    r.meta("seed", seed);
    r.meta("step", format!("{method:?}"));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Units;
    use crate::spin::{encode_rff, BlochVector, RffOperators};

    fn cfg(dt: f64, omega0: f64, n: usize) -> SimConfig {
        SimConfig {
            units: Units::Dimensionless,
            dt,
            t_end: 0.0,
            omega0,
            omega: 0.0,
            tau: 0.0,
            tau_prime: 0.0,
            tau1: 0.0,
            n_trajectories: n,
            seed: 11,
        }
    }

    fn trio_obs() -> Vec<(&'static str, CMat)> {
        let ops = RffOperators::shared();
        vec![("P", ops.p_half.clone()), ("S1", ops.sigma[0].clone()), ("S3", ops.sigma[2].clone())]
    }

    #[test]
    fn zero_noise_is_static() {
        let p = RescaledTrio::default();
        let h = p.h_static(true);
        let sites = p.sites();
        let init = [encode_rff(&BlochVector::new([1.0, 0.0, 0.0]).unwrap())];
        let obs = trio_obs();
        let t_out = [0.0, 0.2, 1.0];
        for method in [StepMethod::Split, StepMethod::Exact] {
            let prob = EnsembleProblem {
                h_static: &h,
                sites: &sites,
                coupling: 1.0,
                noise: NoiseParams { b: 0.0, g: 0.0, gamma: 1.0 },
                initial: &init,
                observables: &obs,
                t_out: &t_out,
                method,
            };
            let r = stochastic_ensemble(&prob, &cfg(p.dt(), p.omega0(), 2)).unwrap();
            for k in 0..3 {
                assert!((r.mean_of(0, "P").unwrap()[k] - 1.0).abs() < 1e-12);
                assert!((r.mean_of(0, "S1").unwrap()[k] - 1.0).abs() < 1e-12);
                assert!(r.stderr_of(0, "P").unwrap()[k] < 1e-12);
            }
        }
    }

    #[test]
    fn split_and_exact_agree() {
        let p = RescaledTrio { gamma_tau: 2.0, ..Default::default() };
        let h = p.h_static(true);
        let sites = p.sites();
        let init = [encode_rff(&BlochVector::new([1.0, 0.0, 0.0]).unwrap()), encode_rff(&BlochVector::new([0.0, 0.0, 1.0]).unwrap())];
        let obs = trio_obs();
        let t_out = [0.0, 1.0, 2.0];
        let run = |method| {
            let prob = EnsembleProblem { h_static: &h, sites: &sites, coupling: 1.0, noise: p.noise(), initial: &init, observables: &obs, t_out: &t_out, method };
            stochastic_ensemble(&prob, &cfg(p.dt(), p.omega0(), 3)).unwrap()
        };
        let (a, b) = (run(StepMethod::Split), run(StepMethod::Exact));
        for s in 0..2 {
            for o in 0..3 {
                for k in 0..3 {
                    assert!((a.mean[s][o][k] - b.mean[s][o][k]).abs() < 1e-5, "{s} {o} {k}");
                }
            }
        }
        assert!(a.mean_of(0, "P").unwrap()[2] < 0.999);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let p = RescaledTrio { gamma_tau: 2.0, ..Default::default() };
        let h = p.h_static(true);
        let sites = p.sites();
        let init = [encode_rff(&BlochVector::new([0.0, 0.0, 1.0]).unwrap())];
        let obs = trio_obs();
        let t_out = [0.0, 0.5];
        let prob = EnsembleProblem { h_static: &h, sites: &sites, coupling: 1.0, noise: p.noise(), initial: &init, observables: &obs, t_out: &t_out, method: StepMethod::Split };
        let c = cfg(p.dt(), p.omega0(), 4);
        let a = stochastic_ensemble(&prob, &c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| stochastic_ensemble(&prob, &c).unwrap());
        assert_eq!(a, b);
        let one = stochastic_ensemble(&prob, &cfg(p.dt(), p.omega0(), 1)).unwrap();
        assert!(one.stderr_of(0, "P").unwrap().iter().all(|x| x.is_nan()));
    }

    #[test]
    fn resolution_guard() {
        let p = RescaledTrio::default();
        let h = p.h_static(true);
        let sites = p.sites();
        let init = [encode_rff(&BlochVector::zero())];
        let obs = trio_obs();
        let prob = EnsembleProblem { h_static: &h, sites: &sites, coupling: 1.0, noise: p.noise(), initial: &init, observables: &obs, t_out: &[0.0], method: StepMethod::Split };
        assert!(matches!(stochastic_ensemble(&prob, &cfg(0.01, 50.0, 1)), Err(RffError::Resolution(_))));
        assert!(stochastic_ensemble(&prob, &cfg(p.dt(), p.omega0(), 0)).is_err());
    }
}
