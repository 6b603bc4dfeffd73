//! Stochastic stray magnetic field: a homogeneous part B(t) plus a symmetric,
//! traceless gradient dyadic G(t), every degree of freedom an
//! Ornstein–Uhlenbeck process with correlation e^{−Γ|t−t′|}.
//!
//! Seeding: a path is drawn from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `stream`. Standalone paths use stream 0; ensemble trajectory `i` uses
//! stream `i + 1`, so trajectories are independent and reproducible in any
//! execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Result, RffError};
use crate::linalg::{dot3, sub3};

/// Strength and correlation rate of the stray field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Same-site field standard deviation per component.
    pub b: f64,
    /// Standard deviation of the diagonal gradient entries.
    pub g: f64,
    /// Inverse correlation time Γ.
    pub gamma: f64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return param(format!("noise gamma must be positive, got {}", self.gamma));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) || !(self.g >= 0.0 && self.g.is_finite()) {
            return param(format!("noise strengths must be nonnegative, got b = {}, g = {}", self.b, self.g));
        }
        Ok(())
    }

    /// Warning text when g·a is not small against b.
    pub fn gradient_warning(&self, a: f64) -> Option<String> {
        let ratio = self.g * a / self.b;
        (ratio > 0.1).then(|| format!("g·a/b = {ratio:.3e} is not small"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub t: f64,
    pub b: [f64; 3],
    pub g: [[f64; 3]; 3],
}

impl FieldSample {
    pub fn trace_g(&self) -> f64 {
        self.g[0][0] + self.g[1][1] + self.g[2][2]
    }

    /// G·v.
    pub fn g_dot(&self, v: &[f64; 3]) -> [f64; 3] {
        [dot3(&self.g[0], v), dot3(&self.g[1], v), dot3(&self.g[2], v)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub dt: f64,
    pub params: NoiseParams,
    pub samples: Vec<FieldSample>,
    pub seed: u64,
    pub stream: u64,
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Symmetric traceless matrix from coordinates on the orthonormal basis
/// (xy+yx)/√2, (xz+zx)/√2, (yz+zy)/√2, (xx−yy)/√2, (xx+yy−2zz)/√6.
pub fn gradient_from_coords(x: &[f64; 5]) -> [[f64; 3]; 3] {
    let s6 = 1.0 / 6f64.sqrt();
    let xy = x[0] * INV_SQRT2;
    let xz = x[1] * INV_SQRT2;
    let yz = x[2] * INV_SQRT2;
    let xx = x[3] * INV_SQRT2 + x[4] * s6;
    let yy = -x[3] * INV_SQRT2 + x[4] * s6;
    let zz = -2.0 * x[4] * s6;
    [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
}

/// Streaming exact-update OU generator for (B, G).
#[derive(Debug, Clone)]
pub struct OuField {
    params: NoiseParams,
    dt: f64,
    decay: f64,
    kick: f64,
    sigma_g: f64,
    b: [f64; 3],
    x: [f64; 5],
    t: f64,
    rng: ChaCha8Rng,
}

impl OuField {
    /// Starts in the stationary distribution at t = 0.
    pub fn new(params: NoiseParams, dt: f64, seed: u64, stream: u64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return param(format!("time step must be positive, got {dt}"));
        }
        if dt * params.gamma > 0.1 {
            return Err(RffError::Resolution(format!(
                "dt·Γ = {} exceeds 0.1; the correlation time is not resolved",
                dt * params.gamma
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let decay = (-params.gamma * dt).exp();
        let sigma_g = params.g * 1.5f64.sqrt();
        let mut f = Self {
            params,
            dt,
            decay,
            kick: (1.0 - decay * decay).sqrt(),
            sigma_g,
            b: [0.0; 3],
            x: [0.0; 5],
            t: 0.0,
            rng,
        };
        for i in 0..3 {
            f.b[i] = params.b * f.normal();
        }
        for i in 0..5 {
            f.x[i] = sigma_g * f.normal();
        }
        Ok(f)
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn params(&self) -> NoiseParams {
        self.params
    }

    pub fn homogeneous(&self) -> [f64; 3] {
        self.b
    }

    pub fn gradient_coords(&self) -> [f64; 5] {
        self.x
    }

    pub fn current(&self) -> FieldSample {
        FieldSample { t: self.t, b: self.b, g: gradient_from_coords(&self.x) }
    }

    /// x ← x e^{−Γdt} + σ√(1 − e^{−2Γdt}) ξ for every degree of freedom.
    pub fn advance(&mut self) {
        let (d, k) = (self.decay, self.kick);
        let sb = self.params.b * k;
        let sg = self.sigma_g * k;
        for i in 0..3 {
            let xi = self.normal();
            self.b[i] = self.b[i] * d + sb * xi;
        }
        for i in 0..5 {
            let xi = self.normal();
            self.x[i] = self.x[i] * d + sg * xi;
        }
        self.t += self.dt;
    }
}

/// `n_steps` consecutive samples at t = 0, dt, 2dt, ….
pub fn sample_path(params: NoiseParams, dt: f64, n_steps: usize, seed: u64) -> Result<FieldPath> {
    sample_path_stream(params, dt, n_steps, seed, 0)
}

pub fn sample_path_stream(params: NoiseParams, dt: f64, n_steps: usize, seed: u64, stream: u64) -> Result<FieldPath> {
    let mut gen = OuField::new(params, dt, seed, stream)?;
    let mut samples = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        if n > 0 {
            gen.advance();
        }
        let mut s = gen.current();
        s.t = n as f64 * dt;
        samples.push(s);
    }
    Ok(FieldPath { dt, params, samples, seed, stream })
}

/// B + G·(r − r_centroid).
pub fn field_at_site(sample: &FieldSample, r: &[f64; 3], centroid: &[f64; 3]) -> [f64; 3] {
    let d = sub3(r, centroid);
    let gd = sample.g_dot(&d);
    [sample.b[0] + gd[0], sample.b[1] + gd[1], sample.b[2] + gd[2]]
}

pub fn centroid(sites: &[[f64; 3]]) -> [f64; 3] {
    let n = sites.len() as f64;
    let mut c = [0.0; 3];
    for s in sites {
        for i in 0..3 {
            c[i] += s[i] / n;
        }
    }
    c
}

/// ⟨v1·G(t)·v2  v3·G(t′)·v4⟩ = (g²/4)(3 v1·v3 v2·v4 + 3 v1·v4 v2·v3 − 2 v1·v2 v3·v4) e^{−Γ|lag|}.
pub fn gradient_correlation(p: &NoiseParams, v: [&[f64; 3]; 4], lag: f64) -> f64 {
    let [v1, v2, v3, v4] = v;
    0.25 * p.g * p.g
        * (3.0 * dot3(v1, v3) * dot3(v2, v4) + 3.0 * dot3(v1, v4) * dot3(v2, v3) - 2.0 * dot3(v1, v2) * dot3(v3, v4))
        * (-p.gamma * lag.abs()).exp()
}

/// ⟨v1·(b_k − b_l)(t) (b_k − b_l)(t′)·v2⟩ = (g²/4)[3 v1·v2 r² + v1·r r·v2] e^{−Γ|lag|}.
pub fn difference_correlation(p: &NoiseParams, r_kl: &[f64; 3], lag: f64, v1: &[f64; 3], v2: &[f64; 3]) -> f64 {
    0.25 * p.g * p.g
        * (3.0 * dot3(v1, v2) * dot3(r_kl, r_kl) + dot3(v1, r_kl) * dot3(r_kl, v2))
        * (-p.gamma * lag.abs()).exp()
}

/// ⟨v1·b_k(t) b_l(t′)·v2⟩ = [b² v1·v2 − (g²/8)(3 v1·v2 r² + v1·r r·v2)] e^{−Γ|lag|}.
pub fn site_correlation(p: &NoiseParams, r_kl: &[f64; 3], lag: f64, v1: &[f64; 3], v2: &[f64; 3]) -> f64 {
    (p.b * p.b * dot3(v1, v2)
        - 0.125 * p.g * p.g * (3.0 * dot3(v1, v2) * dot3(r_kl, r_kl) + dot3(v1, r_kl) * dot3(r_kl, v2)))
        * (-p.gamma * lag.abs()).exp()
}

/// One empirical-versus-closed-form comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StatCheck {
    pub name: String,
    pub empirical: f64,
    pub theoretical: f64,
    pub stderr: f64,
    pub z: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub checks: Vec<StatCheck>,
    pub max_asymmetry: f64,
    pub max_trace: f64,
    pub structure_passed: bool,
    pub z_threshold: f64,
}

impl NoiseReport {
    pub fn passed(&self) -> bool {
        self.structure_passed && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&StatCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const N_BATCHES: usize = 50;

/// Mean of `f(n)` over n in [0, len) and its batch-means standard error.
fn batch_mean(len: usize, f: impl Fn(usize) -> f64) -> (f64, f64) {
    let per = len / N_BATCHES;
    let mut means = Vec::with_capacity(N_BATCHES);
    for b in 0..N_BATCHES {
        let s: f64 = (b * per..(b + 1) * per).map(&f).sum();
        means.push(s / per as f64);
    }
    let m = means.iter().sum::<f64>() / N_BATCHES as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (N_BATCHES - 1) as f64;
    (m, (var / N_BATCHES as f64).sqrt())
}

/// Batch-means estimate of a ratio of two means.
fn batch_ratio(len: usize, num: impl Fn(usize) -> f64, den: impl Fn(usize) -> f64) -> (f64, f64) {
    let per = len / N_BATCHES;
    let mut ratios = Vec::with_capacity(N_BATCHES);
    let (mut tn, mut td) = (0.0, 0.0);
    for b in 0..N_BATCHES {
        let n: f64 = (b * per..(b + 1) * per).map(&num).sum();
        let d: f64 = (b * per..(b + 1) * per).map(&den).sum();
        tn += n;
        td += d;
        ratios.push(n / d);
    }
    let m = ratios.iter().sum::<f64>() / N_BATCHES as f64;
    let var = ratios.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (N_BATCHES - 1) as f64;
    (tn / td, (var / N_BATCHES as f64).sqrt())
}

fn make_check(name: impl Into<String>, emp: f64, theo: f64, se: f64, zmax: f64) -> StatCheck {
    let z = if se > 0.0 {
        (emp - theo) / se
    } else if emp == theo {
        0.0
    } else {
        f64::INFINITY
    };
    StatCheck { name: name.into(), empirical: emp, theoretical: theo, stderr: se, z, passed: z.abs() < zmax }
}

/// Lags (in samples) at 0, 1/Γ and 2/Γ.
pub fn standard_lags(path: &FieldPath) -> [usize; 3] {
    let per = 1.0 / (path.params.gamma * path.dt);
    [0, per.round() as usize, (2.0 * per).round() as usize]
}

/// Compares a path with the closed-form correlators.
///
/// Checks: zero mean and variance b² of B; diagonal and off-diagonal gradient
/// variances and their 4/3 ratio; the xx–yy cross covariance; the
/// difference-field autocorrelation at lags 0, 1/Γ, 2/Γ averaged over site
/// pairs and axes; and stationarity of the difference-field variance between
/// the two halves. Exact symmetry and tracelessness are checked per sample.
pub fn validate_statistics(path: &FieldPath, sites: &[[f64; 3]], z_threshold: f64) -> Result<NoiseReport> {
    let n = path.samples.len();
    let span = n as f64 * path.dt * path.params.gamma;
    if n < 1000 || span < 500.0 {
        return Err(RffError::InsufficientData(format!(
            "{n} samples covering {span:.1} correlation times; need at least 1000 samples and 500 correlation times"
        )));
    }
    let p = path.params;
    let s = &path.samples;
    let mut checks = Vec::new();

    let mut max_asym: f64 = 0.0;
    let mut max_tr: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for smp in s {
        for i in 0..3 {
            for j in 0..3 {
                max_asym = max_asym.max((smp.g[i][j] - smp.g[j][i]).abs());
                scale = scale.max(smp.g[i][j].abs());
            }
        }
        max_tr = max_tr.max(smp.trace_g().abs());
    }
    let structure_passed = max_asym == 0.0 && max_tr <= 1e-12 * scale.max(f64::MIN_POSITIVE);

    for (a, label) in ["x", "y", "z"].iter().enumerate() {
        let (m, se) = batch_mean(n, |i| s[i].b[a]);
        checks.push(make_check(format!("mean B{label}"), m, 0.0, se, z_threshold));
        let (v, se) = batch_mean(n, |i| s[i].b[a] * s[i].b[a]);
        checks.push(make_check(format!("var B{label}"), v, p.b * p.b, se, z_threshold));
    }

    let diag = |i: usize| (s[i].g[0][0].powi(2) + s[i].g[1][1].powi(2) + s[i].g[2][2].powi(2)) / 3.0;
    let off = |i: usize| (s[i].g[0][1].powi(2) + s[i].g[0][2].powi(2) + s[i].g[1][2].powi(2)) / 3.0;
    let (v, se) = batch_mean(n, diag);
    checks.push(make_check("var G diagonal", v, p.g * p.g, se, z_threshold));
    let (v, se) = batch_mean(n, off);
    checks.push(make_check("var G off-diagonal", v, 0.75 * p.g * p.g, se, z_threshold));
    let (r, se) = batch_ratio(n, diag, off);
    checks.push(make_check("var ratio diagonal/off-diagonal", r, 4.0 / 3.0, se, z_threshold));
    let (v, se) = batch_mean(n, |i| s[i].g[0][0] * s[i].g[1][1]);
    checks.push(make_check("cov Gxx Gyy", v, -0.5 * p.g * p.g, se, z_threshold));

    let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut rels: Vec<[f64; 3]> = Vec::new();
    for k in 0..sites.len() {
        for l in k + 1..sites.len() {
            rels.push(sub3(&sites[k], &sites[l]));
        }
    }
    if !rels.is_empty() {
        let diffs: Vec<[f64; 3]> = s.iter().flat_map(|smp| rels.iter().map(move |r| smp.g_dot(r))).collect();
        let np = rels.len();
        let norm = (np * 3) as f64;
        for lag in standard_lags(path) {
            let len = n - lag;
            let (emp, se) = batch_mean(len, |i| {
                let mut acc = 0.0;
                for q in 0..np {
                    let a = &diffs[i * np + q];
                    let b = &diffs[(i + lag) * np + q];
                    acc += dot3(a, b);
                }
                acc / norm
            });
            let theo: f64 = rels
                .iter()
                .flat_map(|r| axes.iter().map(move |v| difference_correlation(&p, r, lag as f64 * path.dt, v, v)))
                .sum::<f64>()
                / norm;
            let t = lag as f64 * path.dt * p.gamma;
            checks.push(make_check(format!("difference autocorrelation lag {t:.2}/Γ"), emp, theo, se, z_threshold));
        }
        let half = n / 2;
        let sq = |i: usize| (0..np).map(|q| dot3(&diffs[i * np + q], &diffs[i * np + q])).sum::<f64>() / norm;
        let (m1, se1) = batch_mean(half, sq);
        let (m2, se2) = batch_mean(half, |i| sq(i + half));
        checks.push(make_check("stationarity of difference variance", m2 - m1, 0.0, (se1 * se1 + se2 * se2).sqrt(), z_threshold));
    }

    Ok(NoiseReport { checks, max_asymmetry: max_asym, max_trace: max_tr, structure_passed, z_threshold })
}

/// CSV rows `t,Bx,By,Bz,Gxx,Gxy,Gxz,Gyy,Gyz` (Gzz follows from tracelessness).
pub fn path_csv_rows(path: &FieldPath) -> Vec<[f64; 9]> {
    path.samples
        .iter()
        .map(|s| [s.t, s.b[0], s.b[1], s.b[2], s.g[0][0], s.g[0][1], s.g[0][2], s.g[1][1], s.g[1][2]])
        .collect()
}

pub const PATH_CSV_HEADER: &str = "t,Bx,By,Bz,Gxx,Gxy,Gxz,Gyy,Gyz";

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NoiseParams {
        NoiseParams { b: 2.0, g: 1.5, gamma: 1.0 }
    }

    #[test]
    fn zero_gradient_gives_zero_dyadic() {
        let p = NoiseParams { g: 0.0, ..params() };
        let path = sample_path(p, 0.1, 200, 3).unwrap();
        assert!(path.samples.iter().all(|s| s.g.iter().flatten().all(|&x| x == 0.0)));
    }

    #[test]
    fn resolution_guard() {
        assert!(matches!(sample_path(params(), 0.2, 10, 1), Err(RffError::Resolution(_))));
        assert!(sample_path(params(), 0.0, 10, 1).is_err());
    }

    #[test]
    fn coords_give_symmetric_traceless() {
        let g = gradient_from_coords(&[0.3, -1.1, 0.7, 2.2, -0.4]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g[i][j], g[j][i]);
            }
        }
        assert!((g[0][0] + g[1][1] + g[2][2]).abs() < 1e-15);
    }

    #[test]
    fn deterministic_paths() {
        let a = sample_path(params(), 0.05, 500, 9).unwrap();
        let b = sample_path(params(), 0.05, 500, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_path_stream(params(), 0.05, 500, 9, 1).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn site_field_examples() {
        let path = sample_path(params(), 0.05, 3, 1).unwrap();
        let s = &path.samples[2];
        let c = [0.1, 0.2, 0.3];
        assert_eq!(field_at_site(s, &c, &c), s.b);
        let rk = [1.0, 0.0, 0.0];
        let rl = [0.0, 1.0, 0.5];
        let fk = field_at_site(s, &rk, &c);
        let fl = field_at_site(s, &rl, &c);
        let want = s.g_dot(&sub3(&rk, &rl));
        for i in 0..3 {
            assert!((fk[i] - fl[i] - want[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_examples() {
        let p = params();
        let ez = [0.0, 0.0, 1.0];
        assert!((site_correlation(&p, &[0.0; 3], 0.0, &ez, &ez) - p.b * p.b).abs() < 1e-15);
        let r = [0.7, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0];
        let d = difference_correlation(&p, &r, 0.0, &v, &v);
        assert!((d - 0.75 * p.g * p.g * 0.49).abs() < 1e-14);
        // four site correlators reproduce the difference correlator
        for (v1, v2) in [([1.0, 0.0, 0.0], [0.0, 0.6, 0.8]), ([0.6, 0.8, 0.0], [0.6, 0.8, 0.0])] {
            let r = [0.3, -0.2, 0.9];
            let neg = [-0.3, 0.2, -0.9];
            let lag = 0.4;
            let lhs = difference_correlation(&p, &r, lag, &v1, &v2);
            let rhs = 2.0 * site_correlation(&p, &[0.0; 3], lag, &v1, &v2)
                - site_correlation(&p, &r, lag, &v1, &v2)
                - site_correlation(&p, &neg, lag, &v1, &v2);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_law_matches_difference_law() {
        let p = params();
        let r = [0.3, -0.2, 0.9];
        let v1 = [1.0, 0.0, 0.0];
        let v2 = [0.0, 0.6, 0.8];
        let via_g = gradient_correlation(&p, [&v1, &r, &v2, &r], 0.2);
        assert!((via_g - difference_correlation(&p, &r, 0.2, &v1, &v2)).abs() < 1e-14);
        let e = [0.0, 0.0, 1.0];
        let e2 = [1.0, 0.0, 0.0];
        let diag = gradient_correlation(&p, [&e, &e, &e, &e], 0.0);
        let off = gradient_correlation(&p, [&e, &e2, &e, &e2], 0.0);
        assert!((diag / off - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn short_path_rejected() {
        let path = sample_path(params(), 0.1, 100, 1).unwrap();
        assert!(matches!(validate_statistics(&path, &[], 5.0), Err(RffError::InsufficientData(_))));
        let empty = FieldPath { dt: 0.1, params: params(), samples: vec![], seed: 0, stream: 0 };
        assert!(matches!(validate_statistics(&empty, &[], 5.0), Err(RffError::InsufficientData(_))));
    }

    #[test]
    fn injected_trace_fails_structure() {
        let mut path = sample_path(params(), 0.1, 20_000, 4).unwrap();
        path.samples[17].g[2][2] += 0.5;
        let rep = validate_statistics(&path, &[], 5.0).unwrap();
        assert!(!rep.structure_passed);
        assert!(!rep.passed());
    }
}
