//! Six-beam optical lattice: two three-beam interference patterns whose
//! superposition puts an equilateral trio of wells at every site of a
//! triangular super-lattice.
//!
//! Potential units are dimensionless (one beam set of unit strength at
//! unit field amplitude per beam); `physical_scale` converts to joules.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{param, Result, RffError};
use crate::hamiltonians::CONSTANTS;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    pub lambda_long: f64,
    pub lambda_short: f64,
    pub phases_long: [f64; 3],
    pub phases_short: [f64; 3],
    /// Strength of the long-wavelength pattern over the short one.
    pub intensity_ratio: f64,
    /// Orientation of the short set relative to the long one (rad).
    pub short_rotation: f64,
    /// Orientation of the long set; beam 1 lies along +x at zero.
    pub long_rotation: f64,
    pub atom_mass: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            lambda_long: 10.6e-6,
            lambda_short: 10.6e-6 / 8.0,
            phases_long: [0.0; 3],
            phases_short: [2.0 * PI / 3.0, 0.0, -2.0 * PI / 3.0],
            intensity_ratio: 4.0,
            short_rotation: 0.0,
            long_rotation: 0.0,
            atom_mass: CONSTANTS.atom_mass,
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_long > 0.0 && self.lambda_short > 0.0) || !self.lambda_long.is_finite() || !self.lambda_short.is_finite() {
            return param("wavelengths must be positive and finite");
        }
        if !(self.intensity_ratio >= 0.0 && self.intensity_ratio.is_finite()) {
            return param(format!("intensity_ratio must be non-negative, got {}", self.intensity_ratio));
        }
        if !(self.atom_mass > 0.0) {
            return param("atom_mass must be positive");
        }
        let all = self.phases_long.iter().chain(&self.phases_short).chain([&self.short_rotation, &self.long_rotation]);
        if all.into_iter().any(|p| !p.is_finite()) {
            return param("phases and rotations must be finite");
        }
        Ok(())
    }

    /// Long set first; the short set carries unit weight.
    fn beam_sets(&self) -> [BeamSet; 2] {
        [
            BeamSet::new(self.lambda_long, self.long_rotation, self.phases_long, self.intensity_ratio),
            BeamSet::new(self.lambda_short, self.long_rotation + self.short_rotation, self.phases_short, 1.0),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct BeamSet {
    k: [Point; 3],
    phases: [f64; 3],
    weight: f64,
}

impl BeamSet {
    fn new(lambda: f64, rotation: f64, phases: [f64; 3], weight: f64) -> Self {
        let kn = 2.0 * PI / lambda;
        let k = std::array::from_fn(|j| {
            let a = rotation + 2.0 * PI * j as f64 / 3.0;
            [kn * a.cos(), kn * a.sin()]
        });
        Self { k, phases, weight }
    }

    /// −w|S|² with its gradient and Hessian, S = Σ e^{i(k·r+φ)}.
    fn eval(&self, p: Point) -> (f64, Point, [[f64; 2]; 2]) {
        let mut s = C64::new(0.0, 0.0);
        let mut ds = [C64::new(0.0, 0.0); 2];
        let mut dds = [[C64::new(0.0, 0.0); 2]; 2];
        for (k, ph) in self.k.iter().zip(self.phases) {
            let e = C64::from_polar(1.0, k[0] * p[0] + k[1] * p[1] + ph);
            s += e;
            for a in 0..2 {
                ds[a] += C64::i() * k[a] * e;
                for b in 0..2 {
                    dds[a][b] -= k[a] * k[b] * e;
                }
            }
        }
        let w = -self.weight;
        let grad = std::array::from_fn(|a| w * 2.0 * (s.conj() * ds[a]).re);
        let hess = std::array::from_fn(|a| std::array::from_fn(|b| w * 2.0 * ((ds[a].conj() * ds[b]).re + (s.conj() * dds[a][b]).re)));
        (w * s.norm_sqr(), grad, hess)
    }
}

pub fn potential(cfg: &LatticeConfig, x: f64, y: f64) -> f64 {
    cfg.beam_sets().iter().map(|b| b.eval([x, y]).0).sum()
}

/// Value, analytic gradient and analytic Hessian.
pub fn potential_derivs(cfg: &LatticeConfig, p: Point) -> (f64, Point, [[f64; 2]; 2]) {
    let mut v = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for set in cfg.beam_sets() {
        let (sv, sg, sh) = set.eval(p);
        v += sv;
        for a in 0..2 {
            g[a] += sg[a];
            for b in 0..2 {
                h[a][b] += sh[a][b];
            }
        }
    }
    (v, g, h)
}

fn solve2(m: [[f64; 2]; 2], rhs: Point) -> Option<Point> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max).powi(2);
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    Some([(rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det, (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det])
}

fn sym_eig2(h: [[f64; 2]; 2]) -> [f64; 2] {
    let mean = 0.5 * (h[0][0] + h[1][1]);
    let r = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[1][0]).max(0.0).sqrt();
    [mean - r, mean + r]
}

/// Primitive vectors of the long-wavelength triangular lattice.
pub fn lattice_vectors(cfg: &LatticeConfig) -> [Point; 2] {
    let [long, _] = cfg.beam_sets();
    let b1 = [long.k[0][0] - long.k[1][0], long.k[0][1] - long.k[1][1]];
    let b2 = [long.k[1][0] - long.k[2][0], long.k[1][1] - long.k[2][1]];
    let m = [b1, b2];
    let a1 = solve2(m, [2.0 * PI, 0.0]).expect("long wave vectors span the plane");
    let a2 = solve2(m, [0.0, 2.0 * PI]).expect("long wave vectors span the plane");
    [a1, a2]
}

/// Centre of lattice site (n1, n2): a maximum of the long-wavelength
/// intensity, where all three long beams are in phase.
pub fn site_center(cfg: &LatticeConfig, n1: i64, n2: i64) -> Point {
    let [long, _] = cfg.beam_sets();
    let b1 = [long.k[0][0] - long.k[1][0], long.k[0][1] - long.k[1][1]];
    let b2 = [long.k[1][0] - long.k[2][0], long.k[1][1] - long.k[2][1]];
    let ph = cfg.phases_long;
    let r0 = solve2([b1, b2], [ph[1] - ph[0], ph[2] - ph[1]]).expect("long wave vectors span the plane");
    let [a1, a2] = lattice_vectors(cfg);
    [r0[0] + n1 as f64 * a1[0] + n2 as f64 * a2[0], r0[1] + n1 as f64 * a1[1] + n2 as f64 * a2[1]]
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Region {
    pub fn around(center: Point, half_width: f64) -> Self {
        Self { x: (center[0] - half_width, center[0] + half_width), y: (center[1] - half_width, center[1] + half_width) }
    }

    fn contains(&self, p: Point) -> bool {
        p[0] >= self.x.0 && p[0] <= self.x.1 && p[1] >= self.y.0 && p[1] <= self.y.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMinimum {
    pub position: Point,
    pub value: f64,
    /// |∇V| in units of (depth scale)/λ_short.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerOptions {
    pub starts_per_axis: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self { starts_per_axis: 24, grad_tol: 1e-12, max_iter: 400 }
    }
}

/// Deepest conceivable well, used to put gradients in normalized units.
fn depth_scale(cfg: &LatticeConfig) -> f64 {
    9.0 * (cfg.intensity_ratio + 1.0)
}

enum Descent {
    Minimum(LocalMinimum),
    Stationary,
    Stalled { at: Point, grad: f64 },
}

/// Damped Newton on the analytic Hessian, falling back to steepest descent
/// where the Hessian is not positive definite.
fn descend(cfg: &LatticeConfig, start: Point, opts: &MinimizerOptions) -> Descent {
    let unit = cfg.lambda_short / depth_scale(cfg);
    let max_step = cfg.lambda_short / 10.0;
    let mut p = start;
    let (mut v, mut g, mut h) = potential_derivs(cfg, p);
    for _ in 0..opts.max_iter {
        let gn = g[0].hypot(g[1]) * unit;
        if gn < opts.grad_tol {
            return if sym_eig2(h)[0] > 0.0 {
                Descent::Minimum(LocalMinimum { position: p, value: v, grad_norm: gn })
            } else {
                Descent::Stationary
            };
        }
        let newton = (sym_eig2(h)[0] > 0.0).then(|| solve2(h, [-g[0], -g[1]])).flatten();
        let mut dir = newton.unwrap_or_else(|| {
            let gl = g[0].hypot(g[1]);
            [-g[0] / gl * max_step, -g[1] / gl * max_step]
        });
        let len = dir[0].hypot(dir[1]);
        if len > max_step {
            dir = [dir[0] * max_step / len, dir[1] * max_step / len];
        }
        if newton.is_some() && gn < 1e-6 {
            // near the bottom V changes below its own round-off, so trust Newton
            p = [p[0] + dir[0], p[1] + dir[1]];
            (v, g, h) = potential_derivs(cfg, p);
            continue;
        }
        let mut t = 1.0;
        loop {
            let q = [p[0] + t * dir[0], p[1] + t * dir[1]];
            let (qv, qg, qh) = potential_derivs(cfg, q);
            let slope = g[0] * dir[0] + g[1] * dir[1];
            if qv <= v + 1e-4 * t * slope || t < 1e-12 {
                if t < 1e-12 && qv > v {
                    break;
                }
                p = q;
                v = qv;
                g = qg;
                h = qh;
                break;
            }
            t *= 0.5;
        }
    }
    Descent::Stalled { at: p, grad: g[0].hypot(g[1]) * unit }
}

/// All local minima inside `region`, from a regular grid of starts,
/// merged within λ_short/20 and sorted by depth.
pub fn find_minima(cfg: &LatticeConfig, region: Region, opts: &MinimizerOptions) -> Result<Vec<LocalMinimum>> {
    cfg.validate()?;
    if opts.starts_per_axis < 2 {
        return param("need at least two starts per axis");
    }
    let n = opts.starts_per_axis;
    let starts: Vec<Point> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let fx = (i as f64 + 0.5) / n as f64;
            let fy = (j as f64 + 0.5) / n as f64;
            [region.x.0 + fx * (region.x.1 - region.x.0), region.y.0 + fy * (region.y.1 - region.y.0)]
        })
        .collect();
    let outcomes: Vec<Descent> = starts.par_iter().map(|&s| descend(cfg, s, opts)).collect();
    let merge = cfg.lambda_short / 20.0;
    let mut found: Vec<LocalMinimum> = Vec::new();
    for (start, out) in starts.iter().zip(outcomes) {
        match out {
            Descent::Minimum(m) => {
                if region.contains(m.position)
                    && !found.iter().any(|f| (f.position[0] - m.position[0]).hypot(f.position[1] - m.position[1]) < merge)
                {
                    found.push(m);
                }
            }
            Descent::Stationary => {}
            Descent::Stalled { at, grad } => {
                return Err(RffError::Numerical(format!(
                    "minimizer did not converge from ({:.4e}, {:.4e}) m: stopped at ({:.4e}, {:.4e}) m with normalized |grad| = {grad:.3e}",
                    start[0], start[1], at[0], at[1]
                )));
            }
        }
    }
    found.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.position[0].total_cmp(&b.position[0])).then(a.position[1].total_cmp(&b.position[1])));
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trio {
    pub sites: [Point; 3],
    pub value: f64,
    pub sides: [f64; 3],
    pub centroid: Point,
}

impl Trio {
    pub fn mean_side(&self) -> f64 {
        self.sides.iter().sum::<f64>() / 3.0
    }

    /// (max − min)/mean of the three sides.
    pub fn spread(&self) -> f64 {
        let hi = self.sides.iter().cloned().fold(f64::MIN, f64::max);
        let lo = self.sides.iter().cloned().fold(f64::MAX, f64::min);
        (hi - lo) / self.mean_side()
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The three deepest wells closest to site (n1, n2).
pub fn site_trio(cfg: &LatticeConfig, n1: i64, n2: i64, opts: &MinimizerOptions) -> Result<Trio> {
    let center = site_center(cfg, n1, n2);
    let half = 0.75 * cfg.lambda_short.max(cfg.lambda_long / 8.0);
    let minima = find_minima(cfg, Region::around(center, half), opts)?;
    let deepest = minima.first().ok_or_else(|| RffError::Numerical("no minimum near the site centre".into()))?.value;
    let mut global: Vec<LocalMinimum> =
        minima.iter().filter(|m| m.value - deepest <= 1e-9 * deepest.abs()).cloned().collect();
    global.sort_by(|a, b| dist(a.position, center).total_cmp(&dist(b.position, center)));
    if global.len() < 3 {
        return Err(RffError::Numerical(format!("found {} global minima near the site centre, expected 3", global.len())));
    }
    let mut sites: [Point; 3] = [global[0].position, global[1].position, global[2].position];
    sites.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
    let sides = [dist(sites[0], sites[1]), dist(sites[1], sites[2]), dist(sites[2], sites[0])];
    let centroid = [(sites[0][0] + sites[1][0] + sites[2][0]) / 3.0, (sites[0][1] + sites[1][1] + sites[2][1]) / 3.0];
    Ok(Trio { sites, value: deepest, sides, centroid })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGeometry {
    pub trio: Trio,
    pub neighbour: Trio,
    /// Mean side of the trio triangle.
    pub intra_distance: f64,
    /// Distance between the centroids of neighbouring trios.
    pub inter_distance: f64,
    /// Global minimum of the potential.
    pub v_min: f64,
}

pub fn lattice_geometry(cfg: &LatticeConfig, opts: &MinimizerOptions) -> Result<LatticeGeometry> {
    let trio = site_trio(cfg, 0, 0, opts)?;
    let neighbour = site_trio(cfg, 1, 0, opts)?;
    Ok(LatticeGeometry {
        intra_distance: trio.mean_side(),
        inter_distance: dist(trio.centroid, neighbour.centroid),
        v_min: trio.value.min(neighbour.value),
        trio,
        neighbour,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicFit {
    pub omega_trap: f64,
    pub width: f64,
    /// Hessian eigenvalues in J/m².
    pub curvatures: [f64; 2],
    /// |κ1 − κ2| / mean.
    pub anisotropy: f64,
}

/// Central-difference Hessian of the potential.
pub fn numerical_hessian(cfg: &LatticeConfig, p: Point, step: f64) -> [[f64; 2]; 2] {
    let v = |dx: f64, dy: f64| potential(cfg, p[0] + dx, p[1] + dy);
    let h = step;
    let xx = (v(h, 0.0) - 2.0 * v(0.0, 0.0) + v(-h, 0.0)) / (h * h);
    let yy = (v(0.0, h) - 2.0 * v(0.0, 0.0) + v(0.0, -h)) / (h * h);
    let xy = (v(h, h) - v(h, -h) - v(-h, h) + v(-h, -h)) / (4.0 * h * h);
    [[xx, xy], [xy, yy]]
}

/// w = √(ħ/(2Mω)).
pub fn width_from_trap(omega_trap: f64, mass: f64) -> f64 {
    (CONSTANTS.hbar / (2.0 * mass * omega_trap)).sqrt()
}

/// ω = ħ/(2Mw²).
pub fn trap_from_width(width: f64, mass: f64) -> f64 {
    CONSTANTS.hbar / (2.0 * mass * width * width)
}

/// Isotropic quadratic fit at `minimum`, with `physical_scale` joules per
/// potential unit.
pub fn harmonic_fit(cfg: &LatticeConfig, minimum: Point, physical_scale: f64) -> Result<HarmonicFit> {
    cfg.validate()?;
    if !(physical_scale > 0.0 && physical_scale.is_finite()) {
        return param(format!("physical_scale must be positive, got {physical_scale}"));
    }
    let hess = numerical_hessian(cfg, minimum, cfg.lambda_short * 1e-4);
    let eig = sym_eig2(hess);
    if !(eig[0] > 0.0) {
        return Err(RffError::NotAMinimum(format!(
            "Hessian eigenvalues ({:.3e}, {:.3e}) at ({:.4e}, {:.4e}) m",
            eig[0], eig[1], minimum[0], minimum[1]
        )));
    }
    let curvatures = [eig[0] * physical_scale, eig[1] * physical_scale];
    let mean = 0.5 * (curvatures[0] + curvatures[1]);
    let omega_trap = (mean / cfg.atom_mass).sqrt();
    Ok(HarmonicFit {
        omega_trap,
        width: width_from_trap(omega_trap, cfg.atom_mass),
        curvatures,
        anisotropy: (curvatures[1] - curvatures[0]) / mean,
    })
}

/// Joules per potential unit that make the deepest well `depth` below the
/// dark (zero-intensity) level.
pub fn scale_for_depth(depth: f64, v_min: f64) -> Result<f64> {
    if !(depth > 0.0) || !(v_min < 0.0) {
        return param("depth must be positive and the potential minimum negative");
    }
    Ok(depth / v_min.abs())
}

/// Row-major grid of `resolution²` samples over `region`, V divided by
/// |v_min|.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// values[j][i] at (xs[i], ys[j]).
    pub values: Vec<Vec<f64>>,
}

impl ContourGrid {
    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("x_m,y_m,V_norm\n");
        for (j, row) in self.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                out.push_str(&format!("{:.9e},{:.9e},{:.12e}\n", self.xs[i], self.ys[j], v));
            }
        }
        out
    }
}

pub fn contour_grid(cfg: &LatticeConfig, region: Region, resolution: usize, v_min: f64) -> Result<ContourGrid> {
    cfg.validate()?;
    if resolution < 32 {
        return param(format!("resolution must be at least 32 per axis, got {resolution}"));
    }
    if !(v_min < 0.0) {
        return param("normalization needs a negative minimum");
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution).map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64).collect()
    };
    let xs = axis(region.x);
    let ys = axis(region.y);
    let values = ys
        .par_iter()
        .map(|&y| xs.iter().map(|&x| potential(cfg, x, y) / v_min.abs()).collect())
        .collect();
    Ok(ContourGrid { xs, ys, values })
}

/// Samples of V/|v_min| along the segment from `from` to `to`, indexed by
/// arc length from the segment midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
}

impl Cut {
    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("s_m,V_norm\n");
        for (s, v) in self.s.iter().zip(&self.values) {
            out.push_str(&format!("{s:.9e},{v:.12e}\n"));
        }
        out
    }
}

pub fn line_cut(cfg: &LatticeConfig, from: Point, to: Point, samples: usize, v_min: f64) -> Result<Cut> {
    if samples < 3 {
        return param("a cut needs at least three samples");
    }
    let len = dist(from, to);
    let mut s = Vec::with_capacity(samples);
    let mut values = Vec::with_capacity(samples);
    for i in 0..samples {
        let u = i as f64 / (samples - 1) as f64;
        let p = [from[0] + u * (to[0] - from[0]), from[1] + u * (to[1] - from[1])];
        s.push((u - 0.5) * len);
        values.push(potential(cfg, p[0], p[1]) / v_min.abs());
    }
    Ok(Cut { s, values })
}

/// Stationary point of saddle type between two wells, by plain Newton
/// from their midpoint.
pub fn find_saddle(cfg: &LatticeConfig, a: Point, b: Point) -> Result<Point> {
    let unit = cfg.lambda_short / depth_scale(cfg);
    let mut p = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    for _ in 0..100 {
        let (_, g, h) = potential_derivs(cfg, p);
        if g[0].hypot(g[1]) * unit < 1e-12 {
            if sym_eig2(h)[0] < 0.0 && sym_eig2(h)[1] > 0.0 {
                return Ok(p);
            }
            return Err(RffError::Numerical("stationary point between the wells is not a saddle".into()));
        }
        let d = solve2(h, [-g[0], -g[1]]).ok_or_else(|| RffError::Numerical("singular Hessian in saddle search".into()))?;
        p = [p[0] + d[0], p[1] + d[1]];
    }
    Err(RffError::Numerical("saddle search did not converge".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrioCuts {
    /// Through wells a and b, extended by half a side beyond each.
    pub along: Cut,
    /// Through the saddle, perpendicular to the first cut.
    pub across: Cut,
    pub saddle: Point,
}

pub fn trio_cuts(cfg: &LatticeConfig, trio: &Trio, samples: usize, v_min: f64) -> Result<TrioCuts> {
    let (a, b) = (trio.sites[0], trio.sites[1]);
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let d = [b[0] - a[0], b[1] - a[1]];
    let saddle = find_saddle(cfg, a, b)?;
    let along = line_cut(cfg, [mid[0] - d[0], mid[1] - d[1]], [mid[0] + d[0], mid[1] + d[1]], samples, v_min)?;
    let across = line_cut(cfg, [saddle[0] + d[1], saddle[1] - d[0]], [saddle[0] - d[1], saddle[1] + d[0]], samples, v_min)?;
    Ok(TrioCuts { along, across, saddle })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate_about(p: Point, c: Point, angle: f64) -> Point {
        let (s, co) = angle.sin_cos();
        let d = [p[0] - c[0], p[1] - c[1]];
        [c[0] + co * d[0] - s * d[1], c[1] + s * d[0] + co * d[1]]
    }

    #[test]
    fn periodic_and_threefold() {
        let cfg = LatticeConfig::default();
        let [a1, a2] = lattice_vectors(&cfg);
        assert!((a1[0].hypot(a1[1]) - 2.0 * cfg.lambda_long / 3.0).abs() < 1e-15);
        for &p in &[[1.1e-7, 3.3e-7], [-2.0e-6, 4.1e-6], [5.5e-7, -9.0e-8]] {
            let v = potential(&cfg, p[0], p[1]);
            for a in [a1, a2] {
                assert!((potential(&cfg, p[0] + a[0], p[1] + a[1]) - v).abs() < 1e-12);
            }
            let q = rotate_about(p, site_center(&cfg, 0, 0), 2.0 * PI / 3.0);
            assert!((potential(&cfg, q[0], q[1]) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let cfg = LatticeConfig::default();
        let p = [2.3e-7, -1.7e-7];
        let h = 1e-11;
        let (_, g, hs) = potential_derivs(&cfg, p);
        let gx = (potential(&cfg, p[0] + h, p[1]) - potential(&cfg, p[0] - h, p[1])) / (2.0 * h);
        let gy = (potential(&cfg, p[0], p[1] + h) - potential(&cfg, p[0], p[1] - h)) / (2.0 * h);
        assert!((gx - g[0]).abs() < 1e-5 * g[0].abs().max(1e6));
        assert!((gy - g[1]).abs() < 1e-5 * g[1].abs().max(1e6));
        let fd = numerical_hessian(&cfg, p, cfg.lambda_short * 1e-4);
        for a in 0..2 {
            for b in 0..2 {
                assert!((fd[a][b] - hs[a][b]).abs() < 1e-6 * hs[0][0].abs().max(hs[1][1].abs()));
            }
        }
    }

    #[test]
    fn default_trio() {
        let cfg = LatticeConfig::default();
        let geo = lattice_geometry(&cfg, &MinimizerOptions::default()).unwrap();
        assert!(geo.trio.spread() < 1e-6, "{}", geo.trio.spread());
        assert!((geo.inter_distance - 2.0 * cfg.lambda_long / 3.0).abs() < 1e-6 * geo.inter_distance);
        // pure short pattern would put the wells 2λ'/3 apart; the long
        // pattern pulls them towards the site centre
        assert!(geo.intra_distance < 2.0 * cfg.lambda_short / 3.0);
        assert!(geo.intra_distance > 0.5 * cfg.lambda_short);
        for s in geo.trio.sites {
            let (_, g, _) = potential_derivs(&cfg, s);
            assert!(g[0].hypot(g[1]) * cfg.lambda_short / geo.v_min.abs() < 1e-10);
        }
    }

    #[test]
    fn fit_scaling_and_width_relation() {
        let cfg = LatticeConfig::default();
        let trio = site_trio(&cfg, 0, 0, &MinimizerOptions::default()).unwrap();
        let scale = scale_for_depth(1.1e-27, trio.value).unwrap();
        let one = harmonic_fit(&cfg, trio.sites[0], scale).unwrap();
        let two = harmonic_fit(&cfg, trio.sites[0], 2.0 * scale).unwrap();
        assert!((two.omega_trap / one.omega_trap - 2f64.sqrt()).abs() < 1e-9);
        assert!(one.anisotropy < 0.05, "{}", one.anisotropy);
        let lhs = one.width.powi(2) * one.omega_trap;
        assert!((lhs - CONSTANTS.hbar / (2.0 * cfg.atom_mass)).abs() < 1e-12 * lhs);
        let w = width_from_trap(2.0 * PI * 0.3e6, CONSTANTS.atom_mass);
        assert!((w - 75e-9).abs() < 0.5 * 75e-9, "{w}");
        assert!(matches!(harmonic_fit(&cfg, site_center(&cfg, 0, 0), scale), Err(RffError::NotAMinimum(_))));
    }

    #[test]
    fn single_set_gives_one_well_per_cell() {
        let cfg = LatticeConfig { intensity_ratio: 0.0, phases_short: [0.0; 3], ..LatticeConfig::default() };
        let cell = 2.0 * cfg.lambda_short / 3.0;
        let minima = find_minima(&cfg, Region::around([0.0, 0.0], 0.5 * cell), &MinimizerOptions::default()).unwrap();
        let deepest = minima[0].value;
        let global: Vec<_> = minima.iter().filter(|m| (m.value - deepest).abs() < 1e-9 * deepest.abs()).collect();
        assert_eq!(global.len(), 1);
        assert!(global[0].position[0].hypot(global[0].position[1]) < 1e-12);
        assert!((deepest + 9.0).abs() < 1e-12);
    }

    #[test]
    fn grid_and_cuts() {
        let cfg = LatticeConfig::default();
        let trio = site_trio(&cfg, 0, 0, &MinimizerOptions::default()).unwrap();
        let region = Region::around([0.0, 0.0], 1e-6);
        let grid = contour_grid(&cfg, region, 40, trio.value).unwrap();
        assert_eq!(grid.values.len(), 40);
        assert_eq!(grid.values[0].len(), 40);
        assert!((grid.values[7][13] - potential(&cfg, grid.xs[13], grid.ys[7]) / trio.value.abs()).abs() < 1e-15);
        assert!(grid.values.iter().flatten().all(|&v| v >= -1.0 - 1e-12));
        assert!(contour_grid(&cfg, region, 31, trio.value).is_err());
        let cuts = trio_cuts(&cfg, &trio, 201, trio.value).unwrap();
        // double well along the pair with a barrier at the midpoint
        let along = &cuts.along.values;
        assert!((along[50] + 1.0).abs() < 1e-6 && (along[150] + 1.0).abs() < 1e-6);
        let top = along[50..=150].iter().cloned().fold(f64::MIN, f64::max);
        assert!((top - along[100]).abs() < 1e-12 && top > -1.0 + 1e-3);
        // the saddle is the lowest point of the transverse cut near its centre
        let across = &cuts.across.values;
        assert!(across[100] <= across[99] && across[100] <= across[101]);
        let s = potential(&cfg, cuts.saddle[0], cuts.saddle[1]) / trio.value.abs();
        assert!((across[100] - s).abs() < 1e-12 && s <= top);
    }
}
