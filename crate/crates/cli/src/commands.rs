use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rff::evolution::{
    self, first_crossing, fidelity_bound, fidelity_imperfect, four_atom, persistence, trajectory, ExperimentResult,
};
use rff::geometry;
use rff::hamiltonians;
use rff::lattice::{self, LatticeConfig, MinimizerOptions, Region};
use rff::noise::NoiseParams;
use rff::validate;
use rff::RffError;

use crate::config::Config;
use crate::manifest::RunManifest;
use crate::{CliError, Fault, Suite};

pub struct Context {
    pub cfg: Config,
    pub out: PathBuf,
}

impl Context {
    fn manifest(&self, sub: &str, prefixes: &[&str], seeded: bool) -> RunManifest {
        RunManifest {
            subcommand: sub.into(),
            config: self.cfg.source.clone(),
            seed: seeded.then(|| self.cfg.num("run.seed") as u64),
            params: self.cfg.echo(prefixes),
        }
    }

    fn write(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        std::fs::write(&path, content)?;
        Ok(path)
    }

    fn seed(&self) -> Result<u64, CliError> {
        Ok(self.cfg.count("run.seed")? as u64)
    }
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {value}");
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn noise_params(cfg: &Config) -> NoiseParams {
    NoiseParams { b: cfg.num("noise.b_t"), g: cfg.num("noise.g_t_per_m"), gamma: cfg.num("noise.gamma_hz") }
}

pub fn constants(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let noise = noise_params(cfg);
    let a = cfg.num("trio.side_m");
    let k = hamiltonians::derived_constants(&noise, a, cfg.num("bias.field_t"))?;
    let mut s = String::new();
    kv(&mut s, "omega_rad_per_s", format!("{:.6e}", k.omega));
    kv(&mut s, "omega_over_2pi_hz", format!("{:.6e}", k.omega / (2.0 * PI)));
    kv(&mut s, "omega0_rad_per_s", format!("{:.6e}", k.omega0));
    kv(&mut s, "omega0_over_2pi_hz", format!("{:.6e}", k.omega0 / (2.0 * PI)));
    kv(&mut s, "tau_s", format!("{:.6e}", k.tau));
    kv(&mut s, "tau_prime_s", format!("{:.6e}", k.tau_prime));
    kv(&mut s, "tau1_s", format!("{:.6e}", k.tau1));
    kv(&mut s, "omega_tau", format!("{:.6e}", k.omega_tau));
    kv(&mut s, "tau_years", format!("{:.3e}", k.tau / (365.25 * 86400.0)));
    if let Some(w) = noise.gradient_warning(a) {
        kv(&mut s, "warning", w);
    }
    for w in hamiltonians::validate_regime(k.omega0, k.omega) {
        kv(&mut s, "warning", w);
    }
    let header = ctx.manifest("constants", &["trio.", "bias.", "noise."], false).header();
    print!("{s}");
    announce(&ctx.write("constants.txt", &(header + &s))?);
    Ok(())
}

/// Largest |ensemble − closed form| / stderr, with a round-off floor on
/// the standard error.
fn max_z(r: &ExperimentResult, obs: &str) -> f64 {
    let (m, e, c) = (r.get(obs), r.get(&format!("{obs}_err")), r.get(&format!("{obs}_closed")));
    let (Some(m), Some(e), Some(c)) = (m, e, c) else { return f64::NAN };
    m.iter().zip(e).zip(c).map(|((m, e), c)| (m - c).abs() / (e + 1e-9)).fold(0.0, f64::max)
}

pub fn fig4(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = trajectory::RescaledTrio {
        gamma_tau: cfg.num("fig4.gamma_tau"),
        omega_over_gamma: cfg.num("fig4.omega_over_gamma"),
        omega0_over_gamma: cfg.num("fig4.omega0_over_gamma"),
        dt_omega0: cfg.num("fig4.dt_omega0"),
    };
    let n = cfg.count("fig4.trajectories")?;
    let seed = ctx.seed()?;
    let r = trajectory::fig4_experiment(&p, n, seed, cfg.flag("fig4.include_no_dd"), trajectory::StepMethod::Split)?;
    let header = ctx.manifest("fig4", &["fig4."], true).header();
    let path = ctx.write("fig4.csv", &(header + &r.to_csv()))?;
    if n > 1 {
        for obs in ["P", "S1", "S3"] {
            println!("max |{obs} − closed form| / stderr = {:.3}", max_z(&r, obs));
        }
    }
    if let Some(pl) = r.get("P").and_then(|v| v.last()) {
        println!("final P = {pl:.5} (asymptote 2/3)");
    }
    announce(&path);
    Ok(())
}

pub fn fig5(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let ratio = cfg.num("fig5.omega2_over_omega1");
    let sig = cfg.num("fig5.sigma1_phi0");
    let s0s = cfg.list("fig5.s0").to_vec();
    let points = cfg.count("fig5.points")?;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CliError::Config(format!("fig5.omega2_over_omega1 must lie in (0, 1), got {ratio}")));
    }
    if !(-1.0..=1.0).contains(&sig) || s0s.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(CliError::Config("fig5.sigma1_phi0 must lie in [−1, 1] and fig5.s0 in [0, 1]".into()));
    }
    if points < 2 {
        return Err(CliError::Config("fig5.points must be at least 2".into()));
    }
    let (o1, o2) = (1.0, ratio);
    let period = 2.0 * PI / o1;
    let header = ctx.manifest("fig5", &["fig5."], false).header();
    let windows = [("top", 45.0 * period), ("inset", 150.0 * period), ("bottom", 2.0 * PI / o2)];
    for (name, t_end) in windows {
        let grid = evolution::linspace(t_end, points);
        let mut r = ExperimentResult::new("t_periods", grid.iter().map(|t| t / period).collect());
        let fs: Vec<_> = grid.iter().map(|&t| evolution::f_of_t(o1, o2, t)).collect();
        let ps: Vec<f64> = fs.iter().map(|&f| persistence(f, sig)).collect();
        r.push("P", ps.clone());
        r.push("F_bound", fs.iter().map(|&f| fidelity_bound(f)).collect());
        for &s0 in &s0s {
            let col = fs.iter().zip(&ps).map(|(&f, &p)| fidelity_imperfect(f, p, sig, s0)).collect();
            r.push(&format!("F_s{s0:.2}"), col);
        }
        r.meta("window", name);
        r.check_ranges()?;
        announce(&ctx.write(&format!("fig5_{name}.csv"), &(header.clone() + &r.to_csv()))?);
    }
    let bound = |t: f64| fidelity_bound(evolution::f_of_t(o1, o2, t));
    // 40 samples per fast period over half a slow period
    let scan = (20.0 / ratio).ceil() as usize;
    for thr in [0.9999, 0.999] {
        match first_crossing(bound, thr, 0.5 * 2.0 * PI / o2, scan) {
            Some(t) => println!("bound stays >= {thr} for {:.2} fast periods", t / period),
            None => println!("bound never drops below {thr}"),
        }
    }
    Ok(())
}

pub fn fig7(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let t_max = cfg.num("fig7.t_max_periods");
    let points = cfg.count("fig7.points")?;
    if !(t_max > 0.0) || points < 2 {
        return Err(CliError::Config("fig7.t_max_periods must be positive and fig7.points at least 2".into()));
    }
    let h = four_atom::FourAtomGeometry::Square.hamiltonian(1.0)?;
    let grid = evolution::linspace(t_max, points);
    let mut r = ExperimentResult::new("t_periods", grid.clone());
    let fs: Vec<_> = grid.iter().map(|&x| four_atom::sector_f(&h, 2.0 * PI * x)).collect();
    r.push("F_bound", fs.iter().map(|&f| fidelity_bound(f)).collect());
    r.push("abs_f2", fs.iter().map(|f| f.norm_sqr()).collect());
    let (o1, o2) = four_atom::sector_frequencies(&h)?;
    r.meta("omega1_over_omega", format!("{o1:.6}"));
    r.meta("omega2_over_omega", format!("{o2:.6}"));
    let header = ctx.manifest("fig7", &["fig7."], false).header();
    let path = ctx.write("fig7.csv", &(header + &r.to_csv()))?;
    println!("omega1 = {o1:.6} omega, omega2 = {o2:.6} omega");
    let bound = |x: f64| fidelity_bound(four_atom::sector_f(&h, 2.0 * PI * x));
    for thr in [0.9999, 0.999] {
        if let Some(x) = first_crossing(bound, thr, 0.25, 500) {
            println!("bound stays >= {thr} until omega t = 2pi x {x:.4}");
        }
    }
    println!("worst-case persistence at omega t = 2pi x 0.087: {:.4}", four_atom::sector_f(&h, 2.0 * PI * 0.087).norm_sqr());
    announce(&path);
    Ok(())
}

fn lattice_config(cfg: &Config) -> Result<LatticeConfig, CliError> {
    let lc = LatticeConfig {
        lambda_long: cfg.num("lattice.lambda_long_m"),
        lambda_short: cfg.num("lattice.lambda_short_m"),
        phases_long: cfg.list_of::<3>("lattice.phases_long")?,
        phases_short: cfg.list_of::<3>("lattice.phases_short")?,
        intensity_ratio: cfg.num("lattice.intensity_ratio"),
        short_rotation: cfg.num("lattice.short_rotation_rad"),
        long_rotation: 0.0,
        atom_mass: cfg.num("lattice.atom_mass_kg"),
    };
    lc.validate()?;
    Ok(lc)
}

pub fn fig9(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let lc = lattice_config(cfg)?;
    let resolution = cfg.count("fig9.resolution")?;
    let samples = cfg.count("fig9.cut_samples")?;
    let geo = lattice::lattice_geometry(&lc, &MinimizerOptions::default())?;
    let center = lattice::site_center(&lc, 0, 0);
    let grid = lattice::contour_grid(&lc, Region::around(center, cfg.num("fig9.half_width_m")), resolution, geo.v_min)?;
    let cuts = lattice::trio_cuts(&lc, &geo.trio, samples, geo.v_min)?;
    let scale = lattice::scale_for_depth(cfg.num("fig9.trap_depth_j"), geo.v_min)?;
    let fit = lattice::harmonic_fit(&lc, geo.trio.sites[0], scale)?;
    let saddle_v = lattice::potential(&lc, cuts.saddle[0], cuts.saddle[1]) / geo.v_min.abs();

    let mut s = String::new();
    kv(&mut s, "intra_trio_m", format!("{:.6e}", geo.intra_distance));
    kv(&mut s, "intra_trio_vs_883nm", format!("{:+.3}%", 100.0 * (geo.intra_distance / 883e-9 - 1.0)));
    kv(&mut s, "short_pattern_spacing_m", format!("{:.6e}", 2.0 * lc.lambda_short / 3.0));
    kv(&mut s, "inter_trio_m", format!("{:.6e}", geo.inter_distance));
    kv(&mut s, "inter_trio_vs_7.1um", format!("{:+.3}%", 100.0 * (geo.inter_distance / 7.1e-6 - 1.0)));
    kv(&mut s, "trio_side_spread", format!("{:.3e}", geo.trio.spread()));
    for (i, p) in geo.trio.sites.iter().enumerate() {
        kv(&mut s, &format!("well_{}_m", i + 1), format!("{:.6e}, {:.6e}", p[0], p[1]));
    }
    kv(&mut s, "saddle_m", format!("{:.6e}, {:.6e}", cuts.saddle[0], cuts.saddle[1]));
    kv(&mut s, "saddle_v_norm", format!("{saddle_v:.6}"));
    kv(&mut s, "depth_scale_j_per_unit", format!("{scale:.6e}"));
    kv(&mut s, "omega_trap_fit_rad_per_s", format!("{:.6e}", fit.omega_trap));
    kv(&mut s, "omega_trap_fit_over_2pi_hz", format!("{:.6e}", fit.omega_trap / (2.0 * PI)));
    kv(&mut s, "width_fit_m", format!("{:.6e}", fit.width));
    kv(&mut s, "curvature_anisotropy", format!("{:.3e}", fit.anisotropy));
    // the three trap frequencies quoted for the same trap, side by side
    let quoted_low = 2.0 * PI * 0.3e6;
    let quoted_high = 1.8e6;
    let from_width = lattice::trap_from_width(75e-9, lc.atom_mass);
    kv(&mut s, "omega_trap_quoted_low_rad_per_s", format!("{quoted_low:.6e}"));
    kv(&mut s, "omega_trap_quoted_high_rad_per_s", format!("{quoted_high:.6e}"));
    kv(&mut s, "omega_trap_from_75nm_width_rad_per_s", format!("{from_width:.6e}"));
    kv(&mut s, "width_from_quoted_low_m", format!("{:.6e}", lattice::width_from_trap(quoted_low, lc.atom_mass)));
    let spread = [quoted_low, quoted_high, from_width];
    let (lo, hi) = (spread.iter().cloned().fold(f64::MAX, f64::min), spread.iter().cloned().fold(f64::MIN, f64::max));
    if hi / lo > 1.1 {
        kv(&mut s, "warning", format!("quoted trap frequencies disagree by a factor {:.2}", hi / lo));
    }

    let header = ctx.manifest("fig9", &["lattice.", "fig9."], false).header();
    print!("{s}");
    announce(&ctx.write("fig9_report.txt", &(header.clone() + &s))?);
    announce(&ctx.write("fig9_grid.csv", &grid.to_csv(&header))?);
    announce(&ctx.write("fig9_cut_ab.csv", &cuts.along.to_csv(&header))?);
    announce(&ctx.write("fig9_cut_saddle.csv", &cuts.across.to_csv(&header))?);
    Ok(())
}

pub fn geometry_report(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let flat = cfg.list_of::<9>("geometry.sites_m")?;
    let sites = [[flat[0], flat[1], flat[2]], [flat[3], flat[4], flat[5]], [flat[6], flat[7], flat[8]]];
    let e = cfg.list_of::<3>("geometry.bias_direction")?;
    let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    if !(n > 0.0) {
        return Err(CliError::Config("geometry.bias_direction must be nonzero".into()));
    }
    let e_z = [e[0] / n, e[1] / n, e[2] / n];
    let g = geometry::analyze(&sites, &e_z)?;
    let omega = hamiltonians::omega_dd(g.a)?;
    let (o1, o2) = geometry::effective_frequencies(&g, omega);

    let mut s = String::new();
    kv(&mut s, "a_m", format!("{:.9e}", g.a));
    kv(&mut s, "a_kl_m", format!("{:.9e}, {:.9e}, {:.9e}", g.a_kl[0], g.a_kl[1], g.a_kl[2]));
    kv(&mut s, "alpha_kl", format!("{:.6e}, {:.6e}, {:.6e}", g.alpha_kl[0], g.alpha_kl[1], g.alpha_kl[2]));
    kv(&mut s, "ez_dot_ekl", format!("{:.6e}, {:.6e}, {:.6e}", g.ez_dot_ekl[0], g.ez_dot_ekl[1], g.ez_dot_ekl[2]));
    kv(&mut s, "eps_kl", format!("{:.6e}, {:.6e}, {:.6e}", g.eps_kl[0], g.eps_kl[1], g.eps_kl[2]));
    kv(&mut s, "eps", format!("{:.6e}", g.eps));
    kv(&mut s, "kappa", format!("{:.6e} {:+.6e}i", g.kappa.re, g.kappa.im));
    kv(&mut s, "abs_kappa", format!("{:.6e}", g.kappa.norm()));
    kv(&mut s, "phi_rad", format!("{:.6}", g.phi));
    kv(&mut s, "closure_sum", format!("{:.3e}", g.closure_sum()));
    kv(&mut s, "omega_rad_per_s", format!("{omega:.6e}"));
    kv(&mut s, "omega1_rad_per_s", format!("{o1:.6e}"));
    kv(&mut s, "omega2_rad_per_s", format!("{o2:.6e}"));
    kv(&mut s, "omega2_over_omega1", format!("{:.6e}", o2 / o1));
    if o2 > 0.0 && o2 / o1 > 1e-9 {
        let period = 2.0 * PI / o1;
        let bound = |t: f64| fidelity_bound(evolution::f_of_t(o1, o2, t));
        let scan = (20.0 * o1 / o2).ceil() as usize;
        for thr in [0.9999, 0.999] {
            if let Some(t) = first_crossing(bound, thr, PI / o2, scan) {
                kv(&mut s, &format!("fidelity_bound_{thr}_until_s"), format!("{t:.6e}"));
                kv(&mut s, &format!("fidelity_bound_{thr}_fast_periods"), format!("{:.3}", t / period));
            }
        }
    } else if o2 > 0.0 {
        kv(&mut s, "fidelity_windows", "not scanned: slow frequency below 1e-9 of the fast one");
    }
    match geometry::compensate_tilt(&g.alpha_kl) {
        Ok(t) => kv(&mut s, "compensating_ez_dot_ekl_sq", format!("{:.6e}, {:.6e}, {:.6e}", t[0], t[1], t[2])),
        Err(RffError::InfeasibleCompensation(m)) => kv(&mut s, "compensation", format!("infeasible: {m}")),
        Err(e) => return Err(e.into()),
    }
    let header = ctx.manifest("geometry-report", &["geometry."], false).header();
    print!("{s}");
    announce(&ctx.write("geometry_report.txt", &(header + &s))?);
    Ok(())
}

pub fn validate(ctx: &Context, suite: Suite, fault: Option<Fault>) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let mut reports = Vec::new();
    if matches!(suite, Suite::Algebra | Suite::All) {
        let mut inputs = validate::AlgebraInputs::standard();
        if fault == Some(Fault::Sigma3Sign) {
            inputs.sigma[2] = -inputs.sigma[2].clone();
        }
        reports.push(validate::algebra_suite(&inputs));
    }
    if matches!(suite, Suite::Noise | Suite::All) {
        let opts = validate::NoiseSuiteOptions {
            n_steps: cfg.count("validate.noise_steps")?,
            dt: cfg.num("validate.noise_dt"),
            seed: ctx.seed()?,
            ..Default::default()
        };
        match validate::noise_suite(&opts) {
            Ok(r) => reports.push(r),
            Err(RffError::InsufficientData(m)) => return Err(CliError::Validation(format!("noise suite: insufficient data: {m}"))),
            Err(e) => return Err(e.into()),
        }
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        reports.push(validate::oracle_suite(cfg.count("validate.oracle_seed")? as u64)?);
    }
    let text: String = reports.iter().map(|r| r.render()).collect();
    print!("{text}");
    let header = ctx.manifest("validate", &["validate."], true).header();
    announce(&ctx.write("validate.txt", &(header + &text))?);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("suites failed: {}", failed.join(", "))))
    }
}
