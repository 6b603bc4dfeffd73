//! Four atoms in the two-dimensional j = 0 sector: square and pyramid
//! arrangements, evaluated by restricting the full 16-dimensional
//! propagator to the sector.

use crate::error::{param, Result, RffError};
use crate::hamiltonians;
use crate::linalg::{self, c, CMat, CVec, C64};
use crate::spin::{self, BlochVector, DensityMatrix};

use super::{fidelity_bound, fidelity_imperfect, fidelity_qubit, persistence, ExperimentResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FourAtomGeometry {
    Square,
    /// Regular triangle of side 1 plus an apex at height `h_over_a` above
    /// its centre.
    Pyramid { h_over_a: f64 },
}

impl FourAtomGeometry {
    /// `square`, or `pyramid` at the height that balances all six couplings.
    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "square" => Ok(Self::Square),
            "pyramid" => Ok(Self::Pyramid { h_over_a: hamiltonians::pyramid_balance_height()? }),
            other => param(format!("unsupported four-atom geometry '{other}' (expected square or pyramid)")),
        }
    }

    /// Secular dipole-dipole Hamiltonian in units where the edge coupling
    /// is Ω.
    pub fn hamiltonian(&self, omega: f64) -> Result<CMat> {
        match *self {
            Self::Square => Ok(hamiltonians::h_dd_four_square(omega)),
            Self::Pyramid { h_over_a } => hamiltonians::h_dd_pyramid(omega, h_over_a),
        }
    }
}

/// Sector basis as the columns of a 16×2 matrix.
pub fn sector_basis() -> CMat {
    let s = spin::four_atom_sector();
    let mut b = CMat::zeros(16, 2);
    for (col, v) in s.basis.iter().enumerate() {
        b.set_column(col, v.amplitudes());
    }
    b
}

/// B† e^{−iHt} B.
pub fn sector_unitary(h: &CMat, t: f64) -> CMat {
    let b = sector_basis();
    b.adjoint() * linalg::expm_hermitian(h, t) * &b
}

/// f(t) = tr(B† e^{−iHt} B) − 1.
pub fn sector_f(h: &CMat, t: f64) -> C64 {
    sector_unitary(h, t).trace() - c(1.0, 0.0)
}

/// The sector state that couples out of the sector, as a 2-vector in the
/// sector basis; None when nothing leaks.
pub fn bright_state(h: &CMat) -> Option<CVec> {
    let b = sector_basis();
    let leak = (linalg::identity(16) - &b * b.adjoint()) * h * &b;
    let gram = leak.adjoint() * &leak;
    let (vals, vecs) = linalg::eigh(&gram);
    (vals[1] > 1e-20 * linalg::max_abs(h).powi(2).max(1e-300)).then(|| vecs.column(1).into_owned())
}

/// N = |bright⟩⟨bright| − |dark⟩⟨dark| on the sector, diag(1, −1) when
/// nothing leaks.
pub fn bright_dark_operator(h: &CMat) -> CMat {
    match bright_state(h) {
        Some(v) => {
            let p = &v * v.adjoint();
            &p * c(2.0, 0.0) - linalg::identity(2)
        }
        None => CMat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)])),
    }
}

/// (Ω1, Ω2) read off the spectral weights of the bright state: f(t) has
/// weight Ω1/(Ω1+Ω2) at energy Ω2 and Ω2/(Ω1+Ω2) at energy −Ω1.
pub fn sector_frequencies(h: &CMat) -> Result<(f64, f64)> {
    let bright = bright_state(h).ok_or_else(|| RffError::Numerical("no state leaves the sector".into()))?;
    let full = sector_basis() * bright;
    let (vals, vecs) = linalg::eigh(h);
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for (i, &e) in vals.iter().enumerate() {
        let w = vecs.column(i).dotc(&full).norm_sqr();
        match groups.last_mut() {
            Some((e0, w0)) if (e - *e0).abs() < 1e-9 * (1.0 + e.abs()) => *w0 += w,
            _ => groups.push((e, w)),
        }
    }
    groups.retain(|&(_, w)| w > 1e-10);
    if groups.len() != 2 {
        return Err(RffError::Numerical(format!("bright state spreads over {} levels, expected 2", groups.len())));
    }
    groups.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok((-groups[1].0, groups[0].0))
}

#[derive(Debug, Clone)]
pub struct FourAtomRun {
    pub result: ExperimentResult,
    pub f: Vec<C64>,
}

fn sector_bloch(m: &CMat) -> [f64; 3] {
    [2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, (m[(0, 0)] - m[(1, 1)]).re]
}

/// Sector-restricted evolution from `rho0` (supported on j = 0): numerical
/// persistence and fidelity next to their closed forms in terms of f(t).
pub fn four_atom_evolution(geometry: FourAtomGeometry, omega: f64, t_grid: &[f64], rho0: &DensityMatrix) -> Result<FourAtomRun> {
    if rho0.dim() != 16 {
        return param(format!("four-atom state must be 16-dimensional, got {}", rho0.dim()));
    }
    let sector = spin::four_atom_sector();
    let p0 = rho0.expect(&sector.projector);
    if (p0 - 1.0).abs() > 1e-9 {
        return Err(RffError::SectorDepleted(p0));
    }
    let h = geometry.hamiltonian(omega)?;
    let b = sector_basis();
    let n_op = bright_dark_operator(&h);
    let rs0 = b.adjoint() * rho0.matrix() * &b;
    let s0 = BlochVector::new(sector_bloch(&rs0))?;
    let n0 = linalg::expect(&n_op, &rs0);

    let mut f = Vec::with_capacity(t_grid.len());
    let mut cols: [Vec<f64>; 8] = Default::default();
    for &t in t_grid {
        let u = linalg::expm_hermitian(&h, t);
        let rho = &u * rho0.matrix() * u.adjoint();
        let p = linalg::expect(&sector.projector, &rho);
        let rs = b.adjoint() * &rho * &b / c(p, 0.0);
        let st = BlochVector::new(sector_bloch(&rs).map(|x| x.clamp(-1.0, 1.0)))
            .or_else(|_| BlochVector::new(sector_bloch(&rs).map(|x| x / (1.0 + 1e-12))))?;
        let ft = (b.adjoint() * &u * &b).trace() - c(1.0, 0.0);
        let pa = persistence(ft, n0);
        let vals = [
            ft.re,
            ft.im,
            ft.norm_sqr(),
            fidelity_bound(ft),
            p,
            fidelity_qubit(&st, &s0),
            pa,
            fidelity_imperfect(ft, pa, n0, s0.length()),
        ];
        for (col, v) in cols.iter_mut().zip(vals) {
            col.push(v);
        }
        f.push(ft);
    }
    let mut result = ExperimentResult::new("t", t_grid.to_vec());
    let names = ["f_re", "f_im", "abs_f2", "F_bound", "P", "F", "P_closed", "F_closed"];
    for (name, col) in names.iter().zip(cols) {
        result.push(name, col);
    }
    result.meta("omega", omega);
    result.meta("geometry", format!("{geometry:?}"));
    Ok(FourAtomRun { result, f })
}
