//! Many-spin operators, the j=1/2 encoding basis and the RFF Pauli operators.
//!
//! Computational basis: `|s1 s2 ... sN>` with site 1 as the most significant
//! bit and spin-up stored as bit 0, so `|↑↑↑>` is index 0 and `|↓↑↑>` is
//! index 4. Single-site conventions: `σz = diag(1, -1)`,
//! `σ- = |↓><↑|`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{param, Result, RffError};
use crate::linalg::{self, c, kron, CMat, CVec, C64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Primitive cube root of unity e^{2πi/3}.
pub fn q() -> C64 {
    C64::from_polar(1.0, 2.0 * PI / 3.0)
}

fn check_atoms(n_atoms: usize) -> Result<()> {
    if n_atoms == 3 || n_atoms == 4 {
        Ok(())
    } else {
        param(format!("n_atoms must be 3 or 4, got {n_atoms}"))
    }
}

pub fn pauli(axis: Axis) -> CMat {
    match axis {
        Axis::X => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        Axis::Y => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        Axis::Z => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    }
}

fn embed(single: &CMat, k: usize, n_atoms: usize) -> Result<CMat> {
    check_atoms(n_atoms)?;
    if k < 1 || k > n_atoms {
        return param(format!("site index {k} outside 1..={n_atoms}"));
    }
    let mut out = CMat::identity(1, 1);
    for site in 1..=n_atoms {
        let factor = if site == k { single.clone() } else { linalg::identity(2) };
        out = kron(&out, &factor);
    }
    Ok(out)
}

/// Pauli matrix of site `k` (1-based) embedded in the N-spin space.
pub fn pauli_site(k: usize, axis: Axis, n_atoms: usize) -> Result<CMat> {
    embed(&pauli(axis), k, n_atoms)
}

/// Single-site lowering operator (σx - iσy)/2.
pub fn lowering_site(k: usize, n_atoms: usize) -> Result<CMat> {
    let sm = CMat::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO]);
    embed(&sm, k, n_atoms)
}

/// σ_j · σ_k.
pub fn pair_dot(j: usize, k: usize, n_atoms: usize) -> Result<CMat> {
    let mut acc = linalg::zeros(1 << n_atoms);
    for ax in Axis::ALL {
        acc += pauli_site(j, ax, n_atoms)? * pauli_site(k, ax, n_atoms)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct TotalSpin {
    pub jx: CMat,
    pub jy: CMat,
    pub jz: CMat,
    pub jsq: CMat,
}

impl TotalSpin {
    pub fn component(&self, axis: Axis) -> &CMat {
        match axis {
            Axis::X => &self.jx,
            Axis::Y => &self.jy,
            Axis::Z => &self.jz,
        }
    }

    pub fn lowering(&self) -> CMat {
        &self.jx - &self.jy * I
    }
}

/// J = ½ Σ_k σ_k and J².
pub fn total_spin(n_atoms: usize) -> Result<TotalSpin> {
    check_atoms(n_atoms)?;
    let dim = 1 << n_atoms;
    let mut comps = [linalg::zeros(dim), linalg::zeros(dim), linalg::zeros(dim)];
    for (slot, ax) in comps.iter_mut().zip(Axis::ALL) {
        for k in 1..=n_atoms {
            *slot += pauli_site(k, ax, n_atoms)? * c(0.5, 0.0);
        }
    }
    let [jx, jy, jz] = comps;
    let jsq = &jx * &jx + &jy * &jy + &jz * &jz;
    Ok(TotalSpin { jx, jy, jz, jsq })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: CVec,
}

impl StateVector {
    pub fn new(amps: CVec) -> Result<Self> {
        let n = amps.norm();
        if (n - 1.0).abs() > 1e-12 {
            return param(format!("state vector norm {n} is not 1"));
        }
        Ok(Self { amps })
    }

    pub fn normalized(amps: CVec) -> Result<Self> {
        let n = amps.norm();
        if n == 0.0 || !n.is_finite() {
            return param("cannot normalize a zero or non-finite vector");
        }
        Ok(Self { amps: amps / c(n, 0.0) })
    }

    /// Computational basis state from a spin pattern, `true` meaning spin-down.
    pub fn product(down: &[bool]) -> Result<Self> {
        check_atoms(down.len())?;
        let mut v = CVec::zeros(1 << down.len());
        v[basis_index(down)] = ONE;
        Ok(Self { amps: v })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn projector(&self) -> CMat {
        linalg::outer(&self.amps, &self.amps)
    }
}

/// Index of a spin pattern (`true` = down) with site 1 most significant.
pub fn basis_index(down: &[bool]) -> usize {
    down.iter().fold(0, |acc, &d| (acc << 1) | d as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        Self::with_tolerance(mat, 1e-12)
    }

    /// Validates with a caller-chosen trace/Hermiticity tolerance; the
    /// eigenvalue floor stays at -1e-10.
    pub fn with_tolerance(mat: CMat, tol: f64) -> Result<Self> {
        if !mat.is_square() {
            return param("density matrix must be square");
        }
        let herm = linalg::hermiticity_defect(&mat);
        if herm > tol {
            return param(format!("density matrix not Hermitian (defect {herm:e})"));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return param(format!("density matrix trace {tr} is not 1"));
        }
        let herm_part = (&mat + mat.adjoint()) * c(0.5, 0.0);
        let min_eig = linalg::eigvalsh(&herm_part)[0];
        if min_eig < -1e-10 {
            return param(format!("density matrix has negative eigenvalue {min_eig:e}"));
        }
        Ok(Self { mat })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self { mat: psi.projector() }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: linalg::identity(dim) * c(1.0 / dim as f64, 0.0) }
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn purity(&self) -> f64 {
        linalg::expect(&self.mat, &self.mat)
    }

    pub fn expect(&self, op: &CMat) -> f64 {
        linalg::expect(op, &self.mat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    s: [f64; 3],
}

impl BlochVector {
    pub fn new(s: [f64; 3]) -> Result<Self> {
        let n = linalg::norm3(&s);
        if !(n <= 1.0 + 1e-10) {
            return param(format!("Bloch vector length {n} exceeds 1"));
        }
        Ok(Self { s })
    }

    pub fn zero() -> Self {
        Self { s: [0.0; 3] }
    }

    pub fn components(&self) -> [f64; 3] {
        self.s
    }

    pub fn length(&self) -> f64 {
        linalg::norm3(&self.s)
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        linalg::dot3(&self.s, &other.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinSector {
    Half,
    ThreeHalves,
}

/// Idler label of an encoding ket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Idler {
    Plus,
    Minus,
}

/// Index into the array returned by [`rff_basis`].
pub fn basis_slot(idler: Idler, lambda: usize) -> usize {
    match idler {
        Idler::Plus => lambda,
        Idler::Minus => 2 + lambda,
    }
}

/// |+,λ> = Q_λ|↑↑↑> and |−,λ> = J₋|+,λ>, ordered (+,0), (+,1), (−,0), (−,1).
pub fn rff_basis() -> [StateVector; 4] {
    let n = 3;
    let q = q();
    let up = StateVector::product(&[false, false, false]).expect("three sites");
    let mut q0 = linalg::zeros(8);
    let mut q1 = linalg::zeros(8);
    for k in 1..=3 {
        let sm = lowering_site(k, n).expect("valid site");
        q0 += &sm * q.powi(k as i32);
        q1 += &sm * q.powi(-(k as i32));
    }
    let norm = c(1.0 / 3f64.sqrt(), 0.0);
    let jm = total_spin(n).expect("three atoms").lowering();
    let p0 = &q0 * up.amplitudes() * norm;
    let p1 = &q1 * up.amplitudes() * norm;
    let m0 = &jm * &p0;
    let m1 = &jm * &p1;
    [p0, p1, m0, m1].map(|v| StateVector::new(v).expect("construction yields unit vectors"))
}

/// Projector onto the j = 1/2 or j = 3/2 sector from the J² polynomial.
pub fn projector_j(j: SpinSector) -> CMat {
    let jsq = total_spin(3).expect("three atoms").jsq;
    let id = linalg::identity(8);
    match j {
        SpinSector::Half => id * c(1.25, 0.0) - jsq * c(1.0 / 3.0, 0.0),
        SpinSector::ThreeHalves => jsq * c(1.0 / 3.0, 0.0) - id * c(0.25, 0.0),
    }
}

/// P_{1/2} = (3 − σ1·σ2 − σ2·σ3 − σ3·σ1)/6.
pub fn projector_half_pairwise() -> CMat {
    let dots = pair_dot(1, 2, 3).unwrap() + pair_dot(2, 3, 3).unwrap() + pair_dot(3, 1, 3).unwrap();
    (linalg::identity(8) * c(3.0, 0.0) - dots) * c(1.0 / 6.0, 0.0)
}

/// P_{1/2} as the sum of basis-ket projectors.
pub fn projector_half_outer() -> CMat {
    rff_basis().iter().fold(linalg::zeros(8), |acc, v| acc + v.projector())
}

/// Σ1 + iΣ2 = (σ1·σ2 + q²σ2·σ3 + qσ3·σ1)/3.
pub fn sigma_raising_pairwise() -> CMat {
    let q = q();
    (pair_dot(1, 2, 3).unwrap() + pair_dot(2, 3, 3).unwrap() * (q * q) + pair_dot(3, 1, 3).unwrap() * q)
        * c(1.0 / 3.0, 0.0)
}

/// Σ3 = σ1·(σ2 × σ3)/√12.
pub fn sigma3_triple() -> CMat {
    let mut acc = linalg::zeros(8);
    for (a, b, cc, sign) in [
        (Axis::X, Axis::Y, Axis::Z, 1.0),
        (Axis::Y, Axis::Z, Axis::X, 1.0),
        (Axis::Z, Axis::X, Axis::Y, 1.0),
        (Axis::X, Axis::Z, Axis::Y, -1.0),
        (Axis::Z, Axis::Y, Axis::X, -1.0),
        (Axis::Y, Axis::X, Axis::Z, -1.0),
    ] {
        let term = pauli_site(1, a, 3).unwrap() * pauli_site(2, b, 3).unwrap() * pauli_site(3, cc, 3).unwrap();
        acc += term * c(sign, 0.0);
    }
    acc * c(1.0 / 12f64.sqrt(), 0.0)
}

/// Σ_i (i = 1, 2, 3) from the pairwise and triple products.
pub fn sigma_rff(i: usize) -> Result<CMat> {
    match i {
        1 | 2 => {
            let a = sigma_raising_pairwise();
            let ad = a.adjoint();
            Ok(if i == 1 { (a + ad) * c(0.5, 0.0) } else { (a - ad) * c(0.0, -0.5) })
        }
        3 => Ok(sigma3_triple()),
        _ => param(format!("RFF Pauli index must be 1, 2 or 3, got {i}")),
    }
}

/// Σ_i from outer products of the encoding kets.
pub fn sigma_rff_outer(i: usize) -> Result<CMat> {
    let basis = rff_basis();
    let mut raise = linalg::zeros(8);
    let mut diag = linalg::zeros(8);
    for idler in [Idler::Plus, Idler::Minus] {
        let k0 = basis[basis_slot(idler, 0)].amplitudes();
        let k1 = basis[basis_slot(idler, 1)].amplitudes();
        raise += linalg::outer(k0, k1) * c(2.0, 0.0);
        diag += linalg::outer(k0, k0) - linalg::outer(k1, k1);
    }
    match i {
        1 => Ok((&raise + raise.adjoint()) * c(0.5, 0.0)),
        2 => Ok((&raise - raise.adjoint()) * c(0.0, -0.5)),
        3 => Ok(diag),
        _ => param(format!("RFF Pauli index must be 1, 2 or 3, got {i}")),
    }
}

/// The sector projector and the three RFF Pauli operators, bundled.
#[derive(Debug, Clone)]
pub struct RffOperators {
    pub p_half: CMat,
    pub sigma: [CMat; 3],
}

impl RffOperators {
    pub fn build() -> Self {
        Self {
            p_half: projector_j(SpinSector::Half),
            sigma: [sigma_rff(1).unwrap(), sigma_rff(2).unwrap(), sigma_rff(3).unwrap()],
        }
    }

    /// Shared instance, built once.
    pub fn shared() -> &'static RffOperators {
        static OPS: OnceLock<RffOperators> = OnceLock::new();
        OPS.get_or_init(Self::build)
    }
}

/// ρ = (P_{1/2} + Σ s_i Σ_i)/4 with the idler maximally mixed.
pub fn encode_rff(s: &BlochVector) -> DensityMatrix {
    let ops = RffOperators::shared();
    let mut rho = ops.p_half.clone();
    for (sig, &si) in ops.sigma.iter().zip(s.components().iter()) {
        rho += sig * c(si, 0.0);
    }
    DensityMatrix { mat: rho * c(0.25, 0.0) }
}

/// Signal Bloch vector s_i = ⟨Σ_i⟩/⟨P_{1/2}⟩ and the sector weight ⟨P_{1/2}⟩.
pub fn decode_rff(rho: &CMat) -> Result<(BlochVector, f64)> {
    let ops = RffOperators::shared();
    let p = linalg::expect(&ops.p_half, rho);
    if p < 1e-12 {
        return Err(RffError::SectorDepleted(p));
    }
    let s = [0, 1, 2].map(|i| linalg::expect(&ops.sigma[i], rho) / p);
    Ok((BlochVector { s }, p))
}

/// j = 0 sector of four spins.
#[derive(Debug, Clone)]
pub struct FourAtomSector {
    pub projector: CMat,
    /// Orthonormal basis: the normalized singlet product s12 s34 first, then
    /// the Gram–Schmidt remainder of s13 s24.
    pub basis: [StateVector; 2],
}

/// Singlet projector (1 − σ_j·σ_k)/4 on a pair of the four sites.
pub fn singlet_projector(j: usize, k: usize) -> Result<CMat> {
    let d = pair_dot(j, k, 4)?;
    Ok((linalg::identity(16) - d) * c(0.25, 0.0))
}

fn singlet_pair_state(pairs: [(usize, usize); 2]) -> CVec {
    let amp = 1.0 / 2f64.sqrt();
    CVec::from_fn(16, |idx, _| {
        let bit = |site: usize| (idx >> (4 - site)) & 1;
        let mut val = 1.0;
        for &(j, k) in &pairs {
            val *= match (bit(j), bit(k)) {
                (0, 1) => amp,
                (1, 0) => -amp,
                _ => 0.0,
            };
        }
        c(val, 0.0)
    })
}

pub fn four_atom_sector() -> FourAtomSector {
    let s = |j, k| singlet_projector(j, k).expect("valid pair");
    let projector =
        (s(1, 2) * s(3, 4) + s(1, 3) * s(2, 4) + s(1, 4) * s(2, 3)) * c(2.0 / 3.0, 0.0);
    let u = singlet_pair_state([(1, 2), (3, 4)]);
    let v = singlet_pair_state([(1, 3), (2, 4)]);
    let v_perp = &v - &u * u.dotc(&v);
    let b0 = StateVector::normalized(u).expect("nonzero singlet product");
    let b1 = StateVector::normalized(v_perp).expect("independent singlet products");
    FourAtomSector { projector, basis: [b0, b1] }
}
