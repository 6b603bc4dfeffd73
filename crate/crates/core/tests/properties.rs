use std::f64::consts::PI;

use proptest::prelude::*;

use rff::evolution::{self, lindblad};
use rff::geometry;
use rff::hamiltonians;
use rff::lattice::{self, LatticeConfig};
use rff::linalg::{self, c, CMat, CVec};
use rff::spin::{self, Axis, BlochVector, DensityMatrix, StateVector};

fn bloch(max_len: f64) -> impl Strategy<Value = BlochVector> {
    (-1.0f64..1.0, 0.0..2.0 * PI, 0.0f64..=1.0).prop_map(move |(z, phi, r)| {
        let s = (1.0 - z * z).sqrt();
        let r = max_len * r;
        BlochVector::new([r * s * phi.cos(), r * s * phi.sin(), r * z]).unwrap()
    })
}

fn unit_bloch() -> impl Strategy<Value = BlochVector> {
    (-1.0f64..1.0, 0.0..2.0 * PI).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        BlochVector::new([s * phi.cos(), s * phi.sin(), z]).unwrap()
    })
}

/// Near-equilateral trio with a slightly tilted bias.
fn trio() -> impl Strategy<Value = geometry::TriangleGeometry> {
    (prop::array::uniform9(-0.03f64..0.03), -0.03f64..0.03, -0.03f64..0.03).prop_filter_map("degenerate", |(d, tx, ty)| {
        let mut sites = geometry::equilateral_sites(1.0);
        for (k, s) in sites.iter_mut().enumerate() {
            for (i, x) in s.iter_mut().enumerate() {
                *x += d[3 * k + i];
            }
        }
        let e = [tx, ty, 1.0];
        let e = linalg::scale3(&e, 1.0 / linalg::norm3(&e));
        let g = geometry::analyze(&sites, &e).ok()?;
        (g.kappa.norm() > 1e-6).then_some(g)
    })
}

fn evolve(h: &CMat, rho: &CMat, t: f64) -> CMat {
    let u = linalg::expm_hermitian(h, t);
    &u * rho * u.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fidelity_never_below_bound(g in trio(), s0 in bloch(1.0), phase in 0.0f64..1.0) {
        let h = hamiltonians::h_dd_effective(&g, 1.0);
        let (o1, o2) = geometry::effective_frequencies(&g, 1.0);
        let t = phase * 2.0 * PI / o2;
        let rho = evolve(&h, spin::encode_rff(&s0).matrix(), t);
        let (st, _) = spin::decode_rff(&rho).unwrap();
        let bound = evolution::fidelity_bound(evolution::f_of_t(o1, o2, t));
        prop_assert!(evolution::fidelity_qubit(&st, &s0) >= bound - 1e-10);
    }

    #[test]
    fn encode_decode_round_trip(s in bloch(1.0)) {
        let rho = spin::encode_rff(&s);
        let (back, p) = spin::decode_rff(rho.matrix()).unwrap();
        prop_assert!((p - 1.0).abs() < 1e-12);
        for (a, b) in back.components().iter().zip(s.components()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((rho.purity() - (1.0 + s.length().powi(2)) / 4.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pure_signal_stays_pure(g in trio(), s0 in unit_bloch(), t in 0.0f64..200.0) {
        let h = hamiltonians::h_dd_effective(&g, 1.0);
        let (st, _) = spin::decode_rff(&evolve(&h, spin::encode_rff(&s0).matrix(), t)).unwrap();
        prop_assert!((st.length() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_signal_purity_follows_trend(g in trio(), s0 in bloch(0.95), t in 0.5f64..200.0) {
        let h = hamiltonians::h_dd_effective(&g, 1.0);
        let (o1, o2) = geometry::effective_frequencies(&g, 1.0);
        let f = evolution::f_of_t(o1, o2, t);
        let sig = evolution::rotate_to_phi(s0.components(), g.phi)[0];
        let (st, _) = spin::decode_rff(&evolve(&h, spin::encode_rff(&s0).matrix(), t)).unwrap();
        let change = st.length() - s0.length();
        prop_assume!(change.abs() > 1e-9);
        match evolution::purity_trend(f, sig) {
            1 => prop_assert!(change > 0.0),
            -1 => prop_assert!(change < 0.0),
            _ => {}
        }
    }

    #[test]
    fn compensation_cancels_first_order_kappa(alpha in prop::array::uniform3(-0.05f64..0.05)) {
        let r = (2.0 / 3.0 * alpha.iter().map(|a| a * a).sum::<f64>()).sqrt();
        let targets = match geometry::compensate_tilt(&alpha) {
            Ok(t) => t,
            Err(rff::RffError::InfeasibleCompensation(_)) => {
                prop_assert!(alpha.iter().any(|&a| a > r));
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(targets.iter().all(|&t| t >= 0.0));
        let eps: [f64; 3] = std::array::from_fn(|k| geometry::pair_eps(alpha[k], targets[k].sqrt()));
        let residual = geometry::imperfection_kappa(&eps).norm();
        let second_order: f64 = (0..3).map(|k| 3.0 * (alpha[k] * targets[k]).abs()).sum();
        prop_assert!(residual <= second_order + 1e-15);
        let bare = geometry::imperfection_kappa(&alpha).norm();
        let amax = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if bare > 20.0 * amax * amax {
            prop_assert!(residual < bare);
        }
    }

    #[test]
    fn lattice_periodic_and_threefold(u in -3.0f64..3.0, v in -3.0f64..3.0) {
        let cfg = LatticeConfig::default();
        let [a1, a2] = lattice::lattice_vectors(&cfg);
        let p = [u * a1[0] + v * a2[0], u * a1[1] + v * a2[1]];
        let val = lattice::potential(&cfg, p[0], p[1]);
        for a in [a1, a2] {
            prop_assert!((lattice::potential(&cfg, p[0] + a[0], p[1] + a[1]) - val).abs() < 1e-9);
        }
        let o = lattice::site_center(&cfg, 0, 0);
        let (sn, cs) = (2.0 * PI / 3.0).sin_cos();
        let (dx, dy) = (p[0] - o[0], p[1] - o[1]);
        let q = [o[0] + cs * dx - sn * dy, o[1] + sn * dx + cs * dy];
        prop_assert!((lattice::potential(&cfg, q[0], q[1]) - val).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dephasing_conserves_functions_of_jz(
        g in trio(),
        re in prop::array::uniform8(-1.0f64..1.0),
        im in prop::array::uniform8(-1.0f64..1.0),
        omega0 in 0.0f64..20.0,
    ) {
        let jz = spin::total_spin(3).unwrap().component(Axis::Z).clone();
        let h = hamiltonians::h_dd_effective(&g, 2.0) + hamiltonians::h_bias(omega0, 3).unwrap();
        let psi = CVec::from_fn(8, |i, _| c(re[i], im[i]));
        prop_assume!(psi.norm() > 0.1);
        let rho0 = DensityMatrix::from_pure(&StateVector::normalized(psi).unwrap());
        let spec = lindblad::LindbladSpec::stray_field(1.0, 0.3, 3).unwrap();
        let obs = [("Jz", jz.clone()), ("Jz2", &jz * &jz), ("Jz4", &jz * &jz * &jz * &jz)];
        let run = lindblad::lindblad_evolve(&rho0, &h, &spec, &evolution::linspace(2.0, 11), &obs, &lindblad::IntegratorOptions::default()).unwrap();
        for (name, _) in &obs {
            let vals = run.result.get(name).unwrap();
            prop_assert!(vals.iter().all(|x| (x - vals[0]).abs() < 1e-9), "{name}");
        }
    }
}
