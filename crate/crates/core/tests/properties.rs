//! Property tests of the structural invariants.

use std::sync::LazyLock;

use mmbeam::config::{derive_coefficients, BeamCoefficients, CoefficientOverrides, RawMaterialConstants};
use mmbeam::controller::{applied_voltage, ControllerConfig, Law, TraceMethod};
use mmbeam::grid::{apply_stencil, Grid, GhostedValues, Stencil};
use mmbeam::march::{energy, IntegratorConfig, Stepper};
use mmbeam::model::{Mode, SchemeOptions, SemiDiscreteSystem};
use mmbeam::sigma::{inner, norm, EllipticSolver};
use mmbeam::spectral::{spectrum_of_matrix, assemble_generator};
use proptest::prelude::*;

fn system(n: usize, mode: Mode) -> SemiDiscreteSystem {
    SemiDiscreteSystem::assemble(Grid::new(n, 1.0).unwrap(), BeamCoefficients::shipped_defaults(), SchemeOptions { mode, ..Default::default() })
        .unwrap()
}

static CONSTRAINT: LazyLock<SemiDiscreteSystem> = LazyLock::new(|| system(24, Mode::EllipticConstraint));
static VISCOUS: LazyLock<SemiDiscreteSystem> = LazyLock::new(|| system(24, Mode::ViscousFiltered));
static CONSERVATIVE: LazyLock<SemiDiscreteSystem> = LazyLock::new(|| {
    SemiDiscreteSystem::assemble(
        Grid::new(24, 1.0).unwrap(),
        BeamCoefficients::shipped_defaults(),
        SchemeOptions { kappa: Some(0.0), ..Default::default() },
    )
    .unwrap()
});
static MIDPOINT: LazyLock<Stepper<'static>> =
    LazyLock::new(|| Stepper::new(&CONSTRAINT, ControllerConfig::default(), &IntegratorConfig::default()).unwrap());

fn nodal(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n + 1).prop_map(|mut v| {
        v[0] = 0.0;
        v
    })
}

fn packed(sys: &'static SemiDiscreteSystem) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, sys.state_len())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn p_is_symmetric_and_j_nonpositive(
        n in 8usize..64,
        log_param in -1.0f64..7.5,
        seed_u in nodal(64),
        seed_v in nodal(64),
    ) {
        let grid = Grid::new(n, 1.0).unwrap();
        let solver = EllipticSolver::new(grid, 10f64.powf(log_param)).unwrap();
        let u = &seed_u[..=n];
        let v = &seed_v[..=n];
        prop_assume!(norm(&grid, u) > 1e-3 && norm(&grid, v) > 1e-3);
        let pu = solver.apply_p(u);
        let pv = solver.apply_p(v);
        let scale = norm(&grid, u) * norm(&grid, v);
        prop_assert!((inner(&grid, &pu, v) - inner(&grid, u, &pv)).abs() <= 1e-10 * scale);
        prop_assert!(inner(&grid, &pu, u) >= -1e-12 * inner(&grid, u, u));
        prop_assert!(inner(&grid, &solver.apply_j(u), u) <= 1e-12 * inner(&grid, u, u));
    }

    #[test]
    fn second_difference_is_exact_on_quadratics(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, n in 8usize..40) {
        let grid = Grid::new(n, 1.0).unwrap();
        let values = grid.sample(|x| a + b * x + c * x * x);
        for i in 0..=n as isize {
            let d2 = apply_stencil(&grid, Stencil::D2, &values, i).unwrap();
            prop_assert!((d2 - 2.0 * c).abs() <= 1e-8 * (1.0 + c.abs()) * (n * n) as f64);
        }
    }

    #[test]
    fn second_difference_is_self_adjoint(u in nodal(30), v in nodal(30)) {
        // u_0 = 0 and mirror ghosts at x_N: ⟨D²u, v⟩ = ⟨u, D²v⟩ under trapezoid weights.
        let grid = Grid::new(30, 1.0).unwrap();
        let ghosted = |z: &[f64]| {
            let mut data = vec![-z[1]];
            data.extend_from_slice(z);
            data.push(z[29]);
            GhostedValues::from_vec(data)
        };
        let d2 = |z: &[f64]| -> Vec<f64> {
            let g = ghosted(z);
            let mut out: Vec<f64> = (0..=30).map(|i| apply_stencil(&grid, Stencil::D2, &g, i).unwrap()).collect();
            out[0] = 0.0;
            out
        };
        let lhs = inner(&grid, &d2(&u), &v);
        let rhs = inner(&grid, &u, &d2(&v));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn rhs_is_linear(z1 in packed(&VISCOUS), z2 in packed(&VISCOUS), a in -3.0f64..3.0, v1 in -1.0f64..1.0, v2 in -1.0f64..1.0) {
        for sys in [&*CONSTRAINT, &*VISCOUS] {
            let dim = sys.state_len();
            let (z1, z2) = (&z1[..dim], &z2[..dim]);
            let combo: Vec<f64> = z1.iter().zip(z2).map(|(x, y)| a * x + y).collect();
            let lhs = sys.rhs_packed(&combo, a * v1 + v2);
            let r1 = sys.rhs_packed(z1, v1);
            let r2 = sys.rhs_packed(z2, v2);
            let rhs: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + y).collect();
            let gap: Vec<f64> = lhs.iter().zip(&rhs).map(|(x, y)| x - y).collect();
            prop_assert!(max_abs(&gap) <= 1e-10 * (1.0 + max_abs(&lhs)));
        }
    }

    #[test]
    fn voltage_is_homogeneous(z in packed(&VISCOUS), a in -4.0f64..4.0) {
        for sys in [&*CONSTRAINT, &*VISCOUS] {
            let z = &z[..sys.state_len()];
            let scaled: Vec<f64> = z.iter().map(|x| a * x).collect();
            for law in [Law::AnalyticFeed, Law::Discrete] {
                for trace_method in [TraceMethod::PSigmaDirect, TraceMethod::PhiSubstitution] {
                    let cfg = ControllerConfig { law, trace_method, ..Default::default() };
                    let v = applied_voltage(sys, z, &cfg);
                    let va = applied_voltage(sys, &scaled, &cfg);
                    prop_assert!((va - a * v).abs() <= 1e-9 * (1.0 + (a * v).abs()), "{law:?} {trace_method:?}: {va} vs {}", a * v);
                }
            }
        }
    }

    #[test]
    fn law_off_gives_exact_zero(z in packed(&VISCOUS), k1 in 1.0f64..1e10) {
        for sys in [&*CONSTRAINT, &*VISCOUS] {
            let cfg = ControllerConfig { k1, law: Law::Off, ..Default::default() };
            prop_assert_eq!(applied_voltage(sys, &z[..sys.state_len()], &cfg).to_bits(), 0.0f64.to_bits());
        }
    }

    #[test]
    fn energy_is_nonnegative_and_quadratic(z in packed(&CONSTRAINT), a in -3.0f64..3.0) {
        let sys = &*CONSTRAINT;
        let e = energy(&sys.unpack(&z, 0.0, 0.0), sys);
        let scaled: Vec<f64> = z.iter().map(|x| a * x).collect();
        let ea = energy(&sys.unpack(&scaled, 0.0, 0.0), sys);
        prop_assert!(e >= 0.0);
        prop_assert!((ea - a * a * e).abs() <= 1e-9 * (1.0 + a * a * e));
    }

    #[test]
    fn midpoint_step_never_raises_energy(z in packed(&CONSTRAINT)) {
        let sys = &*CONSTRAINT;
        let e0 = energy(&sys.unpack(&z, 0.0, 0.0), sys);
        let next = MIDPOINT.step(&z);
        let e1 = energy(&sys.unpack(&next, 0.0, 0.0), sys);
        prop_assert!(e1 <= e0 * (1.0 + 1e-9), "{e0} -> {e1}");
    }

    #[test]
    fn conservative_generator_is_skew_in_the_energy_product(z in packed(&CONSTRAINT)) {
        let cons = &*CONSERVATIVE;
        let gen = assemble_generator(cons, &ControllerConfig::off()).unwrap();
        let zv = nalgebra::DVector::from_column_slice(&z);
        let e = zv.dot(&(&gen.gram * &zv));
        let work = zv.dot(&(&gen.gram * (&gen.matrix * &zv)));
        prop_assert!(work.abs() <= 1e-9 * e, "{work} vs {e}");
    }

    #[test]
    fn derivation_is_idempotent(scale_m in 0.5f64..2.0, scale_h in 0.5f64..2.0) {
        let raw = RawMaterialConstants { rho1: RawMaterialConstants::default().rho1 * scale_m, h1: RawMaterialConstants::default().h1 * scale_h, ..Default::default() };
        let once = derive_coefficients(Some(&raw), &CoefficientOverrides::default()).unwrap();
        let twice = derive_coefficients(None, &CoefficientOverrides::from(&once)).unwrap();
        prop_assert_eq!(once, twice);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn spectrum_is_closed_under_conjugation(n in 8usize..20, log_k1 in 6.0f64..9.0, viscous in any::<bool>()) {
        let mode = if viscous { Mode::ViscousFiltered } else { Mode::EllipticConstraint };
        let sys = system(n, mode);
        let cfg = ControllerConfig { k1: 10f64.powf(log_k1), ..Default::default() };
        let gen = assemble_generator(&sys, &cfg).unwrap();
        let eig = spectrum_of_matrix(&gen.matrix).unwrap();
        let scale = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);
        for l in &eig {
            let partner = eig.iter().map(|m| (m - l.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner <= 1e-7 * scale, "{l} has no conjugate partner");
        }
    }
}
