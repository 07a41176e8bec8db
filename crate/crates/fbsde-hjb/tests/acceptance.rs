//! Acceptance gate: the ten headline criteria, each printing one
//! pass/fail line at its stated tolerance.

use std::sync::OnceLock;
use std::time::Instant;

use fbsde_hjb::bench::{self, viscosity, MeanVarParams, UtilityBenchmarkParams};
use fbsde_hjb::grid::GridSpec;
use fbsde_hjb::hjb::{self, FieldPair, SolveReport};
use fbsde_hjb::mc::{self, YzSource};
use fbsde_hjb::pde::{self, Stepper};
use fbsde_hjb::policy::FeedbackPolicy;
use fbsde_hjb::problem::{from_expressions, ControlBox, ExprCoefficients, ProblemSpec};
use fbsde_hjb::Real;

const CANDIDATE_COUNT: usize = 101;

struct Solved {
    params: UtilityBenchmarkParams<Real>,
    spec: ProblemSpec,
    grid: GridSpec,
    pair: FieldPair,
    report: SolveReport,
    solve_seconds: Real,
}

fn solved() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = UtilityBenchmarkParams::defaults();
        let spec = bench::utility_problem(&params, None, 5.0).unwrap();
        let grid = bench::default_grid(&params, 1.0, 201, 800).unwrap();
        let u0 = FeedbackPolicy::constant(
            spec.control.midpoint()[0],
            grid.t0,
            grid.t_end,
            grid.x_lo,
            grid.x_hi,
        )
        .unwrap();
        let candidates = hjb::uniform_candidates(&spec.control, CANDIDATE_COUNT).unwrap();
        let clock = Instant::now();
        let (pair, report) = hjb::solve_extended_hjb(
            &spec,
            &grid,
            &u0,
            &candidates,
            1e-6,
            50,
            Stepper::Explicit,
        )
        .unwrap();
        let solve_seconds = clock.elapsed().as_secs_f64();
        Solved {
            params,
            spec,
            grid,
            pair,
            report,
            solve_seconds,
        }
    })
}

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn criterion_01_closed_form_value() {
    let s = solved();
    assert!(s.report.converged, "solver did not converge");
    let inner = s.grid.inner_range(0.6);
    let mut worst: Real = 0.0;
    for j in 0..=s.grid.nt {
        let t = s.grid.t(j);
        if t > 0.9 {
            break;
        }
        for i in inner.clone() {
            let cf = bench::closed_form(&s.params, t, s.grid.x(i)).unwrap();
            // The solver minimizes the negated reward; flip back.
            let rel = (-s.pair.v.at(j, i) - cf.v).abs() / cf.v.abs();
            worst = worst.max(rel);
        }
    }
    let pass = worst <= 0.02 && s.solve_seconds <= 60.0;
    println!(
        "[{}] criterion 1: closed-form value, max rel err {:.3e} (tol 2e-2), solve {:.1}s (limit 60s)",
        status(pass),
        worst,
        s.solve_seconds
    );
    assert!(pass);
}

#[test]
fn criterion_02_optimal_policy() {
    let s = solved();
    let inner = s.grid.inner_range(0.6);
    let spacing = (s.spec.control.upper[0] - s.spec.control.lower[0])
        / (CANDIDATE_COUNT - 1) as Real;
    let mut worst_rel: Real = 0.0;
    let mut worst_variation: Real = 0.0;
    for j in 0..=s.grid.nt {
        let t = s.grid.t(j);
        let pi = bench::closed_form(&s.params, t.min(1.0), 0.0).unwrap().pi_star;
        let mut lo = Real::INFINITY;
        let mut hi = Real::NEG_INFINITY;
        for i in inner.clone() {
            let u = s.pair.u_star.value(t, s.grid.x(i));
            worst_rel = worst_rel.max((u - pi).abs() / pi.abs());
            lo = lo.min(u);
            hi = hi.max(u);
        }
        worst_variation = worst_variation.max(hi - lo);
    }
    let pass = worst_rel <= 0.05 && worst_variation <= 2.0 * spacing;
    println!(
        "[{}] criterion 2: optimal policy, max rel err {:.3e} (tol 5e-2), x-variation {:.3e} (tol {:.3e})",
        status(pass),
        worst_rel,
        worst_variation,
        2.0 * spacing
    );
    assert!(pass);
}

#[test]
fn criterion_03_auxiliary_field_under_closed_form_policy() {
    let s = solved();
    let policy = bench::closed_form_policy(&s.params, &s.grid, 5.0).unwrap();
    let (g, _) = pde::solve_g(&s.spec, &policy, &s.grid, Stepper::Explicit).unwrap();
    let inner = s.grid.inner_range(0.6);
    let mut worst: Real = 0.0;
    for j in 0..=s.grid.nt {
        let t = s.grid.t(j);
        for i in inner.clone() {
            let cf = bench::closed_form(&s.params, t, s.grid.x(i)).unwrap();
            worst = worst.max((g.at(j, i) - cf.g).abs());
        }
    }
    let pass = worst <= 1e-3;
    println!(
        "[{}] criterion 3: auxiliary field vs C(t)x + D(t), max abs err {:.3e} (tol 1e-3)",
        status(pass),
        worst
    );
    assert!(pass);
}

#[test]
fn criterion_04_ode_cross_check() {
    let params = UtilityBenchmarkParams::defaults();
    let mesh = bench::integrate_odes(&params, 1000).unwrap();
    let mut worst: Real = 0.0;
    for (i, &t) in mesh.t.iter().enumerate() {
        let cf = bench::closed_form(&params, t, 0.0).unwrap();
        worst = worst
            .max((mesh.a[i] - cf.a).abs())
            .max((mesh.b[i] - cf.b).abs())
            .max((mesh.c[i] - cf.c).abs())
            .max((mesh.d[i] - cf.d).abs());
    }
    let b_gap = bench::printed_b_discrepancy(&params, 1000).unwrap();
    let pass = worst <= 1e-8;
    println!(
        "[{}] criterion 4: RK4 vs closed form, max abs err {:.3e} (tol 1e-8); printed-B discrepancy {:.3e}",
        status(pass),
        worst,
        b_gap
    );
    assert!(pass);
}

#[test]
fn criterion_05_verification_theorem_cost_match() {
    let s = solved();
    let est = mc::estimate_cost(
        &s.spec,
        &s.pair.u_star,
        0.0,
        1.0,
        256,
        100_000,
        2024,
        YzSource::Fields {
            g: &s.pair.g,
            z: &s.pair.z,
        },
    )
    .unwrap();
    let v0 = s.pair.v.interp(0.0, 1.0);
    let tol = (3.0 * est.std_err).max(0.02 * v0.abs());
    let pass = (est.mean - v0).abs() <= tol;
    println!(
        "[{}] criterion 5: cost under u_star {:.6e} (se {:.1e}) vs v(0,1) {:.6e}, |diff| {:.3e} (tol {:.3e})",
        status(pass),
        est.mean,
        est.std_err,
        v0,
        (est.mean - v0).abs(),
        tol
    );
    assert!(pass);
}

#[test]
fn criterion_06_dynamic_programming_split() {
    let s = solved();
    let delta = (s.spec.control.upper[0] - s.spec.control.lower[0]) / 10.0;
    let mut candidates = vec![s.pair.u_star.clone()];
    for i in 1..=8usize {
        let magnitude = delta * i.div_ceil(2) as Real;
        let shift = if i % 2 == 1 { magnitude } else { -magnitude };
        candidates.push(s.pair.u_star.shifted(shift, &s.spec.control));
    }
    let report = mc::check_dpp(
        &s.spec,
        &s.pair,
        0.0,
        1.0,
        0.5,
        &candidates,
        128,
        20_000,
        99,
    )
    .unwrap();
    let optimal = &report.rhs[0];
    let gap = optimal.mean - report.lhs;
    let tol = 3.0 * optimal.std_err + 0.01 * report.lhs.abs();
    let mut pass = gap.abs() <= tol;
    for cand in &report.rhs[1..] {
        pass &= cand.mean >= optimal.mean - 3.0 * cand.std_err;
    }
    println!(
        "[{}] criterion 6: DPP gap {:.3e} (tol {:.3e}); min rhs at candidate {}",
        status(pass),
        gap,
        tol,
        report.min_index
    );
    assert!(pass);
}

#[test]
fn criterion_07_regression_z_vs_field() {
    let s = solved();
    let mut ens = mc::simulate_forward(&s.spec, &s.pair.u_star, 0.0, 1.0, 128, 20_000, 7)
        .unwrap();
    mc::backward_regression(&s.spec, &mut ens, &s.pair.u_star, 3).unwrap();
    let z = ens.z.as_ref().unwrap();

    let inner = s.grid.inner_range(0.6);
    let x_lo = s.grid.x(inner.start);
    let x_hi = s.grid.x(inner.end - 1);
    let mut mad_sum = 0.0;
    let mut scale_sum = 0.0;
    let mut count = 0usize;
    for p in 0..ens.paths {
        for k in 0..ens.nt {
            let x = ens.x_at(p, k);
            if x < x_lo || x > x_hi {
                continue;
            }
            let field_z = s.pair.z.interp(ens.t(k), x);
            mad_sum += (z[p * ens.nt + k] - field_z).abs();
            scale_sum += field_z.abs();
            count += 1;
        }
    }
    let mad = mad_sum / count as Real;
    let scale = scale_sum / count as Real;
    let pass = mad <= 0.05 * scale;
    println!(
        "[{}] criterion 7: regression Z vs field, MAD {:.3e} vs scale {:.3e} (ratio {:.3}, tol 0.05)",
        status(pass),
        mad,
        scale,
        mad / scale
    );
    assert!(pass);
}

#[test]
fn criterion_08_mean_variance_equivalence() {
    let report = bench::meanvar_check(&MeanVarParams::default(), 100_000, 256, 3, 31)
        .unwrap();
    let pass = report.gap_in_se <= 3.0;
    println!(
        "[{}] criterion 8: direct Var {:.6e} vs transformed {:.6e}, gap {:.2} combined SE (tol 3)",
        status(pass),
        report.direct,
        report.transformed,
        report.gap_in_se
    );
    assert!(pass);
}

#[test]
fn criterion_09_viscosity_counterexample() {
    // Warm-up outside the timed region.
    let _ = viscosity::check_example51();
    let clock = Instant::now();
    let report = viscosity::check_example51();
    let elapsed = clock.elapsed();
    let pass = report.operator_negative_case == -2.0
        && report.operator_positive_case == 2.0
        && report.classical_definition_fails
        && report.v_is_viscosity_solution
        && report.smooth_point_residual == 0.0
        && elapsed.as_secs_f64() < 1e-3;
    println!(
        "[{}] criterion 9: operator values {} and {}, certified {}, {:.1}us (limit 1ms)",
        status(pass),
        report.operator_negative_case,
        report.operator_positive_case,
        report.v_is_viscosity_solution,
        elapsed.as_secs_f64() * 1e6
    );
    assert!(pass);
}

#[test]
fn criterion_10_property_suites() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);

    // Lipschitz projection: idempotent and bound-respecting on 1000
    // random slices.
    let mut projection_ok = true;
    for _ in 0..1000 {
        let n = rng.random_range(3..40usize);
        let k: Real = rng.random_range(0.0..3.0);
        let dx: Real = rng.random_range(0.01..1.0);
        let mut slice: Vec<Real> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        hjb::lipschitz_project(&mut slice, dx, k, -5.0, 5.0);
        projection_ok &= slice
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() <= k * dx + 1e-12);
        let again = {
            let mut s = slice.clone();
            hjb::lipschitz_project(&mut s, dx, k, -5.0, 5.0);
            s
        };
        projection_ok &= slice == again;
    }

    // Feynman–Kac reduction: singleton control, (y, z)-free f and h —
    // the HJB sweep equals the linear backward solve bit-for-bit.
    let mk = |h: &str, f: &str, phi: &str, g_term: &str| {
        from_expressions(
            &ExprCoefficients {
                mu: "0.3*x".into(),
                sigma: "0.4".into(),
                h: h.into(),
                f: f.into(),
                phi: phi.into(),
                g_terminal: g_term.into(),
                gamma: None,
                gamma_d1: None,
                gamma_d2: None,
            },
            1.0,
            ControlBox::scalar(0.7, 0.7),
            0.0,
        )
        .unwrap()
    };
    let grid = GridSpec::new(-2.0, 2.0, 41, 800, 0.0, 1.0).unwrap();
    let u0 = FeedbackPolicy::constant(0.7, 0.0, 1.0, -2.0, 2.0).unwrap();
    let spec_hjb = mk("0", "x", "x", "x^2");
    let spec_lin = mk("x", "0", "x^2", "x");
    let (pair, _) =
        hjb::solve_extended_hjb(&spec_hjb, &grid, &u0, &[0.7], 1e9, 1, Stepper::Explicit)
            .unwrap();
    let (g_lin, _) = pde::solve_g(&spec_lin, &u0, &grid, Stepper::Explicit).unwrap();
    let feynman_kac_ok = pair.v.values() == g_lin.values();

    // Comparison monotonicity on 100 random ordered pairs.
    let small = GridSpec::new(-1.0, 1.0, 15, 100, 0.0, 1.0).unwrap();
    let policy = FeedbackPolicy::constant(0.0, 0.0, 1.0, -1.0, 1.0).unwrap();
    let mut comparison_ok = true;
    for _ in 0..100 {
        let a: Real = rng.random_range(-1.0..1.0);
        let db: Real = rng.random_range(0.0..1.0);
        let dc: Real = rng.random_range(0.0..1.0);
        let s1 = mk_pair(a, 0.0, 0.0);
        let s2 = mk_pair(a, db, dc);
        let (g1, _) = pde::solve_g(&s1, &policy, &small, Stepper::Explicit).unwrap();
        let (g2, _) = pde::solve_g(&s2, &policy, &small, Stepper::Explicit).unwrap();
        comparison_ok &= g1
            .values()
            .iter()
            .zip(g2.values())
            .all(|(v1, v2)| v1 <= &(v2 + 1e-12));
    }

    // Determinism: the large solve reruns bit-identically.
    let s = solved();
    let u0_big = FeedbackPolicy::constant(
        s.spec.control.midpoint()[0],
        s.grid.t0,
        s.grid.t_end,
        s.grid.x_lo,
        s.grid.x_hi,
    )
    .unwrap();
    let candidates = hjb::uniform_candidates(&s.spec.control, CANDIDATE_COUNT).unwrap();
    let small_grid = GridSpec::new(s.grid.x_lo, s.grid.x_hi, 51, 200, 0.0, 1.0).unwrap();
    let run = || {
        hjb::solve_extended_hjb(
            &s.spec,
            &small_grid,
            &u0_big,
            &candidates,
            1e-6,
            50,
            Stepper::Explicit,
        )
        .unwrap()
    };
    let (p1, _) = run();
    let (p2, _) = run();
    let determinism_ok = p1.v.values() == p2.v.values()
        && p1.g.values() == p2.g.values()
        && p1.u_star.values() == p2.u_star.values();

    // Seed-split independence: partitioned simulation reproduces the
    // one-shot ensemble.
    let policy_mc = FeedbackPolicy::constant(1.0, 0.0, 1.0, -2.0, 4.0).unwrap();
    let full = mc::simulate_forward(&s.spec, &policy_mc, 0.0, 1.0, 32, 64, 5).unwrap();
    let lo = mc::simulate_forward_to(&s.spec, &policy_mc, 0.0, 1.0, 1.0, 32, 40, 5, 0).unwrap();
    let hi = mc::simulate_forward_to(&s.spec, &policy_mc, 0.0, 1.0, 1.0, 32, 24, 5, 40).unwrap();
    let mut joined = lo.x.clone();
    joined.extend_from_slice(&hi.x);
    let split_ok = full.x == joined;

    let pass =
        projection_ok && feynman_kac_ok && comparison_ok && determinism_ok && split_ok;
    println!(
        "[{}] criterion 10: projection {}, Feynman-Kac {}, comparison {}, determinism {}, seed-split {}",
        status(pass),
        projection_ok,
        feynman_kac_ok,
        comparison_ok,
        determinism_ok,
        split_ok
    );
    assert!(pass);
}

/// Problem with driver `a + db` and terminal `a x + dc` for the
/// comparison-principle pairs.
fn mk_pair(a: Real, db: Real, dc: Real) -> ProblemSpec {
    from_expressions(
        &ExprCoefficients {
            mu: "0.2".into(),
            sigma: "0.5".into(),
            h: format!("({a})+({db})"),
            f: "0".into(),
            phi: format!("({a})*x+({dc})"),
            g_terminal: "0".into(),
            gamma: None,
            gamma_d1: None,
            gamma_d2: None,
        },
        1.0,
        ControlBox::scalar(0.0, 0.0),
        0.0,
    )
    .unwrap()
}
