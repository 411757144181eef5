use vspc_core::diagnostics::{
    all_certificates, bkm_report, energy_certificate, h1_growth_certificate, lp_growth_certificate, read_csv,
    write_csv, CertificateSettings, LpExponent,
};
use vspc_core::solver::{perturbed_identity, simulate, taylor_green, Termination};
use vspc_core::{GridSpec, SolverConfig, State};

fn standard_run(n: usize, nu: f64, t_end: f64) -> vspc_core::solver::RunResult {
    let grid = GridSpec::new(n).unwrap();
    let initial = State::new(0.0, taylor_green(&grid), perturbed_identity(&grid, 0.1)).unwrap();
    let mut cfg = SolverConfig::new(grid);
    cfg.nu = nu;
    cfg.t_end = t_end;
    simulate(&cfg, initial).unwrap()
}

#[test]
fn inviscid_and_viscous_runs_pass_every_certificate() {
    for nu in [0.0, 0.01] {
        let out = standard_run(32, nu, 0.5);
        assert_eq!(out.termination, Termination::Completed);
        let e = energy_certificate(&out.history, 1e-6);
        println!("nu={nu}: energy residual {:e}", e.value);
        assert!(e.satisfied);
        for p in LpExponent::ALL {
            let c = lp_growth_certificate(&out.history, p, 1e-9);
            println!("nu={nu}: {} margin {:e}", c.name, c.margin);
            assert!(c.satisfied);
        }
        let h1 = h1_growth_certificate(&out.history);
        assert!(h1.satisfied && h1.value.is_finite());
        for r in &out.history {
            assert!(r.div_drift_u <= 1e-8 && r.div_drift_f <= 1e-8);
        }
        // bounded BKM integral goes with bounded norms
        let bkm = bkm_report(&out.history);
        assert!(bkm.integral.is_finite() && bkm.integral < 1.0);
        assert!(out.history.iter().all(|r| r.h2_u.is_finite() && r.h2_f.is_finite()));
    }
}

#[test]
fn viscous_decay_has_no_blowup_estimate() {
    let grid = GridSpec::new(16).unwrap();
    let mut cfg = SolverConfig::new(grid.clone());
    cfg.nu = 0.2;
    cfg.t_end = 0.5;
    let initial = State::new(0.0, taylor_green(&grid), vspc_core::TensorField::identity(&grid)).unwrap();
    let out = simulate(&cfg, initial).unwrap();
    assert_eq!(bkm_report(&out.history).extrapolated_t_star, None);
}

#[test]
fn certificates_survive_csv_round_trip() {
    let out = standard_run(16, 0.01, 0.2);
    let settings = CertificateSettings::default();
    let mut buf = Vec::new();
    write_csv(&mut buf, &out.history).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(
        all_certificates(&back, &settings),
        all_certificates(&out.history, &settings)
    );
    assert_eq!(bkm_report(&back), bkm_report(&out.history));
}

#[test]
fn stagnation_point_saturation_converges_with_dt() {
    // With F₀ = I the first column grows at exactly ‖∇u‖_∞ at the origin, so
    // the sup-norm bound is attained and only quadrature error remains.
    let grid = GridSpec::new(32).unwrap();
    let defect = |dt: f64| {
        let mut cfg = SolverConfig::new(grid.clone());
        cfg.nu = 0.05;
        cfg.t_end = 0.3;
        cfg.dt_max = dt;
        let initial = State::new(0.0, taylor_green(&grid), vspc_core::TensorField::identity(&grid)).unwrap();
        let out = simulate(&cfg, initial).unwrap();
        lp_growth_certificate(&out.history, LpExponent::Inf, CertificateSettings::default().lp_tol)
    };
    let (coarse, fine) = (defect(0.01), defect(0.005));
    println!("margins {:e} {:e}", coarse.margin, fine.margin);
    assert!(coarse.satisfied && fine.satisfied);
    assert!(fine.margin.abs() < 0.3 * coarse.margin.abs());
}
