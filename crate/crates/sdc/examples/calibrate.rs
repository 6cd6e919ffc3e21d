//! Scratch harness for choosing the step-size windows of the study presets.
//! Run with: cargo run -p sdc --example calibrate --release -- <section>

use std::sync::Arc;

use sdc::collocation::PreconditionerKind;
use sdc::diagnostics::{
    run_convergence_study, FourierSpec, StudyMethod, StudySpec, TimeMode,
};
use sdc::mlsdc::{Boundary, LevelHierarchy};
use sdc::problems::{AllenCahn2dProblem, AuzingerProblem, Heat1dProblem, IvpProblem};
use sdc::sweeper::{InitialGuess, SweepConfig};

fn dt_list(base: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| base / 2.0f64.powi(i as i32)).collect()
}

fn report(name: &str, out: &sdc::diagnostics::StudyOutput, k_max: usize) {
    println!("== {name}");
    print!("   diverged: ");
    for d in &out.diverged {
        print!("{}", if *d { 'X' } else { '.' });
    }
    println!();
    for k in 0..=k_max {
        let fit = out.order_fits[k]
            .as_ref()
            .map(|f| format!("{:+.3} ({} pts, {} excl)", f.slope, f.points_used, f.excluded.len()))
            .unwrap_or_else(|| "-".into());
        let contr = out.contraction[k]
            .map(|c| format!("{c:+.3}"))
            .unwrap_or_else(|| "-".into());
        println!("   k={k}: order_fit {fit:<26} contraction {contr}");
    }
    if let Some(series) = out.err_coll.as_ref().or(out.err_exact.as_ref()) {
        for (i, &dt) in series.step_sizes().iter().enumerate() {
            print!("   dt={dt:.6e}: ");
            for k in 0..=k_max {
                print!("{:.3e} ", series.error(i, k));
            }
            println!();
        }
    }
}

fn heat_sdc(n: usize, m: usize, guess: InitialGuess, base: f64, count: usize, k_max: usize) {
    let p = Arc::new(Heat1dProblem::new(0.1, 4, n).unwrap());
    let spec = StudySpec {
        method: StudyMethod::Sdc {
            problem: p,
            num_nodes: m,
            config: SweepConfig::new(PreconditionerKind::RightRectangle),
        },
        dt_list: dt_list(base, count),
        k_max,
        guess,
        time: TimeMode::SingleStep,
        collocation_tol: 1e-12,
        fourier: Some(FourierSpec {
            cutoff: 10,
            axis_points: None,
        }),
        reference_accuracy: None,
    };
    let out = run_convergence_study(&spec).unwrap();
    report(
        &format!("heat SDC n={n} m={m} guess={guess:?} base={base}"),
        &out,
        k_max,
    );
}

fn heat_mlsdc(
    nf: usize,
    nc: usize,
    m: usize,
    p_order: usize,
    guess: InitialGuess,
    base: f64,
    count: usize,
    k_max: usize,
) {
    let fine = Arc::new(Heat1dProblem::new(0.1, 4, nf).unwrap());
    let coarse = Arc::new(Heat1dProblem::new(0.1, 4, nc).unwrap());
    let h = LevelHierarchy::spatial_coarsening(
        fine,
        coarse,
        m,
        PreconditionerKind::RightRectangle,
        Boundary::Dirichlet,
        nf,
        nc,
        p_order,
        1,
        1e-12,
        50,
    )
    .unwrap();
    let spec = StudySpec {
        method: StudyMethod::Mlsdc {
            hierarchy: Arc::new(h),
        },
        dt_list: dt_list(base, count),
        k_max,
        guess,
        time: TimeMode::SingleStep,
        collocation_tol: 1e-12,
        fourier: Some(FourierSpec {
            cutoff: 10,
            axis_points: None,
        }),
        reference_accuracy: None,
    };
    match run_convergence_study(&spec) {
        Ok(out) => report(
            &format!("heat MLSDC {nf}/{nc} m={m} p={p_order} guess={guess:?} base={base}"),
            &out,
            k_max,
        ),
        Err(e) => println!("== heat MLSDC {nf}/{nc} p={p_order} base={base}: ERROR {e}"),
    }
}

fn auzinger_sdc(mode: TimeMode, guess: InitialGuess, base: f64, count: usize, k_max: usize) {
    let p = Arc::new(AuzingerProblem::new(-0.75, 3.0).unwrap());
    let spec = StudySpec {
        method: StudyMethod::Sdc {
            problem: p,
            num_nodes: 8,
            config: SweepConfig::new(PreconditionerKind::RightRectangle),
        },
        dt_list: dt_list(base, count),
        k_max,
        guess,
        time: mode,
        collocation_tol: 1e-13,
        fourier: None,
        reference_accuracy: None,
    };
    let out = run_convergence_study(&spec).unwrap();
    report(
        &format!("auzinger SDC mode={mode:?} guess={guess:?} base={base}"),
        &out,
        k_max,
    );
}

fn auzinger_mlsdc(
    m_coarse: usize,
    mode: TimeMode,
    guess: InitialGuess,
    base: f64,
    count: usize,
    k_max: usize,
) {
    let p = Arc::new(AuzingerProblem::new(-0.75, 3.0).unwrap());
    let h = LevelHierarchy::temporal_coarsening(
        p,
        8,
        m_coarse,
        PreconditionerKind::RightRectangle,
        1e-13,
        50,
    )
    .unwrap();
    let spec = StudySpec {
        method: StudyMethod::Mlsdc {
            hierarchy: Arc::new(h),
        },
        dt_list: dt_list(base, count),
        k_max,
        guess,
        time: mode,
        collocation_tol: 1e-13,
        fourier: None,
        reference_accuracy: None,
    };
    match run_convergence_study(&spec) {
        Ok(out) => report(
            &format!("auzinger MLSDC mH={m_coarse} mode={mode:?} guess={guess:?} base={base}"),
            &out,
            k_max,
        ),
        Err(e) => println!("== auzinger MLSDC mH={m_coarse} base={base}: ERROR {e}"),
    }
}

fn allen_cahn_mlsdc(
    nf: usize,
    nc: usize,
    p_order: usize,
    guess: InitialGuess,
    base: f64,
    count: usize,
    k_max: usize,
) {
    let fine = Arc::new(AllenCahn2dProblem::new(0.2, 4, nf).unwrap());
    let coarse = Arc::new(AllenCahn2dProblem::new(0.2, 4, nc).unwrap());
    let h = LevelHierarchy::spatial_coarsening(
        fine,
        coarse,
        3,
        PreconditionerKind::RightRectangle,
        Boundary::Periodic,
        nf,
        nc,
        p_order,
        2,
        1e-12,
        50,
    )
    .unwrap();
    let spec = StudySpec {
        method: StudyMethod::Mlsdc {
            hierarchy: Arc::new(h),
        },
        dt_list: dt_list(base, count),
        k_max,
        guess,
        time: TimeMode::SingleStep,
        collocation_tol: 1e-11,
        fourier: Some(FourierSpec {
            cutoff: 10,
            axis_points: Some(nf),
        }),
        reference_accuracy: None,
    };
    match run_convergence_study(&spec) {
        Ok(out) => report(
            &format!("allen-cahn MLSDC {nf}/{nc} p={p_order} guess={guess:?} base={base}"),
            &out,
            k_max,
        ),
        Err(e) => println!("== allen-cahn MLSDC {nf}/{nc} p={p_order} base={base}: ERROR {e}"),
    }
}

fn collocation_orders() {
    use sdc::collocation::CollocationSpec;
    use sdc::diagnostics::fit_order;
    use sdc::sweeper::solve_collocation;

    for (m, base, count) in [(3usize, 0.04, 6), (5usize, 0.05, 5)] {
        let p = Heat1dProblem::new(0.1, 4, 63).unwrap();
        let u0 = p.initial_value();
        let mut series = Vec::new();
        for &dt in &dt_list(base, count) {
            let spec = CollocationSpec::radau_right(m, 0.0, dt).unwrap();
            let u = solve_collocation(&p, &spec, &u0, 1e-13).unwrap();
            let tables = sdc::collocation::QuadratureTables::radau_right(m).unwrap();
            let mut exact = sdc::sweeper::NodeVector::zeros(m, 63);
            for (node, &tau) in tables.nodes().iter().enumerate() {
                exact
                    .node_mut(node)
                    .copy_from_slice(&p.exact_solution(tau * dt).unwrap());
            }
            series.push((dt, u.sup_distance(&exact)));
        }
        let pretty: Vec<String> = series.iter().map(|(d, e)| format!("{d:.4}:{e:.2e}")).collect();
        println!("heat collocation m={m}: {pretty:?}");
        let fit = fit_order(&series, 1e-13, None).unwrap();
        println!(
            "  slope {:.3} expected {} ({} pts, {} excl)",
            fit.slope,
            m + 1,
            fit.points_used,
            fit.excluded.len()
        );
    }

    let p = AuzingerProblem::new(-0.75, 3.0).unwrap();
    let m = 3;
    let mut series = Vec::new();
    for &dt in &dt_list(0.5, 6) {
        let spec = CollocationSpec::radau_right(m, 0.0, dt).unwrap();
        let u = solve_collocation(&p, &spec, &p.initial_value(), 1e-14).unwrap();
        let exact = p.exact_solution(dt).unwrap();
        series.push((dt, sdc::diagnostics::last_node_error(&u, &exact)));
    }
    let pretty: Vec<String> = series.iter().map(|(d, e)| format!("{d:.4}:{e:.2e}")).collect();
    println!("auzinger collocation last-node m={m}: {pretty:?}");
    let fit = fit_order(&series, 1e-13, None).unwrap();
    println!("  slope {:.3} expected {}", fit.slope, 2 * m);
}

fn main() {
    let section = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let t0 = std::time::Instant::now();
    match section.as_str() {
        "coll" => collocation_orders(),
        "heat-sdc" => {
            heat_sdc(255, 5, InitialGuess::Spread, 0.04, 6, 4);
            heat_sdc(255, 5, InitialGuess::Random { seed: 7 }, 0.04, 6, 4);
        }
        "heat-ml" => {
            heat_mlsdc(255, 127, 5, 8, InitialGuess::Spread, 0.06, 5, 3);
        }
        "heat-ml-deg" => {
            heat_mlsdc(15, 7, 5, 6, InitialGuess::Spread, 0.04, 5, 3);
            heat_mlsdc(255, 127, 5, 4, InitialGuess::Spread, 0.04, 5, 3);
            heat_mlsdc(255, 127, 5, 8, InitialGuess::Random { seed: 7 }, 0.04, 5, 3);
        }
        "heat-ml-deg2" => {
            heat_mlsdc(15, 7, 5, 6, InitialGuess::Spread, 0.01, 5, 3);
            heat_mlsdc(255, 127, 5, 4, InitialGuess::Spread, 0.005, 5, 3);
            heat_mlsdc(255, 127, 5, 4, InitialGuess::Spread, 0.001, 5, 3);
        }
        "auz-single" => {
            auzinger_sdc(TimeMode::SingleStep, InitialGuess::Spread, 0.125, 4, 3);
            auzinger_mlsdc(6, TimeMode::SingleStep, InitialGuess::Spread, 0.125, 4, 3);
            auzinger_mlsdc(6, TimeMode::SingleStep, InitialGuess::Random { seed: 7 }, 0.125, 4, 3);
            auzinger_mlsdc(2, TimeMode::SingleStep, InitialGuess::Spread, 0.125, 4, 3);
        }
        "auz-fixed" => {
            auzinger_sdc(TimeMode::FixedEnd(1.0), InitialGuess::Spread, 0.125, 4, 3);
            auzinger_mlsdc(6, TimeMode::FixedEnd(1.0), InitialGuess::Spread, 0.125, 4, 3);
            auzinger_mlsdc(
                6,
                TimeMode::FixedEnd(1.0),
                InitialGuess::Random { seed: 7 },
                0.125,
                4,
                3,
            );
            auzinger_mlsdc(2, TimeMode::FixedEnd(1.0), InitialGuess::Spread, 0.125, 4, 3);
        }
        "ac" => {
            allen_cahn_mlsdc(64, 32, 8, InitialGuess::Spread, 0.002, 4, 2);
            allen_cahn_mlsdc(16, 8, 8, InitialGuess::Spread, 0.002, 4, 2);
            allen_cahn_mlsdc(64, 32, 2, InitialGuess::Spread, 0.002, 4, 2);
            allen_cahn_mlsdc(64, 32, 8, InitialGuess::Random { seed: 7 }, 0.002, 4, 2);
        }
        other => println!("unknown section {other}"),
    }
    println!("elapsed: {:.1} s", t0.elapsed().as_secs_f64());
}
