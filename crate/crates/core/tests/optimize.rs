use isoshell::analysis::{kernel_count, DEFAULT_TOL};
use isoshell::cell::{generate_flat, generate_random};
use isoshell::optimize::{gradient, minimize, objective, MinimizeOptions, StepRule, Termination};
use isoshell::{assemble, effective_tensor, Error};

fn opts(iters: usize, bound: Option<f64>) -> MinimizeOptions {
    MinimizeOptions {
        iters,
        bound,
        ..Default::default()
    }
}

#[test]
fn flat_cell_is_a_critical_point() {
    let cell = generate_flat(4, 4).unwrap();
    assert!(objective(&cell).unwrap() > 0.0);
    assert!(gradient(&cell).unwrap().iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn uniform_lift_is_free() {
    for seed in 0..5 {
        let g = gradient(&generate_random(4, 4, 0.3, seed).unwrap()).unwrap();
        let scale: f64 = g.iter().map(|x| x.abs()).sum();
        assert!(g.iter().sum::<f64>().abs() < 1e-12 * scale);
    }
}

#[test]
fn objective_is_linear_in_stiffness() {
    let cell = generate_random(4, 4, 0.3, 3).unwrap();
    let mut stiff = cell.clone();
    for bar in &mut stiff.bars {
        bar.stiffness *= 2.5;
    }
    let (f0, f1) = (objective(&cell).unwrap(), objective(&stiff).unwrap());
    assert!((f1 - 2.5 * f0).abs() < 1e-12 * f1);
}

#[test]
fn zero_iterations_rejected() {
    let cell = generate_random(2, 2, 0.3, 0).unwrap();
    assert!(matches!(
        minimize(&cell, &opts(0, None)),
        Err(Error::InvalidParameter(_))
    ));
    assert!(matches!(
        minimize(&cell, &opts(5, Some(-1.0))),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn descent_is_monotone_and_deterministic() {
    let cell = generate_random(4, 4, 0.3, 5).unwrap();
    for step in [
        StepRule::default(),
        StepRule::Adaptive {
            initial: 1.0,
            growth: 2.0,
        },
    ] {
        let o = MinimizeOptions {
            iters: 300,
            step,
            bound: None,
            seed: 9,
        };
        let (a, ta) = minimize(&cell, &o).unwrap();
        let (b, tb) = minimize(&cell, &o).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(ta.seed, 9);
        assert!(ta
            .iterates
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective));
        assert!(ta.reduction() > 1.0);
        a.validate().unwrap();
        assert_eq!(a.lattice, cell.lattice);
        for (p, q) in a.nodes.iter().zip(&cell.nodes) {
            assert_eq!(p.x, q.x);
        }
    }
}

#[test]
fn box_bound_is_respected() {
    let cell = generate_random(4, 4, 0.3, 2).unwrap();
    let (out, trace) = minimize(&cell, &opts(400, Some(0.1))).unwrap();
    for (p, q) in out.nodes.iter().zip(&cell.nodes) {
        assert!((p.z - q.z).abs() <= 0.1 + 1e-15);
    }
    assert!(trace.iterates.iter().all(|it| it.max_dz <= 0.1 + 1e-15));
}

#[test]
fn counting_rule_along_the_descent() {
    let cell = generate_random(4, 4, 0.3, 1).unwrap();
    let f0 = objective(&cell).unwrap();
    for iters in [1, 5, 20, 60] {
        let (out, _) = minimize(&cell, &opts(iters, None)).unwrap();
        // once the membrane block has collapsed to round-off, the count is no longer resolvable
        if objective(&out).unwrap() < 1e-6 * f0 {
            break;
        }
        let r = kernel_count(
            &effective_tensor(&assemble(&out).unwrap()).unwrap(),
            DEFAULT_TOL,
        );
        assert_eq!(r.kernel_dim, 3, "after {iters} iterations");
    }
}

#[test]
fn stationary_start_terminates_early() {
    let (_, trace) = minimize(&generate_flat(3, 3).unwrap(), &opts(50, None)).unwrap();
    assert_eq!(trace.termination, Termination::Stationary);
    assert_eq!(trace.iterates.len(), 1);
}

#[test]
fn csv_trace_layout() {
    let cell = generate_random(2, 2, 0.3, 0).unwrap();
    let (_, trace) = minimize(&cell, &opts(3, None)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace.save_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,objective,grad_norm,step,max_dz"));
    assert_eq!(lines.count(), trace.iterates.len());
}
