use approx::assert_relative_eq;
use bcpep::algos::{build_am, build_cacd, build_ccd, build_custom, Schedule, StepRule, ThetaIndex};
use bcpep::bounds::sandwich_report;
use bcpep::expr::PointTag;
use bcpep::interp::{check_interpolable, ClassParams, PairLabel};
use bcpep::pep::{
    assemble, compile, solve_worst_case, ConstraintLabel, InitialCondition, PerformanceCriterion, SandwichTemplate,
};
use bcpep::solve::{parse_dump, verify_certificate, write_dump, InteriorPoint, SdpBackend, SolveOptions, Status};
use bcpep::witness::{reconstruct, validate_lower_bound, DEFAULT_RANK_TOL};
use bcpep::{PepProblem, Trajectory};

fn init(r: f64) -> InitialCondition<f64> {
    InitialCondition::Init { radius: r }
}

fn problem(t: Trajectory, l: f64, cond: InitialCondition<f64>) -> PepProblem {
    assemble(t, ClassParams::new(l).unwrap(), PerformanceCriterion::ObjectiveGap, cond).unwrap()
}

fn worst(pb: &PepProblem) -> f64 {
    let wc = solve_worst_case(pb, &InteriorPoint, &SolveOptions::default()).unwrap();
    let cert = verify_certificate(&wc.sdp, &wc.solution, 1e-6).unwrap();
    assert!(cert.pass, "{cert:?}");
    wc.value
}

/// Tight worst case of gradient descent with step 1/L after N steps.
fn gd_oracle(l: f64, r: f64, n: usize) -> f64 {
    l * r * r / (4.0 * n as f64 + 2.0)
}

#[test]
fn two_block_one_cycle_regression() {
    let pb = problem(build_ccd(2, 1, 0.5).unwrap(), 1.0, init(1.0));
    let start = std::time::Instant::now();
    let v = worst(&pb);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!((v - 0.25).abs() < 1e-6, "{v}");
}

#[test]
fn single_block_is_gradient_descent() {
    for n in 1..=5 {
        let v = worst(&problem(build_ccd(1, n, 1.0).unwrap(), 1.0, init(1.0)));
        assert!((v - gd_oracle(1.0, 1.0, n)).abs() < 1e-6, "N={n}: {v}");
    }
    let v = worst(&problem(build_ccd(1, 3, 0.5).unwrap(), 2.0, init(1.5)));
    assert!((v - gd_oracle(2.0, 1.5, 3)).abs() < 1e-5, "{v}");
}

#[test]
fn zero_steps_certificate_uses_one_pair() {
    for (l, r) in [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0)] {
        let pb = problem(build_ccd(2, 0, 0.5).unwrap(), l, init(r));
        let wc = solve_worst_case(&pb, &InteriorPoint, &SolveOptions::default()).unwrap();
        assert!((wc.value - l * r * r / 2.0).abs() < 1e-6);
        // The reverse pair (x0, x*) is also tight at the optimum, so strict
        // complementarity fails and its multiplier only decays like sqrt(mu).
        let lambda = wc.solution.multipliers.clone().unwrap();
        for (c, m) in pb.constraints.iter().zip(&lambda) {
            match c.label {
                ConstraintLabel::Interpolation(PairLabel { n: PointTag::Optimum, l: PointTag::Point(0) }) => {
                    assert!((m - 1.0).abs() < 1e-3, "{m}")
                }
                ConstraintLabel::Interpolation(_) => assert!(m.abs() < 1e-3, "{m}"),
                ConstraintLabel::Ball { .. } => assert!((m - l / 2.0).abs() < 1e-4, "{m}"),
            }
        }
        assert!(verify_certificate(&wc.sdp, &wc.solution, 1e-6).unwrap().pass);
    }
}

#[test]
fn homogeneous_in_smoothness_and_radius() {
    let h = 0.5;
    let base = worst(&problem(build_ccd(2, 3, h).unwrap(), 1.0, init(1.0)));
    let l2 = worst(&problem(build_ccd(2, 3, h / 2.0).unwrap(), 2.0, init(1.0)));
    let r2 = worst(&problem(build_ccd(2, 3, h).unwrap(), 1.0, init(2.0)));
    assert_relative_eq!(l2, 2.0 * base, max_relative = 1e-6);
    assert_relative_eq!(r2, 4.0 * base, max_relative = 1e-6);
}

#[test]
fn worst_cases_do_not_increase_with_cycles() {
    let ccd: Vec<f64> = (1..=4).map(|k| worst(&problem(build_ccd(2, k, 0.5).unwrap(), 1.0, init(1.0)))).collect();
    assert!(ccd.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{ccd:?}");
    let am: Vec<f64> = (1..=3).map(|k| worst(&problem(build_am(2, k).unwrap(), 1.0, init(1.0)))).collect();
    assert!(am.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{am:?}");
}

#[test]
fn radius_zero_gives_zero() {
    let v = worst(&problem(build_ccd(2, 2, 0.5).unwrap(), 1.0, init(0.0)));
    assert!(v.abs() < 1e-7);
}

#[test]
fn scaled_problem_doubles_and_still_certifies() {
    let sdp = compile(&problem(build_ccd(2, 2, 0.5).unwrap(), 1.0, init(1.0)));
    let one = InteriorPoint.solve(&sdp, &SolveOptions::default());
    let two = InteriorPoint.solve(&sdp.scaled(2.0), &SolveOptions::default());
    assert_eq!(two.status, Status::Optimal);
    assert_relative_eq!(two.primal_value, 2.0 * one.primal_value, max_relative = 1e-6);
    assert!(verify_certificate(&sdp.scaled(2.0), &two, 1e-6).unwrap().pass);
}

#[test]
fn dump_round_trip_of_compiled_problem() {
    let sdp = compile(&problem(build_cacd(2, 2, 1.0, ThetaIndex::Prev).unwrap(), 1.0, init(1.0)));
    let back = parse_dump(&write_dump(&sdp)).unwrap();
    assert_eq!(back, sdp);
}

#[test]
fn relabeled_sequences_agree() {
    let rule = StepRule::Cacd { lipschitz: 1.0, theta_index: ThetaIndex::Prev };
    let a = build_custom(&Schedule::custom(2, &[2, 1, 2, 1]).unwrap(), rule.clone()).unwrap();
    let b = build_custom(&Schedule::custom(2, &[1, 2, 1, 2]).unwrap(), rule).unwrap();
    let va = worst(&problem(a, 1.0, init(1.0)));
    let vb = worst(&problem(b, 1.0, init(1.0)));
    assert!((va - vb).abs() < 1e-5);
}

#[test]
fn sandwich_brackets_and_collapses_for_one_block() {
    let opts = SolveOptions::default();
    let template = SandwichTemplate {
        trajectory: build_ccd(2, 2, 0.5).unwrap(),
        criterion: PerformanceCriterion::ObjectiveGap,
        condition: init(1.0),
    };
    let rep = sandwich_report(&[1.0, 1.0], &template, &InteriorPoint, &opts).unwrap();
    assert!(rep.lower() <= rep.upper() + 1e-7);
    assert!(rep.beck.is_some());
    assert!(rep.upper() <= rep.beck.unwrap());

    let single = SandwichTemplate { trajectory: build_ccd(1, 2, 0.5).unwrap(), ..template };
    let rep = sandwich_report(&[1.5], &single, &InteriorPoint, &opts).unwrap();
    assert!((rep.lower() - rep.upper()).abs() < 1e-9);
}

#[test]
fn witness_attains_the_solved_value() {
    let pb = problem(build_ccd(2, 1, 0.5).unwrap(), 1.0, init(1.0));
    let wc = solve_worst_case(&pb, &InteriorPoint, &SolveOptions::default()).unwrap();
    let w = reconstruct(&wc.solution, &pb, DEFAULT_RANK_TOL).unwrap();
    assert!(check_interpolable(&w.with_optimum(), 1.0, 1e-6).unwrap().feasible);
    assert!((w.criterion - wc.value).abs() < 1e-5);
    // the factors reproduce the Gram matrices
    let layout = pb.layout();
    for (slot, atoms) in layout.atoms.iter().enumerate() {
        let block = bcpep::expr::BlockId::new(slot + 1);
        for (i, a) in atoms.iter().enumerate() {
            for (j, b) in atoms.iter().enumerate() {
                let u = w.atoms.coords(block, *a).unwrap();
                let v = w.atoms.coords(block, *b).unwrap();
                let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                assert!((dot - wc.solution.grams[slot][(i, j)]).abs() < 1e-6);
            }
        }
    }
    assert!(validate_lower_bound(&w, &pb, 1e-6).pass);
}

#[test]
fn accelerated_witness_replays() {
    let rule = StepRule::Cacd { lipschitz: 1.0, theta_index: ThetaIndex::Prev };
    let t = build_custom(&Schedule::custom(2, &[2, 1, 2, 1]).unwrap(), rule).unwrap();
    let pb = problem(t, 1.0, init(1.0));
    let wc = solve_worst_case(&pb, &InteriorPoint, &SolveOptions::default()).unwrap();
    let w = reconstruct(&wc.solution, &pb, DEFAULT_RANK_TOL).unwrap();
    let rep = validate_lower_bound(&w, &pb, 1e-6);
    assert!(rep.pass, "{rep:?}");
    assert!(rep.replay_error < 1e-8);
}
