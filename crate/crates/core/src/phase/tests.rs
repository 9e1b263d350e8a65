use super::*;

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

fn grid_of(json: &str) -> PhaseGrid {
    run_grid(&config(json), 2).unwrap()
}

#[test]
fn kinematic_subspace_law() {
    // K a 4-dim subspace of R^10 mapped into R^6, L an l-dim subspace
    let g = grid_of(
        r#"{"experiment":"kinematic","cone_K":"subspace:10:4","n":10,"m":6,
            "grid":[0,1,2,3,4,5,6],"trials":20,"seed":3}"#,
    );
    for r in &g.rows {
        let l = r.control as usize;
        // dim GK = min(4, 6) = 4
        let expected = if l + 4 > 6 { r.trials } else { 0 };
        assert_eq!(r.successes, expected, "l = {l}");
    }
}

#[test]
fn kinematic_full_l_always_hits() {
    let g = grid_of(
        r#"{"experiment":"kinematic","cone_K":"orthant:8","cone_L":"full:{m}","axis":"m","n":8,
            "grid":[2,5,9],"trials":20,"seed":4}"#,
    );
    assert!(g.rows.iter().all(|r| r.successes == r.trials));
}

#[test]
fn preimage_subspace_law() {
    // K = 3-dim subspace of R^8, L = {0}: G^{-1}L = null(G) of dim 8 - m
    let g = grid_of(
        r#"{"experiment":"preimage","cone_K":"subspace:8:3","n":8,
            "grid":[1,3,4,5,6,8],"trials":20,"seed":5}"#,
    );
    for r in &g.rows {
        let m = r.control as usize;
        let expected = if 3 + 8usize.saturating_sub(m) > 8 { r.trials } else { 0 };
        assert_eq!(r.successes, expected, "m = {m}");
    }
}

#[test]
fn escape_subspace_law_and_full_null_space() {
    let g = grid_of(
        r#"{"experiment":"escape","cone_K":"subspace:9:4","n":9,
            "grid":[1,3,5,6,9],"trials":20,"seed":6}"#,
    );
    for r in &g.rows {
        let l = r.control as usize;
        assert_eq!(r.successes, if 4 + l > 9 { r.trials } else { 0 }, "l = {l}");
    }
}

#[test]
fn logistic_single_sample_never_exists() {
    let g = grid_of(
        r#"{"experiment":"logistic","cone_K":"full:5","n":5,"grid":[1,2,30],"trials":20,"seed":7}"#,
    );
    assert_eq!(g.rows[0].successes, 0);
    assert_eq!(g.rows[1].successes, 0);
    assert!(g.rows[2].successes >= 18);
}

#[test]
fn cp_columns_sum_to_one() {
    let g = grid_of(
        r#"{"experiment":"cp","cone_K":"orthant:10","n":10,"b_mode":"unit","x_spec":"neg-ones",
            "grid":[2,5,10],"trials":20,"seed":8}"#,
    );
    for r in &g.rows {
        let t = r.cp.unwrap();
        assert_eq!(t.infeasible + t.bounded + t.unbounded, r.trials);
        assert_eq!(t.bounded, r.successes);
        // K_x = {0}: never unbounded
        assert_eq!(t.unbounded, 0);
    }
    let csv = g.to_csv();
    assert!(csv.lines().nth(2).unwrap().ends_with("p_infeasible,p_bounded,p_unbounded"));
}

#[test]
fn output_independent_of_workers() {
    let c = config(
        r#"{"experiment":"escape","cone_K":"orthant:12","n":12,"grid":[2,6,10],"trials":20,"seed":9}"#,
    );
    let a = run_grid(&c, 1).unwrap().to_csv();
    let b = run_grid(&c, 4).unwrap().to_csv();
    assert_eq!(a, b);
    let other = config(
        r#"{"experiment":"escape","cone_K":"orthant:12","n":12,"grid":[2,6,10],"trials":20,"seed":10}"#,
    );
    assert_ne!(run_grid(&other, 1).unwrap().to_csv(), a);
}

#[test]
fn csv_layout() {
    let c = config(r#"{"experiment":"escape","cone_K":"orthant:6","n":6,"grid":[1,2,3,4,5,6],"trials":20,"seed":1}"#);
    let g = run_grid(&c, 1).unwrap();
    let csv = g.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    let hash = c.hash().unwrap();
    assert_eq!(lines[0], format!("# conelab v{} seed=1 rng=chacha12-ziggurat config={hash}", grid::VERSION));
    assert!(lines[1].starts_with("# resolved={"));
    assert_eq!(lines[2], "control,trials,successes,p_hat,ci_lo,ci_hi");
    assert_eq!(lines.len(), 3 + 6 + 1);
    assert!(lines[9].starts_with("# theta0="));
    assert!(lines[3].starts_with("1,20,"));
}

#[test]
fn local_dm_full_cone_is_chi() {
    // K = R^n, L = R^m, k = 1: h(x) = |G^T x| ~ chi_n, so ratios vs sqrt(n) sit near 1
    let r = run_local_dm_experiment(
        &config(
            r#"{"experiment":"local_dm","cone_K":"full:400","n":400,"m":5,"l":5,"k":1,
                "directions":5,"trials":20,"seed":2}"#,
        ),
        1,
    )
    .unwrap();
    assert_eq!(r.target_radius, 20.0);
    assert!(r.rows.iter().all(|row| (row.median_ratio - 1.0).abs() < 0.15));
    assert!(r.coverage > 0.95);
}

#[test]
fn concentration_full_cone_median() {
    // h^2 = |G^T e_1|^2 ~ chi^2_n with median close to n - 2/3
    let s = run_support_concentration(
        &config(r#"{"experiment":"dm_concentration","cone_K":"full:30","n":30,"m":4,"l":4,"trials":400,"seed":3}"#),
        1,
    )
    .unwrap();
    assert_eq!(s.target, 30.0);
    assert!((s.median_h2 - (30.0 - 2.0 / 3.0)).abs() < 2.0, "{}", s.median_h2);
    assert!(s.ok);
}

#[test]
fn concentration_trivial_cone_is_zero() {
    let s = run_support_concentration(
        &config(r#"{"experiment":"dm_concentration","cone_K":"trivial:6","n":6,"m":3,"l":2,"trials":20,"seed":3}"#),
        1,
    )
    .unwrap();
    assert!(s.h.iter().all(|h| *h == 0.0));
}

#[test]
fn subcommand_mismatch_rejected() {
    let c = config(r#"{"experiment":"escape","cone_K":"orthant:6","n":6,"grid":[1],"trials":20,"seed":1}"#);
    assert!(run_logistic_experiment(&c, 1).is_err());
    assert!(run_escape_experiment(&c, 0).is_err());
}
