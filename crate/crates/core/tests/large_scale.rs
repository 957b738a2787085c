use socp_phase::instance_gen::{generate_instance, generate_surrogate_draw};
use socp_phase::phase_curves::design_from_rho;
use socp_phase::predictor_signed::feasibility_breaking_point;
use socp_phase::socp::solve_socp;
use socp_phase::surrogate::{detect_unbounded, solve_surrogate_general, SurrogateStatus};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn surrogate_optimum_tracks_socp_objective() {
    let design = design_from_rho(0.5, 2.0, 1.0, false).unwrap();
    let xi: Vec<f64> = (0..50)
        .map(|seed| {
            let n = 2000;
            let k = (design.beta_w * n as f64).round() as usize;
            let draw = generate_surrogate_draw(n, k, n / 2, 500 + seed).unwrap();
            let root = (n as f64).sqrt();
            solve_surrogate_general(&draw, 1.0, 1.0 / root, design.r_opt_sc * root).unwrap().xi / root
        })
        .collect();
    let f: Vec<f64> = (0..50)
        .map(|seed| {
            let n = 800;
            let k = (design.beta_w * n as f64).round() as usize;
            let root = (n as f64).sqrt();
            let inst = generate_instance(n, n / 2, k, 1.0, 1.0 / root, 900 + seed).unwrap();
            solve_socp(&inst, design.r_opt_sc * root, 1e-6).unwrap().f_obj / root
        })
        .collect();
    let (a, b) = (mean(&xi), mean(&f));
    assert!((a - b).abs() <= 0.05 * b.abs(), "surrogate {a}, socp {b}");
}

#[test]
fn error_norm_concentrates() {
    let design = design_from_rho(0.5, 2.0, 1.0, false).unwrap();
    let n = 2000;
    let k = (design.beta_w * n as f64).round() as usize;
    let root = (n as f64).sqrt();
    let w: Vec<f64> = (0..100)
        .map(|seed| {
            let draw = generate_surrogate_draw(n, k, n / 2, seed).unwrap();
            solve_surrogate_general(&draw, 1.0, 1.0 / root, design.r_opt_sc * root).unwrap().w_norm
        })
        .collect();
    let m = mean(&w);
    let sd = (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 99.0).sqrt();
    assert!(sd <= 0.05 * m, "mean {m}, sd {sd}");
}

#[test]
fn unbounded_below_breaking_point_at_large_n() {
    let design = design_from_rho(0.7, 3.0, 1.0, true).unwrap();
    let x_break = feasibility_breaking_point(0.7, design.beta_w, 1.0, design.r_opt_sc).unwrap().unwrap().x_break_sc;
    let n = 10_000;
    let k = (design.beta_w * n as f64).round() as usize;
    let root = (n as f64).sqrt();
    let unbounded = (0..20)
        .filter(|&seed| {
            let draw = generate_surrogate_draw(n, k, 7000, seed).unwrap();
            detect_unbounded(&draw, 1.0, 0.6 * x_break / root, design.r_opt_sc * root).status == SurrogateStatus::Unbounded
        })
        .count();
    assert!(unbounded >= 18, "{unbounded} of 20");
}
