use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ris_sim::harness::{
    coverage_sweep, generate_scene, generate_users, rate_sweep, CodebookConfig, PlacementContext, PlacementMethod,
    Purpose, ScenarioConfig, TrialSeed,
};
use ris_sim::placement::{build_candidate_set_tangent, CoverageEvaluator};
use ris_sim::protocol::{evaluate_plan, plan_all, LinkBudget, Scheme};
use ris_sim::scene::{Point2, Scene};

fn small() -> ScenarioConfig {
    let mut cfg = ScenarioConfig { codebook: CodebookConfig { bs: [8, 8], ris: [16, 16] }, ..Default::default() };
    cfg.sweep.trials = 4;
    cfg
}

#[test]
fn full_search_record_matches_pair_enumeration() {
    let mut cfg = small();
    cfg.sweep.ris_counts = vec![2];
    cfg.sweep.coverage_methods = vec![PlacementMethod::Proposed];
    let records = coverage_sweep(&cfg, 2).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        let scene = generate_scene(&cfg, TrialSeed::new(cfg.sweep.seed, r.trial)).unwrap();
        let set = build_candidate_set_tangent(&scene).unwrap();
        let eval = CoverageEvaluator::new(&scene, cfg.sweep.grid).unwrap();
        let pts: Vec<Point2> = set.candidates.iter().map(|c| c.position).collect();
        let mut best = eval.evaluate(&[]).unwrap().normalized_coverage;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                if pts[a] != pts[b] {
                    best = best.max(eval.evaluate(&[pts[a], pts[b]]).unwrap().normalized_coverage);
                }
            }
        }
        assert_eq!(r.coverage_norm, best, "trial {}", r.trial);
    }
}

/// Fraction of uniformly sampled free points seen by the BS or through an RIS.
fn sampled_coverage(scene: &Scene, ris: &[Point2], rng: &mut ChaCha8Rng, samples: usize) -> f64 {
    let bs = scene.bs_2d();
    let lit: Vec<Point2> = ris
        .iter()
        .flat_map(|&q| scene.footprint_sample_points(q).unwrap())
        .filter(|&r| !scene.segment_blocked(bs, r, None))
        .collect();
    let (mut free, mut seen) = (0usize, 0usize);
    while free < samples {
        let p = Point2::new(rng.random_range(0.0..scene.bounds.x), rng.random_range(0.0..scene.bounds.y));
        if scene.is_occupied(p) {
            continue;
        }
        free += 1;
        let visible = !scene.segment_blocked(bs, p, None) || lit.iter().any(|&r| !scene.segment_blocked(r, p, None));
        seen += usize::from(visible);
    }
    seen as f64 / free as f64
}

#[test]
fn raster_coverage_agrees_with_sampling() {
    let cfg = small();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for t in 0..4 {
        let seed = TrialSeed::new(3, t);
        let scene = generate_scene(&cfg, seed).unwrap();
        let ctx = PlacementContext::new(&cfg, &scene, &[PlacementMethod::Random]).unwrap();
        let placed = ctx.place(PlacementMethod::Random, 2, &mut seed.rng(Purpose::RandomPlacement)).unwrap();
        let sampled = sampled_coverage(&scene, &placed.positions, &mut rng, 20_000);
        assert!(
            (sampled - placed.normalized_coverage).abs() < 0.02,
            "trial {t}: {sampled} vs {}",
            placed.normalized_coverage
        );
    }
}

#[test]
fn recorded_rates_match_dense_zero_forcing() {
    let mut cfg = small();
    cfg.sweep.trials = 3;
    cfg.sweep.snr_db = vec![0.0, 20.0];
    cfg.sweep.rate_methods = vec![PlacementMethod::Proposed];
    let records = rate_sweep(&cfg, 1).unwrap();
    assert_eq!(records.len(), 3 * 2 * Scheme::ALL.len());
    let system = cfg.system();
    let bs_book = system.build_bs_codebook();
    for t in 0..3 {
        let seed = TrialSeed::new(cfg.sweep.seed, t);
        let scene = generate_scene(&cfg, seed).unwrap();
        let ctx = PlacementContext::new(&cfg, &scene, &[PlacementMethod::Proposed]).unwrap();
        let placed =
            ctx.place(PlacementMethod::Proposed, cfg.ris.count, &mut seed.rng(Purpose::RandomPlacement)).unwrap();
        let users = generate_users(&cfg, &scene, seed).unwrap();
        let drop = system.drop(&scene, &placed.positions, &users, &mut seed.rng(Purpose::Channel)).unwrap();
        let plans = plan_all(&drop, &system, &bs_book, &Scheme::ALL, &mut seed.rng(Purpose::RisPhases)).unwrap();
        for &snr in &cfg.sweep.snr_db {
            let budget = LinkBudget::from_snr_db(snr);
            for plan in &plans {
                let result = evaluate_plan(plan, &drop, budget).unwrap();
                let w: &DMatrix<Complex64> = &result.effective;
                let k = w.nrows();
                // Square and full rank here: ZF is the inverse with unit columns.
                let mut f = w.clone().try_inverse().expect("invertible effective channel");
                for mut c in f.column_iter_mut() {
                    let n = c.norm();
                    c /= Complex64::new(n, 0.0);
                }
                let g = w * &f;
                let oracle: f64 =
                    (0..k).map(|i| (1.0 + budget.power / k as f64 * g[(i, i)].norm_sqr() / budget.noise).log2()).sum();
                let rec = records
                    .iter()
                    .find(|r| r.trial == t && r.scheme == Some(plan.scheme) && r.snr_db == Some(snr))
                    .unwrap();
                let rate = rec.sum_rate.unwrap();
                assert!(
                    (rate - oracle).abs() < 1e-9 * oracle.max(1.0),
                    "trial {t} {} {snr} dB: {rate} vs {oracle}",
                    plan.scheme
                );
                assert!(rate >= 0.0);
            }
        }
    }
}

#[test]
fn coverage_records_are_bounded_and_complete() {
    let mut cfg = small();
    cfg.sweep.ris_counts = vec![0, 1, 2];
    let records = coverage_sweep(&cfg, 3).unwrap();
    assert_eq!(records.len(), 4 * 3 * cfg.sweep.coverage_methods.len());
    for r in &records {
        assert!((0.0..=1.0).contains(&r.coverage_norm));
    }
    // J = 0 rows agree across methods within a trial.
    for t in 0..4 {
        let zero: Vec<f64> =
            records.iter().filter(|r| r.trial == t && r.ris_count == 0).map(|r| r.coverage_norm).collect();
        assert!(zero.windows(2).all(|w| w[0] == w[1]));
    }
}
