use statrs::distribution::{ContinuousCDF, StudentsT};

use rebuild_core::agents::AgentKind;
use rebuild_core::bench::{compare_algorithms, emit_report, parse_summary, BenchConfig};
use rebuild_core::planner::six_unit_instance;

/// Two-sided p-value of the least-squares slope of `y` against its index.
fn slope_p_value(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / n;
    let sxx: f64 = (0..y.len()).map(|i| (i as f64 - mean_x).powi(2)).sum();
    let sxy: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 - mean_x) * (v - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (v - intercept - slope * i as f64).powi(2))
        .sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let t = slope / se;
    let dist = StudentsT::new(0.0, 1.0, n - 2.0).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[test]
fn five_algorithms_on_the_six_unit_city() {
    let ds = six_unit_instance();
    let config = BenchConfig {
        episodes: 2000,
        seeds: vec![0, 1, 2],
        ..Default::default()
    };
    let report = compare_algorithms(&ds, &config).unwrap();
    assert!(!report.any_diverged());
    assert_eq!(report.summary.len(), 5);
    assert_eq!(report.runs.len(), 15);

    let ddqn = report.row(AgentKind::Ddqn).unwrap();
    let random = report.row(AgentKind::Random).unwrap();
    assert!(ddqn.final_reward > random.final_reward, "{ddqn:?} vs {random:?}");

    for run in report.runs.iter().filter(|r| r.algorithm.is_learning()) {
        assert!(
            run.final_reward >= 0.95 * run.first100_reward,
            "{} seed {}: {} < {}",
            run.algorithm,
            run.seed,
            run.final_reward,
            run.first100_reward
        );
    }

    for run in report.runs.iter().filter(|r| r.algorithm == AgentKind::Random) {
        let rewards: Vec<f64> = run.curve.iter().map(|e| e.reward).collect();
        let p = slope_p_value(&rewards);
        assert!(p > 0.01, "random curve trends (seed {}, p = {p})", run.seed);
    }

    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    let curves = files
        .iter()
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("curve-"))
        .count();
    assert_eq!(curves, 15);
    let text = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(parse_summary(&text).unwrap(), report.summary);
    let curve = std::fs::read_to_string(dir.path().join("curve-ddqn-0.csv")).unwrap();
    assert!(curve.starts_with("episode,reward,moving_avg,epsilon,loss\n"));
    assert_eq!(curve.lines().count(), 2001);
}
