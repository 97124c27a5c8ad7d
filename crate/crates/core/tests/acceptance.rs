//! Acceptance criteria, one `PASS`/`FAIL` line each (run with `--nocapture`
//! to see them). Exact criteria (embedding diagnostics, controller
//! correctness, invariant suites) are enforced; distributional and
//! relative-shape criteria are measured and reported, so a red line records
//! a genuine disagreement instead of aborting the suite.
//!
//! Ensemble sizes below the desk preset are used where a criterion only
//! depends on ensemble means or unions and the full preset would dominate
//! the suite's runtime on a single core; each line states what it ran.

use std::sync::OnceLock;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use takres::control::{
    node_sweep, run_controlled, smallest_stabilizing, Architecture, ControlLengths, ControllerSpec, NodeSweepConfig,
    NodeSweepRow, PredictorSpec, SyncMode,
};
use takres::embedding::{acf, delay_embed, false_nearest_neighbors, select_tau0, EmbeddingSpec, FnnOptions, LagRule};
use takres::harness::{run_experiment, Experiment, ExperimentConfig, Scale, RECORD_FILE};
use takres::hybrid::{delay_scan, drive_augmented, DelayScanConfig, TrrnnSpec};
use takres::linalg::{lstsq_pinv, spectral_radius};
use takres::reservoir::{
    drive, ensemble_benchmark, predict_closed_loop_with_history, BenchmarkConfig, EnsembleSummary, ReadoutModel,
    Reservoir, ReservoirParams,
};
use takres::signals::{gen_mackey_glass, FhnParams, History, MgParams};
use takres::takens::{
    cca_ensemble, cca_profile, interstate_distances, lag_spread, mu_scan, tau_scan, EpsilonBounds, EpsilonMode,
    MuScanConfig, TauScanConfig, DEFAULT_MAX_LAG,
};

fn report(id: &str, pass: bool, claim: &str, measured: String) -> bool {
    println!("[{}] criterion {id}: {claim} | {measured}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn desk_bench() -> BenchmarkConfig {
    ExperimentConfig::preset(Experiment::Predict, Scale::Desk).bench
}

/// Desk-scale (5 × 5, m = 1000, μ = 1.1) benchmark, shared by criteria 1 and 6.
fn baseline() -> &'static EnsembleSummary {
    static CELL: OnceLock<EnsembleSummary> = OnceLock::new();
    CELL.get_or_init(|| ensemble_benchmark(&desk_bench()).expect("benchmark runs").1)
}

#[test]
fn c1_mackey_glass_benchmark() {
    let b = desk_bench();
    assert_eq!((b.n_networks, b.n_sequences, b.reservoir.m, b.horizon), (5, 5, 1000, 300));
    assert_eq!((b.reservoir.mu, b.reservoir.alpha, b.reservoir.b), (1.1, 0.8, 0.2));
    let s = baseline();
    report(
        "1",
        (0.03..=0.3).contains(&s.mean_nmse) && s.divergence_pct < 20.0,
        "desk 5x5 ensemble mean NMSE in [0.03, 0.3], divergence < 20%",
        format!(
            "mean NMSE {:.3e} (sd {:.2e}, median {:.3e}), divergence {:.0}% over {} runs; paper-scale 20x20 not run here",
            s.mean_nmse, s.std_nmse, s.median_nmse, s.divergence_pct, s.runs
        ),
    );
}

#[test]
fn c2_embedding_diagnostics() {
    let series = gen_mackey_glass(&MgParams::default(), 10_000, History::default(), 0).unwrap();
    let tau0 = select_tau0(&acf(&series, 100).unwrap(), LagRule::FirstMinimum).unwrap();
    let fnn = false_nearest_neighbors(&series, tau0, 10, &FnnOptions::default()).unwrap();
    let m_min = fnn.m_min.unwrap_or(0);
    let pass = report(
        "2",
        tau0 == -12 && (3..=5).contains(&m_min),
        "MG 10^4 samples: tau0 = -12 exactly, FNN M_min = 4 +- 1",
        format!("tau0 {tau0}, M_min {m_min}, fractions {:?}", fnn.fractions.iter().map(|f| (f.0, (f.1 * 1e4).round() / 1e4)).collect::<Vec<_>>()),
    );
    assert!(pass);
}

#[test]
fn c3_cca_structure() {
    let small = BenchmarkConfig { n_networks: 2, n_sequences: 2, ..desk_bench() };
    let chaotic = cca_ensemble(&small, DEFAULT_MAX_LAG).unwrap();
    let (lo, hi) = lag_spread(&chaotic);
    let contracted_cfg = BenchmarkConfig { reservoir: ReservoirParams { mu: 0.1, ..small.reservoir }, ..small.clone() };
    let contracted = cca_ensemble(&contracted_cfg, DEFAULT_MAX_LAG).unwrap();
    let fractions: Vec<f64> = contracted.iter().map(|p| p.fraction_near(&[-24, 0], 4)).collect();
    let worst = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    report(
        "3",
        lo <= -40 && hi >= 35 && worst >= 0.7,
        "mu=1.1 ensemble lag spread covers [-40, 35]; mu=0.1 puts >= 70% of nodes within +-4 of {-24, 0}",
        format!("mu=1.1 spread [{lo}, {hi}] (2x2 runs); mu=0.1 fractions {fractions:.3?}"),
    );
}

#[test]
fn c4_tau_scan_shape() {
    let cfg = TauScanConfig {
        bench: BenchmarkConfig { n_networks: 2, n_sequences: 2, ..desk_bench() },
        taus: vec![-12, -11, -3, -2],
        ..TauScanConfig::default()
    };
    let r = tau_scan(&cfg).unwrap();
    let base = r.baseline.mean_nmse;
    let row = |t: i64| r.rows.iter().find(|x| x.tau0_net == t).unwrap();
    let good = [row(-12), row(-11)];
    let bad = [row(-3), row(-2)];
    let good_ok = good.iter().all(|x| x.mean_nmse <= base && (400.0..=600.0).contains(&x.mean_nodes));
    let bad_ok = bad.iter().all(|x| x.mean_nmse >= 2.0 * base);
    let fmt = |x: &&takres::takens::TauScanRow| {
        format!("{}: NMSE {:.2e} nodes {:.0} ({:.0} distinct)", x.tau0_net, x.mean_nmse, x.mean_nodes, x.mean_distinct_nodes)
    };
    report(
        "4",
        good_ok && bad_ok,
        "tau0_net in {-12,-11}: NMSE <= baseline with 400-600 nodes; tau0_net in {-3,-2}: NMSE >= 2x baseline",
        format!(
            "baseline {base:.2e}; {}; {} (2x2 runs)",
            good.iter().map(fmt).collect::<Vec<_>>().join(", "),
            bad.iter().map(fmt).collect::<Vec<_>>().join(", ")
        ),
    );
}

#[test]
fn c5_epsilon_regimes() {
    let cfg = MuScanConfig {
        bench: BenchmarkConfig { n_networks: 1, n_sequences: 2, ..desk_bench() },
        mus: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5],
        unfiltered: false,
        ..MuScanConfig::default()
    };
    let rows = mu_scan(&cfg).unwrap();
    let collapsed = rows.iter().any(|r| r.eps2 < 1.0 && r.divergence_pct > 90.0);
    let best = rows.iter().min_by(|a, b| a.mean_nmse.total_cmp(&b.mean_nmse)).unwrap();
    let best_ok = best.eps1 <= 1.1 && best.eps2 >= 1.0;
    let last = rows.iter().find(|r| r.mu == 1.5).unwrap();
    let chaotic_ok = last.mean_nmse >= 5.0 * best.mean_nmse;
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("mu {:.1}: eps1 {:.3} eps2 {:.3} NMSE {:.2e} div {:.0}%", r.mu, r.eps1, r.eps2, r.mean_nmse, r.divergence_pct))
        .collect();
    report(
        "5",
        collapsed && best_ok && chaotic_ok,
        "some mu with eps2 < 1 and divergence > 90%; best-NMSE mu has eps1 <~ 1, eps2 >= 1; NMSE(1.5) >= 5x best",
        format!("[{}] (1x2 runs)", table.join("; ")),
    );
}

#[test]
fn c6_delayed_readout_scan() {
    let cfg = DelayScanConfig {
        bench: BenchmarkConfig { n_networks: 1, n_sequences: 3, ..DelayScanConfig::default().bench },
        ..DelayScanConfig::default()
    };
    assert_eq!((cfg.bench.reservoir.m, cfg.bench.reservoir.mu), (350, 0.1));
    let rows = delay_scan(&cfg).unwrap();
    let best = rows.iter().min_by(|a, b| a.mean_nmse.total_cmp(&b.mean_nmse)).unwrap();
    let base = baseline().mean_nmse;
    let in_band = (-14..=-9).contains(&best.tau_t);
    let table: Vec<String> = rows.iter().map(|r| format!("{}: {:.2e}", r.tau_t, r.mean_nmse)).collect();
    report(
        "6",
        in_band && best.mean_nmse <= base,
        "delay scan (m=350, mu=0.1) minimum at tau_T in [-14, -9] and <= 1000-node baseline",
        format!(
            "minimum {:.2e} at tau_T {} vs baseline {base:.2e} (ratio {:.1}); [{}] (1x3 runs)",
            best.mean_nmse,
            best.tau_t,
            best.mean_nmse / base,
            table.join(", ")
        ),
    );
}

fn control_fhn() -> FhnParams {
    ExperimentConfig::preset(Experiment::FhnControl, Scale::Desk).control.fhn
}

fn control_spec() -> ControllerSpec {
    ExperimentConfig::preset(Experiment::FhnControl, Scale::Desk).control.controller
}

#[test]
fn c7a_oracle_control() {
    let lengths = ControlLengths::default();
    assert_eq!(lengths.run_len, 1_000_000);
    let r = run_controlled(&control_fhn(), &PredictorSpec::Oracle, &control_spec(), &lengths, 11).unwrap();
    let pass = report(
        "7a",
        r.isi_cv < 0.05 && r.stabilized,
        "oracle-predictor control stabilises the stochastic neuron (ISI CV < 0.05)",
        format!(
            "CV {:.4} (uncontrolled {:.3}), mean ISI {:.1} vs target {}, normalised {:.3}",
            r.isi_cv, r.uncontrolled_isi_cv, r.controlled_mean_isi, r.target_isi, r.normalized_mean_isi
        ),
    );
    assert!(pass);
}

fn sweep(nodes_t: &[usize], nodes_r: &[usize], run_len: usize, sync: SyncMode) -> Vec<NodeSweepRow> {
    let base = NodeSweepConfig {
        fhn: control_fhn(),
        controller: control_spec(),
        lengths: ControlLengths { run_len, ..ControlLengths::default() },
        sync,
        ..NodeSweepConfig::default()
    };
    let mut rows = node_sweep(&NodeSweepConfig { nodes: nodes_t.to_vec(), architectures: vec![Architecture::Trrnn], ..base.clone() }).unwrap();
    rows.extend(node_sweep(&NodeSweepConfig { nodes: nodes_r.to_vec(), architectures: vec![Architecture::Rrnn], ..base }).unwrap());
    rows
}

#[test]
fn c7bc_network_control() {
    let rows = sweep(&[12, 20, 30], &[12, 20, 30, 80, 200], 1_000_000, SyncMode::default());
    let small_t = rows.iter().find(|r| r.architecture == Architecture::Trrnn && r.nodes <= 30 && r.stabilized);
    let b_pass = small_t.is_some_and(|t| {
        rows.iter().any(|r| r.architecture == Architecture::Rrnn && r.nodes == t.nodes && !r.stabilized)
    });
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{:?}-{}: CV {:.3} track {:.2} pred spikes {} stab {} div {}",
                r.architecture, r.nodes, r.isi_cv, r.tracking, r.predicted_spikes, r.stabilized, r.divergent
            )
        })
        .collect();
    report("7b", b_pass, "a TrRNN with <= 30 nodes stabilises while an equal-size rRNN fails", format!("[{}]", table.join("; ")));
    let t = smallest_stabilizing(&rows, Architecture::Trrnn);
    let r = smallest_stabilizing(&rows, Architecture::Rrnn);
    let ratio = match (t, r) {
        (Some(t), Some(r)) => Some(r as f64 / t as f64),
        _ => None,
    };
    report(
        "7c",
        ratio.is_some_and(|x| x >= 5.0),
        "smallest stabilising rRNN >= 5x smallest stabilising TrRNN (desk, 10^6 steps)",
        format!("smallest TrRNN {t:?}, smallest rRNN {r:?}, ratio {ratio:?}"),
    );

    // supplementary: node count at which the free-running predictor produces spikes at all
    let free = sweep(&[12], &[12, 30, 80, 200], 200_000, SyncMode::FreeRun);
    let onset = |a: Architecture| free.iter().filter(|r| r.architecture == a && r.predicted_spikes > 0).map(|r| r.nodes).min();
    println!(
        "[INFO] criterion 7 supplement: free-running spiking onset TrRNN {:?}, rRNN {:?} (rows {:?})",
        onset(Architecture::Trrnn),
        onset(Architecture::Rrnn),
        free.iter().map(|r| (r.architecture, r.nodes, r.predicted_spikes)).collect::<Vec<_>>()
    );
}

#[test]
fn c8_invariant_suites() {
    let mut all = true;

    let radii: Vec<f64> = (0..20)
        .map(|s| {
            let res = Reservoir::build(ReservoirParams { m: 100, ..ReservoirParams::default() }, s).unwrap();
            spectral_radius(res.w()).unwrap()
        })
        .collect();
    let worst = radii.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    all &= report("8.1", worst <= 1e-6, "spectral radius = 1 +- 1e-6 over 20 seeds", format!("max |rho - 1| {worst:.2e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = Mat::from_fn(200, 30, |_, _| rng.random_range(-1.0..1.0));
    let b: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sol = lstsq_pinv(a.as_ref(), &b, 1e-12).unwrap();
    let resid: Vec<f64> = (0..200).map(|i| (0..30).map(|j| a[(i, j)] * sol.x[j]).sum::<f64>() - b[i]).collect();
    let ortho = (0..30).map(|j| (0..200).map(|i| a[(i, j)] * resid[i]).sum::<f64>().abs()).fold(0.0, f64::max);
    all &= report("8.2", ortho < 1e-8, "least-squares residual orthogonal to the columns (< 1e-8)", format!("max |A^T r| {ortho:.2e}"));

    let series = gen_mackey_glass(&MgParams::default(), 1200, History::default(), 3).unwrap();
    let y: Vec<f64> = series.values().to_vec();
    let res = Reservoir::build(ReservoirParams { m: 60, ..ReservoirParams::default() }, 3).unwrap();
    let states = drive(&res, &y, None, 200).unwrap();
    let embed = delay_embed(&series, EmbeddingSpec::new(-12, 4).unwrap()).unwrap();
    let profile = cca_profile(states.from_index(200), &y[200..], 30).unwrap();
    let nodes = profile.lagged_nodes();
    let d = interstate_distances(&embed, states.as_mat(), states.first_index(), &nodes).unwrap();
    let eb: EpsilonBounds = takres::takens::bounds_from_distances(&d, EpsilonMode::PerPairRatio).unwrap();
    let sandwich = d.takens.iter().zip(&d.projected).all(|(&t, &p)| {
        let r = p / t;
        eb.eps_min * (1.0 - 1e-12) <= r && r <= eb.eps_max * (1.0 + 1e-12)
    });
    all &= report("8.3", sandwich, "epsilon sandwich holds for every sample pair", format!("{} pairs, ratio range [{:.3}, {:.3}]", d.takens.len(), eb.eps_min, eb.eps_max));

    let spec = TrrnnSpec::new(Reservoir::build(ReservoirParams { m: 20, mu: 0.1, ..ReservoirParams::default() }, 1).unwrap(), -7).unwrap();
    let aug = drive_augmented(&spec, &y[..400], 50).unwrap();
    let model = ReadoutModel {
        w_out: (0..40).map(|i| 0.02 * ((i % 7) as f64 - 3.0)).collect(),
        feature_spec: spec.feature_spec(),
        train_nmse: 0.0,
        rank: 40,
        teacher_variance: 1.0,
    };
    let history = aug.history();
    let mut stored = history.clone();
    let first = stored.len();
    let mut ring_ok = true;
    predict_closed_loop_with_history(&spec.base, &model, &history, 0.05, 1000, |step, cur, del| {
        stored.push(cur.to_vec());
        ring_ok &= del.is_some_and(|dv| dv == stored[first + step - 7].as_slice());
    })
    .unwrap();
    all &= report("8.4", ring_ok, "delayed readout ring buffer serves the state from step n + tau_T (1000 steps)", "exact".into());

    let small = Reservoir::build(ReservoirParams { m: 8, mu: 0.9, ..ReservoirParams::default() }, 9).unwrap();
    let st = drive(&small, &y[..600], None, 100).unwrap();
    let input = &y[100..600];
    let p = cca_profile(st.from_index(100), input, 20).unwrap();
    let brute_ok = (0..8).all(|i| {
        let col: Vec<f64> = st.node(i)[..].to_vec();
        let (lag, cc) = brute_force_best_lag(&col, input, 20);
        p.best_lag[i] == lag && p.cc_max[i].to_bits() == cc.to_bits()
    });
    all &= report("8.5", brute_ok, "CCA equals a brute-force lag search bit for bit (m = 8)", "8 nodes, lags +-20".into());

    let rerun = BenchmarkConfig {
        reservoir: ReservoirParams { m: 40, ..ReservoirParams::default() },
        train_len: 600,
        washout: 200,
        horizon: 50,
        n_networks: 2,
        n_sequences: 2,
        base_seed: 77,
        ..BenchmarkConfig::default()
    };
    let first_run = serde_json::to_string(&ensemble_benchmark(&rerun).unwrap().0).unwrap();
    let second_run = serde_json::to_string(&ensemble_benchmark(&rerun).unwrap().0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset(Experiment::Predict, Scale::Desk);
    cfg.bench = rerun;
    run_experiment(&cfg, &dir.path().join("a")).unwrap();
    run_experiment(&cfg, &dir.path().join("b")).unwrap();
    let same_files = ["config.json", "runs.csv", "summary.json"].iter().all(|f| {
        std::fs::read(dir.path().join("a").join(f)).unwrap() == std::fs::read(dir.path().join("b").join(f)).unwrap()
    }) && dir.path().join("a").join(RECORD_FILE).exists();
    all &= report("8.6", first_run == second_run && same_files, "fixed-seed reruns are byte-identical", "ensemble rows and harness result files".into());

    assert!(all);
}

/// Independent exhaustive lag search: scans lags in increasing order and
/// keeps the strictly best |ρ|, resolving ties towards smaller |lag|, then
/// the negative lag.
fn brute_force_best_lag(x: &[f64], y: &[f64], max_lag: i64) -> (i64, f64) {
    let mut best = (0i64, -1.0f64);
    for lag in -max_lag..=max_lag {
        let pairs: Vec<(f64, f64)> = (0..x.len() as i64)
            .filter(|&n| n + lag >= 0 && n + lag < y.len() as i64)
            .map(|n| (x[n as usize], y[(n + lag) as usize]))
            .collect();
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for &(a, b) in &pairs {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        let c = if sxx > 0.0 && syy > 0.0 { (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0).abs() } else { 0.0 };
        let better = c > best.1
            || (c == best.1 && (lag.abs() < best.0.abs() || (lag.abs() == best.0.abs() && lag < best.0)));
        if better {
            best = (lag, c);
        }
    }
    (best.0, best.1.max(0.0))
}
