//! Acceptance gate for the laboratory. One test per shipped guarantee, each
//! printing a single pass/fail line with its measured margin.
//!
//! The random-scenario criteria share one deterministic builder, so the
//! trace-identity checks inspect exactly the traces whose reconstruction the
//! first criterion certified. Byte-identical rerun behaviour of the
//! command-line tool has its own acceptance test in the cli crate.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{array, Array2};
use rfedit_core::baselines::{flowedit_detailed, midpoint_invert, NoiseMode};
use rfedit_core::dna::{dna_invert, reconstruct, DnaTrace};
use rfedit_core::flow::{interpolate_latent, Schedule};
use rfedit_core::harness::presets::{standard_edit_config, standard_recon_config};
use rfedit_core::harness::{run_edit, run_eta_sweep, run_reconstruction};
use rfedit_core::math::{RngStream, SpdMatrix};
use rfedit_core::mvg::{mvg_edit, EditConfig};
use rfedit_core::velocity::{
    mixture_velocity, Condition, GaussianMixture, MixtureField, VelocityField,
};
use rfedit_core::Vector;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn l2(v: &Vector) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sem(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

struct RandomScenario {
    field: MixtureField,
    cond: Condition,
    sched: Schedule,
    image: Vector,
    trace: DnaTrace,
}

/// Ten deterministic scenarios with full random covariances. Every value of
/// each axis (dimension, component count, step count) appears at least twice,
/// and every third scenario runs on a shifted grid instead of the uniform one.
fn build_random_scenarios() -> Vec<RandomScenario> {
    const GRID: [(usize, usize, usize); 10] = [
        (2, 1, 8),
        (2, 3, 28),
        (2, 1, 100),
        (8, 3, 8),
        (8, 1, 28),
        (8, 3, 100),
        (16, 1, 8),
        (16, 3, 28),
        (16, 1, 100),
        (8, 3, 28),
    ];
    GRID.iter()
        .enumerate()
        .map(|(i, &(d, k, t_count))| {
            let mut rng = RngStream::new(210 + i as u64);
            let raw: Vec<f64> = (0..k).map(|_| 0.25 + rng.uniform()).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let means: Vec<Vector> = (0..k)
                .map(|_| rng.sample_standard_normal(d) * 2.0)
                .collect();
            let covs: Vec<SpdMatrix> = (0..k)
                .map(|_| {
                    let mut b = Array2::<f64>::zeros((d, d));
                    for r in 0..d {
                        for c in 0..d {
                            b[[r, c]] = 0.35 * rng.normal_pair().0;
                        }
                    }
                    let cov = b.dot(&b.t()) + Array2::<f64>::eye(d) * 0.4;
                    SpdMatrix::new(cov).expect("b bT plus a positive diagonal is SPD")
                })
                .collect();
            let mix = GaussianMixture::new(weights, means, covs).expect("valid mixture");
            let mut field = MixtureField::new(d);
            field.insert("m", mix).expect("fresh field");
            let cond = Condition::plain("m");
            let sched = if i % 3 == 2 {
                Schedule::shifted(t_count, 3.0)
            } else {
                Schedule::uniform(t_count)
            }
            .expect("valid step count");
            let image = field.mixture("m").expect("inserted above").sample(&mut rng);
            let trace =
                dna_invert(&image, &field, &cond, &sched, &mut rng).expect("inversion runs");
            RandomScenario {
                field,
                cond,
                sched,
                image,
                trace,
            }
        })
        .collect()
}

#[test]
fn criterion_01_exact_reconstruction() {
    let start = Instant::now();
    let scenarios = build_random_scenarios();
    let mut worst = 0.0f64;
    for sc in &scenarios {
        let recon =
            reconstruct(&sc.trace, &sc.field, &sc.cond, &sc.sched, true).expect("replay runs");
        worst = worst.max(l2(&(&recon - &sc.image)) / l2(&sc.image));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-6 && elapsed < 5.0;
    println!(
        "criterion 01 exact reconstruction: {} (worst rel err {:.3e} over {} scenarios, {:.2}s)",
        verdict(ok),
        worst,
        scenarios.len(),
        elapsed
    );
    assert!(ok, "worst rel err {worst:.3e}, elapsed {elapsed:.2}s");
}

#[test]
fn criterion_02_trace_velocity_identity() {
    let mut worst = 0.0f64;
    for sc in &build_random_scenarios() {
        for t in 0..sc.sched.steps() {
            let dsig = sc.sched.sigma(t + 1) - sc.sched.sigma(t);
            let step_v = &(&sc.trace.latents[t + 1] - &sc.trace.latents[t]) / dsig;
            worst = worst.max(max_abs(&(&step_v - &sc.trace.src_velocities[t])));
        }
    }
    let ok = worst <= 1e-10;
    println!(
        "criterion 02 trace velocity identity: {} (worst deviation {:.3e})",
        verdict(ok),
        worst
    );
    assert!(ok, "worst deviation {worst:.3e}");
}

#[test]
fn criterion_03_offset_and_noise_ratio_identities() {
    let mut offset_worst = 0.0f64;
    let mut ratio_worst = 0.0f64;
    let mut checked = 0usize;
    let mut total = 0usize;
    for sc in &build_random_scenarios() {
        for t in 0..sc.sched.steps() {
            let sig_next = sc.sched.sigma(t + 1);
            let dsig = sig_next - sc.sched.sigma(t);
            let z_star = interpolate_latent(
                &sc.trace.latents[t + 1],
                &sc.trace.s_series[t + 1],
                sc.sched.sigma(t),
                sig_next,
            )
            .expect("interior grid point");
            let v_linear = &(&sc.trace.latents[t + 1] - &sc.trace.s_series[t + 1]) / sig_next;
            let delta_v = &v_linear - &sc.trace.src_velocities[t];

            let moved = &sc.trace.latents[t] - &z_star;
            let predicted = &delta_v * dsig;
            offset_worst = offset_worst.max(max_abs(&(&moved - &predicted)));

            // Quotient guard: dividing loses about (1 + ratio)·1e-15 of
            // absolute accuracy per unit of 1/|dz|, so components moved by
            // less than the guard are rounding noise and are skipped.
            let expected = sig_next / dsig;
            let guard = 2e-6 * (1.0 + expected);
            for i in 0..z_star.len() {
                total += 1;
                let dz = moved[i];
                if dz.abs() > guard {
                    checked += 1;
                    let ds = sc.trace.s_series[t][i] - sc.trace.s_series[t + 1][i];
                    ratio_worst = ratio_worst.max((ds / dz - expected).abs());
                }
            }
        }
    }
    let coverage = checked as f64 / total as f64;
    let ok = offset_worst <= 1e-9 && ratio_worst <= 1e-9 && coverage > 0.5;
    println!(
        "criterion 03 offset and noise ratio identities: {} (offset dev {:.3e}, ratio dev {:.3e}, {:.0}% of components checked)",
        verdict(ok),
        offset_worst,
        ratio_worst,
        coverage * 100.0
    );
    assert!(
        ok,
        "offset dev {offset_worst:.3e}, ratio dev {ratio_worst:.3e}, coverage {coverage:.2}"
    );
}

#[test]
fn criterion_04_aligned_accumulator_matches_guided_edit() {
    let cfg = standard_edit_config();
    let field = cfg.build_field().expect("preset field");
    let sched = cfg.build_schedule().expect("preset schedule");
    let src = cfg.resolved_src_cond().expect("preset source condition");
    let tgt = cfg.resolved_tgt_cond().expect("preset target condition");
    let edit_cfg = EditConfig {
        eta: 1.0,
        t_start: 0,
        use_res_offset: true,
        use_mvg: true,
        src_cond: src.clone(),
        tgt_cond: tgt.clone(),
    };
    let mut out_worst = 0.0f64;
    let mut para_worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = RngStream::new(seed);
        let x = field
            .mixture(&src.mixture_id)
            .expect("preset mixture")
            .sample(&mut rng);
        let trace = dna_invert(&x, &field, &src, &sched, &mut rng).expect("inversion runs");
        let detail = flowedit_detailed(
            &x,
            &field,
            &src,
            &tgt,
            &sched,
            &mut rng,
            NoiseMode::Aligned(&trace),
        )
        .expect("accumulator edit runs");
        let guided = mvg_edit(&trace, &x, &field, &edit_cfg, &sched).expect("guided edit runs");
        out_worst = out_worst.max(l2(&(&detail.output - &guided.edited)) / l2(&guided.edited));
        for i in 0..sched.steps() {
            let corner = &(&detail.accumulator[i] + &detail.src_points[i]) - &x;
            para_worst = para_worst.max(max_abs(&(&detail.tgt_points[i] - &corner)));
        }
    }
    let ok = out_worst <= 1e-6 && para_worst <= 1e-9;
    println!(
        "criterion 04 aligned accumulator equals full guidance: {} (output rel dev {:.3e}, parallelogram dev {:.3e}, 10 seeds)",
        verdict(ok),
        out_worst,
        para_worst
    );
    assert!(ok, "output dev {out_worst:.3e}, parallelogram dev {para_worst:.3e}");
}

#[test]
fn criterion_05_velocity_oracle_and_pushforward() {
    let start = Instant::now();
    let weights = vec![0.4, 0.6];
    let mu = [-1.2, 1.0];
    let vars = [0.5, 0.3];
    let mix = GaussianMixture::new(
        weights.clone(),
        vec![array![mu[0]], array![mu[1]]],
        vec![
            SpdMatrix::new(array![[vars[0]]]).expect("positive scalar"),
            SpdMatrix::new(array![[vars[1]]]).expect("positive scalar"),
        ],
    )
    .expect("valid mixture");

    // Paired draws shared across every sigma: x from the mixture, s standard
    // normal, never touching the code under test.
    let n = 2_000_000usize;
    let mut rng = RngStream::new(77);
    let sds = [vars[0].sqrt(), vars[1].sqrt()];
    let mut xs = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for _ in 0..n {
        let k = usize::from(rng.uniform() >= weights[0]);
        let (a, b) = rng.normal_pair();
        xs.push(mu[k] + sds[k] * a);
        ss.push(b);
    }

    // Bandwidth small enough that the squared kernel bias sits well under
    // one standard error at every query.
    let h = 0.025;
    let queries = [-1.5, -0.6, 0.0, 0.7, 1.4];
    let mut worst_gap_se = 0.0f64;
    let mut se_worst = 0.0f64;
    for &sigma in &[0.3, 0.6, 0.9] {
        let zs: Vec<f64> = (0..n)
            .map(|i| sigma * xs[i] + (1.0 - sigma) * ss[i])
            .collect();
        for &q in &queries {
            let (mut sw, mut swy, mut swy2, mut sw2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for i in 0..n {
                let u = (zs[i] - q) / h;
                if u.abs() > 6.0 {
                    continue;
                }
                let w = (-0.5 * u * u).exp();
                let y = xs[i] - ss[i];
                sw += w;
                swy += w * y;
                swy2 += w * y * y;
                sw2 += w * w;
            }
            let est = swy / sw;
            let var_w = (swy2 / sw - est * est).max(0.0);
            let n_eff = sw * sw / sw2;
            let se = (var_w / n_eff).sqrt();
            let exact = mixture_velocity(&array![q], sigma, &mix).expect("query point")[0];
            worst_gap_se = worst_gap_se.max((est - exact).abs() / se);
            se_worst = se_worst.max(se);
        }
    }

    // Transport check: the same noise draws pushed through the field on a
    // coarse grid must land on the fine-grid moments within two percent.
    let mut field = MixtureField::new(1);
    field.insert("m", mix).expect("fresh field");
    let cond = Condition::plain("m");
    let starts: Vec<f64> = (0..2000).map(|_| rng.normal_pair().0).collect();
    let terminals = |t_count: usize| -> Vec<f64> {
        let sched = Schedule::uniform(t_count).expect("valid step count");
        starts
            .iter()
            .map(|&s0| {
                let mut z = array![s0];
                for t in 0..t_count {
                    let v = field.eval(&z, sched.sigma(t), &cond).expect("transport");
                    z = &z + &(&v * (sched.sigma(t + 1) - sched.sigma(t)));
                }
                z[0]
            })
            .collect()
    };
    let mean_var = |xs: &[f64]| -> (f64, f64) {
        let m = mean(xs);
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, var)
    };
    let (m_coarse, v_coarse) = mean_var(&terminals(400));
    let (m_fine, v_fine) = mean_var(&terminals(4000));
    let mean_gap = (m_coarse - m_fine).abs() / v_fine.sqrt();
    let var_gap = (v_coarse / v_fine - 1.0).abs();

    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_gap_se <= 3.0
        && se_worst <= 0.05
        && mean_gap <= 0.02
        && var_gap <= 0.02
        && elapsed < 60.0;
    println!(
        "criterion 05 velocity oracle and pushforward: {} (worst gap {:.2} se, se max {:.1e}, moment gaps {:.2}% and {:.2}%, {:.1}s)",
        verdict(ok),
        worst_gap_se,
        se_worst,
        mean_gap * 100.0,
        var_gap * 100.0,
        elapsed
    );
    assert!(
        ok,
        "gap {worst_gap_se:.2} se, se {se_worst:.1e}, mean gap {mean_gap:.4}, var gap {var_gap:.4}, {elapsed:.1}s"
    );
}

#[test]
fn criterion_06_reconstruction_error_ordering() {
    let start = Instant::now();
    let cfg = standard_recon_config();
    let out = run_reconstruction(&cfg).expect("preset run");
    let mut per: BTreeMap<&str, BTreeMap<u64, f64>> = BTreeMap::new();
    for row in &out.rows {
        per.entry(row.method.as_str()).or_default().insert(
            row.seed,
            row.terminal_mse.expect("recon rows carry terminal mse"),
        );
    }
    let paired_gap = |hi: &str, lo: &str| -> (f64, f64) {
        let diffs: Vec<f64> = cfg.seeds.iter().map(|s| per[hi][s] - per[lo][s]).collect();
        (mean(&diffs), sem(&diffs))
    };
    let (gap_mid, sem_mid) = paired_gap("midpoint", "dna");
    let (gap_van, sem_van) = paired_gap("vanilla", "midpoint");
    let elapsed = start.elapsed().as_secs_f64();
    let ok = gap_mid > 2.0 * sem_mid && gap_van > 2.0 * sem_van && elapsed < 30.0;
    println!(
        "criterion 06 reconstruction error ordering: {} (midpoint-dna {:.3e} vs 2 sem {:.3e}, vanilla-midpoint {:.3e} vs 2 sem {:.3e}, {:.1}s)",
        verdict(ok),
        gap_mid,
        2.0 * sem_mid,
        gap_van,
        2.0 * sem_van,
        elapsed
    );
    assert!(
        ok,
        "gaps {gap_mid:.3e} (2 sem {:.3e}) and {gap_van:.3e} (2 sem {:.3e}), {elapsed:.1}s",
        2.0 * sem_mid,
        2.0 * sem_van
    );
}

#[test]
fn criterion_07_guided_edit_background_ordering() {
    let cfg = standard_edit_config();
    let rows = run_edit(&cfg).expect("preset run");
    let mut per: BTreeMap<(&str, &str), BTreeMap<u64, f64>> = BTreeMap::new();
    for row in &rows {
        per.entry((row.method.as_str(), row.flags.as_str()))
            .or_default()
            .insert(
                row.seed,
                row.background_mse.expect("edit rows carry background mse"),
            );
    }
    let paired_gap = |hi: (&str, &str), lo: (&str, &str)| -> (f64, f64) {
        let diffs: Vec<f64> = cfg
            .seeds
            .iter()
            .map(|s| per[&hi][s] - per[&lo][s])
            .collect();
        (mean(&diffs), sem(&diffs))
    };
    let full = ("dna", "offsets+mvg");
    let (gap_off, sem_off) = paired_gap(("dna", "offsets"), full);
    let (gap_plain, sem_plain) = paired_gap(("fixed_noise", "plain"), full);
    let ok = gap_off > 2.0 * sem_off && gap_plain > 2.0 * sem_plain;
    println!(
        "criterion 07 guided edit background ordering: {} (offsets-full {:.3e} vs 2 sem {:.3e}, plain-full {:.3e} vs 2 sem {:.3e})",
        verdict(ok),
        gap_off,
        2.0 * sem_off,
        gap_plain,
        2.0 * sem_plain
    );
    assert!(
        ok,
        "gaps {gap_off:.3e} (2 sem {:.3e}) and {gap_plain:.3e} (2 sem {:.3e})",
        2.0 * sem_off,
        2.0 * sem_plain
    );
}

/// Average ranks with ties sharing their midpoint.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite metric"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..rx.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[test]
fn criterion_08_eta_sweep_monotone_tradeoff() {
    let etas = [1.0, 0.9, 0.8, 0.7];
    let cfg = standard_edit_config();
    let sweep = run_eta_sweep(&cfg, &etas).expect("preset sweep");

    // Per-seed rank correlation between eta and each metric. The summed
    // statistic is N(0, n/3) under the no-trend null, so exceeding
    // 1.645·sqrt(n/3) rejects it one-sided at 95 percent.
    let mut bg_rho_sum = 0.0f64;
    let mut ll_rho_sum = 0.0f64;
    for &seed in &cfg.seeds {
        let mut bg = Vec::with_capacity(etas.len());
        let mut ll = Vec::with_capacity(etas.len());
        for &eta in &etas {
            let row = sweep
                .rows
                .iter()
                .find(|r| r.seed == seed && r.eta == Some(eta))
                .expect("one row per seed and eta");
            bg.push(row.background_mse.expect("sweep rows carry background mse"));
            ll.push(row.target_loglik.expect("sweep rows carry target loglik"));
        }
        bg_rho_sum += spearman(&etas, &bg);
        ll_rho_sum += spearman(&etas, &ll);
    }
    let gate = 1.645 * (cfg.seeds.len() as f64 / 3.0).sqrt();

    let trend = &sweep.trend;
    let ok = trend.background_non_increasing
        && trend.loglik_non_increasing
        && bg_rho_sum > gate
        && ll_rho_sum > gate;
    println!(
        "criterion 08 eta sweep monotone tradeoff: {} (means non-increasing as eta decreases; spearman sums {:.2} and {:.2} vs gate {:.2})",
        verdict(ok),
        bg_rho_sum,
        ll_rho_sum,
        gate
    );
    assert!(
        ok,
        "trend flags {} {}, spearman sums {bg_rho_sum:.2} and {ll_rho_sum:.2}, gate {gate:.2}",
        trend.background_non_increasing, trend.loglik_non_increasing
    );
}

#[test]
fn criterion_10_evaluation_accounting() {
    let cfg = standard_edit_config();
    let field = cfg.build_field().expect("preset field");
    let sched = cfg.build_schedule().expect("preset schedule");
    let src = cfg.resolved_src_cond().expect("preset source condition");
    let tgt = cfg.resolved_tgt_cond().expect("preset target condition");
    let t_count = sched.steps() as u64;
    let t_start = cfg.edit.t_start;

    let mut rng = RngStream::new(3);
    let x = field
        .mixture(&src.mixture_id)
        .expect("preset mixture")
        .sample(&mut rng);

    let before = field.evals();
    let trace = dna_invert(&x, &field, &src, &sched, &mut rng).expect("inversion runs");
    let invert_delta = field.evals() - before;

    let before = field.evals();
    let _ = reconstruct(&trace, &field, &src, &sched, true).expect("replay runs");
    let replay_delta = field.evals() - before;

    let before = field.evals();
    let mid = midpoint_invert(&x, &field, &src, &sched).expect("midpoint runs");
    let midpoint_delta = field.evals() - before;

    let edit_cfg = EditConfig {
        eta: cfg.edit.eta,
        t_start,
        use_res_offset: true,
        use_mvg: true,
        src_cond: src.clone(),
        tgt_cond: tgt,
    };
    let before = field.evals();
    let res = mvg_edit(&trace, &x, &field, &edit_cfg, &sched).expect("guided edit runs");
    let edit_delta = field.evals() - before;

    let ok = invert_delta == t_count
        && trace.nfe == t_count
        && replay_delta == t_count
        && midpoint_delta == 2 * t_count
        && mid.nfe == 2 * t_count
        && edit_delta == t_count - t_start as u64
        && res.nfe == t_count - t_start as u64;
    println!(
        "criterion 10 evaluation accounting: {} (invert {invert_delta}, replay {replay_delta}, midpoint {midpoint_delta}, edit {edit_delta} for T={t_count}, t_start={t_start})",
        verdict(ok)
    );
    assert!(
        ok,
        "invert {invert_delta}, replay {replay_delta}, midpoint {midpoint_delta}, edit {edit_delta}, trace nfe {}, midpoint nfe {}, edit nfe {}",
        trace.nfe, mid.nfe, res.nfe
    );
}
