//! Built-in invariant suite. Every check measures a residual against a
//! bound on the shipped presets and fixed seeds, so the report text is
//! identical on every run of the same build.
//!
//! The suite exists to catch silent numerical regressions: each line is an
//! independently derived identity, not a snapshot of implementation output.

use crate::baselines::{
    fixed_noise_trace, flowedit_detailed, midpoint_invert, NoiseMode,
};
use crate::dna::{dna_invert, dna_invert_with, noise_delta_frames, reconstruct_trajectory};
use crate::error::Result;
use crate::flow::{euler_forward, interpolate_latent, Schedule};
use crate::harness::csv::results_csv;
use crate::harness::presets;
use crate::harness::run::run_reconstruction;
use crate::math::{cholesky, chol_solve, gauss_logpdf, RngStream, SpdMatrix};
use crate::metrics::{mse, noise_moments, recon_error_curve, target_loglik};
use crate::mvg::{mvg_edit, EditConfig};
use crate::velocity::{
    fixed_test_field, mixture_velocity, responsibilities, Condition, FixedKind,
    GaussianMixture, MixtureField, VelocityField,
};
use crate::Vector;

use ndarray::array;

/// Debug hooks that corrupt one specific computation so the suite can
/// demonstrate it actually detects breakage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelftestMutation {
    None,
    /// Negates the straight-line velocity inside the alignment run used by
    /// the exact-reconstruction check, and nothing else.
    FlipLinearVelocitySign,
}

/// One invariant: `measured` compared against `bound`. With `exceeds`
/// unset the check passes when measured <= bound; with it set the
/// measurement must exceed the bound (for quantities that must stay away
/// from zero).
#[derive(Debug, Clone)]
pub struct SelftestLine {
    pub id: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub exceeds: bool,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub lines: Vec<SelftestLine>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            let mark = if l.passed { "[ ok ]" } else { "[FAIL]" };
            let rel = if l.exceeds { ">" } else { "<=" };
            out.push_str(&format!(
                "{mark} {:<44} measured={:>12.3e} {rel} bound={:.3e}\n",
                l.id, l.measured, l.bound
            ));
        }
        let failed = self.lines.iter().filter(|l| !l.passed).count();
        if failed == 0 {
            out.push_str(&format!("all {} checks passed\n", self.lines.len()));
        } else {
            out.push_str(&format!(
                "{failed} of {} checks FAILED\n",
                self.lines.len()
            ));
        }
        out
    }
}

struct Suite {
    lines: Vec<SelftestLine>,
}

impl Suite {
    fn new() -> Self {
        Suite { lines: Vec::new() }
    }

    fn le(&mut self, id: &'static str, measured: f64, bound: f64) {
        self.lines.push(SelftestLine {
            id,
            measured,
            bound,
            exceeds: false,
            passed: measured.is_finite() && measured <= bound,
        });
    }

    fn gt(&mut self, id: &'static str, measured: f64, bound: f64) {
        self.lines.push(SelftestLine {
            id,
            measured,
            bound,
            exceeds: true,
            passed: measured.is_finite() && measured > bound,
        });
    }
}

fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn rel_err(got: &Vector, want: &Vector) -> f64 {
    let denom = want.dot(want).sqrt().max(1e-300);
    (got - want).dot(&(got - want)).sqrt() / denom
}

const SEED: u64 = 11;

fn math_checks(suite: &mut Suite) -> Result<()> {
    let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
    let l = cholesky(&a)?;
    let llt = l.dot(&l.t());
    let residual = (&llt - &a)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    suite.le("math.cholesky_factor_identity", residual, 1e-12);

    let b = array![1.0, -2.0, 0.5];
    let x = chol_solve(&l, &b);
    let back = a.dot(&x);
    suite.le("math.cholesky_solve_residual", max_abs(&(&back - &b)), 1e-10);

    let cov = SpdMatrix::new(array![[2.0, 0.5], [0.5, 1.0]])?;
    let mean = array![0.3, -1.2];
    let lp = gauss_logpdf(&mean, &mean, &cov)?;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let expected = -0.5 * (2.0 * ln_2pi + cov.log_det());
    suite.le("math.gauss_logpdf_at_mean", (lp - expected).abs(), 1e-12);

    let mut r1 = RngStream::new(SEED);
    let mut r2 = RngStream::new(SEED);
    let d1 = r1.sample_standard_normal(64);
    let d2 = r2.sample_standard_normal(64);
    suite.le("math.rng_repeatability", max_abs(&(&d1 - &d2)), 0.0);

    let mut rng = RngStream::new(SEED);
    let draws = rng.sample_standard_normal(50_000);
    let n = draws.len() as f64;
    let m = draws.sum() / n;
    let var = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    suite.le(
        "math.rng_standard_moments",
        m.abs().max((var - 1.0).abs()),
        0.03,
    );
    Ok(())
}

fn flow_checks(suite: &mut Suite) -> Result<()> {
    let uniform = Schedule::uniform(24)?;
    let shifted = Schedule::shifted(28, 3.0)?;
    let endpoint_residual = |s: &Schedule| {
        s.sigma(0).abs() + (s.sigma(s.steps()) - 1.0).abs()
    };
    suite.le(
        "flow.grid_endpoints_uniform",
        endpoint_residual(&uniform),
        0.0,
    );
    suite.le(
        "flow.grid_endpoints_shifted",
        endpoint_residual(&shifted),
        0.0,
    );
    let min_step = uniform
        .sigmas()
        .windows(2)
        .chain(shifted.sigmas().windows(2))
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    suite.gt("flow.grid_strictly_increasing", min_step, 0.0);

    // Points already on the line sigma·x + (1−sigma)·s must stay on it.
    let mut rng = RngStream::new(SEED);
    let x = rng.sample_standard_normal(4);
    let s = rng.sample_standard_normal(4);
    let z_high = &(&x * 0.8) + &(&s * 0.2);
    let z_low = interpolate_latent(&z_high, &s, 0.3, 0.8)?;
    let direct = &(&x * 0.3) + &(&s * 0.7);
    suite.le(
        "flow.interpolation_stays_on_line",
        max_abs(&(&z_low - &direct)),
        1e-12,
    );

    // The straight-toward-x0 field is integrated exactly by Euler.
    let x0 = array![0.5, -1.5, 2.0];
    let field = fixed_test_field(FixedKind::LinearTo(x0.clone()), 3)?;
    let cond = Condition::plain("any");
    let start = rng.sample_standard_normal(3);
    let traj = euler_forward(&start, 0, &field, &cond, &uniform)?;
    suite.le(
        "flow.euler_exact_on_linear_field",
        max_abs(&(traj.terminal() - &x0)),
        1e-12,
    );
    Ok(())
}

fn velocity_checks(suite: &mut Suite) -> Result<()> {
    let mix = GaussianMixture::isotropic(
        vec![0.5, 0.3, 0.2],
        vec![array![1.0, 0.0], array![-1.0, 1.0], array![0.0, -2.0]],
        0.5,
    )?;
    let mut rng = RngStream::new(SEED);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let z = rng.sample_standard_normal(2);
        for &sigma in &[0.0, 0.25, 0.7, 1.0] {
            let r = responsibilities(&z, sigma, &mix)?;
            worst = worst.max((r.iter().sum::<f64>() - 1.0).abs());
        }
    }
    suite.le("velocity.responsibilities_sum_to_one", worst, 1e-12);

    // Single component: the ratio (sigma·s − (1−sigma))/(sigma²·s + (1−sigma)²)
    // gives the whole velocity in closed form for an isotropic covariance.
    let var = 0.25;
    let mu = array![0.7, -0.2];
    let k1 = GaussianMixture::isotropic(vec![1.0], vec![mu.clone()], var)?;
    let mut worst = 0.0f64;
    for _ in 0..4 {
        let z = rng.sample_standard_normal(2);
        for &sigma in &[0.1, 0.5, 0.9] {
            let c = (sigma * var - (1.0 - sigma))
                / (sigma * sigma * var + (1.0 - sigma) * (1.0 - sigma));
            let expected = &mu + &(&(&z - &(&mu * sigma)) * c);
            let got = mixture_velocity(&z, sigma, &k1)?;
            worst = worst.max(max_abs(&(&got - &expected)));
        }
    }
    suite.le("velocity.single_component_closed_form", worst, 1e-12);

    let z = rng.sample_standard_normal(2);
    let at0 = mixture_velocity(&z, 0.0, &mix)?;
    let expected0 = &mix.mean() - &z;
    suite.le(
        "velocity.sigma_zero_is_mean_minus_z",
        max_abs(&(&at0 - &expected0)),
        1e-12,
    );
    let at1 = mixture_velocity(&z, 1.0, &mix)?;
    suite.le("velocity.sigma_one_is_z", max_abs(&(&at1 - &z)), 1e-12);

    // Guidance at g = 2 must equal the hand-blended branches, with the
    // default unconditional prior written out explicitly.
    let mut field = MixtureField::new(2);
    field.insert("c", mix.clone())?;
    let guided = Condition::guided("c", 2.0, None);
    let vg = field.eval(&z, 0.6, &guided)?;
    let broad = GaussianMixture::isotropic(vec![1.0], vec![Vector::zeros(2)], 9.0)?;
    let v_u = mixture_velocity(&z, 0.6, &broad)?;
    let v_c = mixture_velocity(&z, 0.6, &mix)?;
    let expected = &v_u + &(&(&v_c - &v_u) * 2.0);
    suite.le(
        "velocity.guidance_extrapolation",
        max_abs(&(&vg - &expected)),
        1e-12,
    );

    let before = field.evals();
    field.eval(&z, 0.5, &Condition::plain("c"))?;
    let plain_cost = field.evals() - before;
    let before = field.evals();
    field.eval(&z, 0.5, &guided)?;
    let guided_cost = field.evals() - before;
    suite.le(
        "velocity.eval_counter_costs",
        ((plain_cost as f64) - 1.0).abs() + ((guided_cost as f64) - 2.0).abs(),
        0.0,
    );

    let mut worst = 0.0f64;
    for &sigma in &[1e-12, 0.3, 0.7, 1.0 - 1e-12] {
        let lo = mixture_velocity(&z, sigma - 1e-13, &mix)?;
        let hi = mixture_velocity(&z, sigma + 1e-13, &mix)?;
        worst = worst.max(max_abs(&(&hi - &lo)));
    }
    suite.le("velocity.sigma_continuity_near_endpoints", worst, 1e-3);
    Ok(())
}

fn dna_checks(suite: &mut Suite, mutation: SelftestMutation) -> Result<()> {
    let cfg = presets::standard_edit_config();
    let field = cfg.build_field()?;
    let sched = cfg.build_schedule()?;
    let src = cfg.resolved_src_cond()?;
    let mut rng = RngStream::new(SEED);
    let x = field
        .mixture(&src.mixture_id)
        .expect("preset mixture")
        .sample(&mut rng);
    let trace = dna_invert(&x, &field, &src, &sched, &mut rng)?;
    let t_count = sched.steps();

    let mut euler_worst = 0.0f64;
    let mut line_worst = 0.0f64;
    let mut ratio_worst = 0.0f64;
    let mut update_worst = 0.0f64;
    for t in 0..t_count {
        let dsig = sched.sigma(t + 1) - sched.sigma(t);
        let step_v = &(&trace.latents[t + 1] - &trace.latents[t]) / dsig;
        euler_worst = euler_worst.max(max_abs(&(&step_v - &trace.src_velocities[t])));

        let line_v = &(&trace.latents[t + 1] - &trace.s_series[t]) / sched.sigma(t + 1);
        line_worst = line_worst.max(max_abs(&(&line_v - &trace.src_velocities[t])));

        let z_star = interpolate_latent(
            &trace.latents[t + 1],
            &trace.s_series[t + 1],
            sched.sigma(t),
            sched.sigma(t + 1),
        )?;
        let expected_ratio = sched.sigma(t + 1) / dsig;
        for i in 0..x.len() {
            let dz = trace.latents[t][i] - z_star[i];
            if dz.abs() > 1e-9 {
                let ds = trace.s_series[t][i] - trace.s_series[t + 1][i];
                ratio_worst = ratio_worst.max((ds / dz - expected_ratio).abs());
            }
        }

        // Recompute the velocity difference from stored arrays alone and
        // confirm both update rules: the noise moves by delta_v·sigma_next
        // and the offset is −delta_v·(sigma_next − sigma_t).
        let v_linear =
            &(&trace.latents[t + 1] - &trace.s_series[t + 1]) / sched.sigma(t + 1);
        let delta_v = &v_linear - &trace.src_velocities[t];
        let s_move = &trace.s_series[t] - &trace.s_series[t + 1];
        update_worst = update_worst.max(max_abs(
            &(&s_move - &(&delta_v * sched.sigma(t + 1))),
        ));
        update_worst = update_worst
            .max(max_abs(&(&trace.offsets[t] + &(&delta_v * dsig))));
    }
    suite.le("dna.euler_step_identity", euler_worst, 1e-10);
    suite.le("dna.line_velocity_identity", line_worst, 1e-10);
    suite.le("dna.noise_latent_ratio_rule", ratio_worst, 1e-9);
    suite.le("dna.update_rule_identities", update_worst, 1e-10);

    suite.le(
        "dna.noise_equals_latent_at_sigma_zero",
        max_abs(&(&trace.latents[0] - &trace.s_series[0])),
        0.0,
    );

    // The one check the debug hook corrupts: a sign-flipped straight-line
    // velocity must break exact reconstruction and nothing else.
    let recon_trace = match mutation {
        SelftestMutation::None => trace.clone(),
        SelftestMutation::FlipLinearVelocitySign => {
            let mut rng = RngStream::new(SEED + 1);
            dna_invert_with(&x, &field, &src, &sched, &mut rng, true)?
        }
    };
    let recon = reconstruct_trajectory(&recon_trace, &field, &src, &sched, true)?;
    suite.le(
        "dna.exact_reconstruction",
        rel_err(recon.terminal(), &x),
        1e-6,
    );

    suite.le(
        "dna.nfe_equals_step_count",
        ((trace.nfe as f64) - (t_count as f64)).abs(),
        0.0,
    );

    let frames = noise_delta_frames(&trace, 6);
    let telescoped = &frames[0] + &(&frames[6] + &(&frames[12] + &frames[18]));
    let full = &trace.s_series[0] - &trace.s_series[t_count];
    suite.le(
        "dna.delta_frames_telescope",
        max_abs(&(&telescoped - &full)),
        1e-12,
    );
    Ok(())
}

fn mvg_checks(suite: &mut Suite) -> Result<()> {
    let cfg = presets::standard_edit_config();
    let field = cfg.build_field()?;
    let sched = cfg.build_schedule()?;
    let src = cfg.resolved_src_cond()?;
    let tgt = cfg.resolved_tgt_cond()?;
    let mut rng = RngStream::new(SEED);
    let x = field
        .mixture(&src.mixture_id)
        .expect("preset mixture")
        .sample(&mut rng);
    let trace = dna_invert(&x, &field, &src, &sched, &mut rng)?;
    let t_start = cfg.edit.t_start;

    let base = EditConfig {
        eta: 0.8,
        t_start,
        use_res_offset: true,
        use_mvg: true,
        src_cond: src.clone(),
        tgt_cond: tgt.clone(),
    };

    // Editing toward the source prompt with full target weight must give
    // the source back: every stored velocity replays exactly.
    let identity_cfg = EditConfig {
        eta: 1.0,
        tgt_cond: src.clone(),
        ..base.clone()
    };
    let res = mvg_edit(&trace, &x, &field, &identity_cfg, &sched)?;
    suite.le("mvg.identity_edit_returns_source", rel_err(&res.edited, &x), 1e-6);
    suite.le(
        "mvg.nfe_equals_tail_length",
        ((res.nfe as f64) - ((sched.steps() - t_start) as f64)).abs(),
        0.0,
    );

    // At full target weight the mobile reference must not influence the
    // output at all: initialize it from a very different source point.
    let eta1 = EditConfig {
        eta: 1.0,
        ..base.clone()
    };
    let a = mvg_edit(&trace, &x, &field, &eta1, &sched)?;
    let shifted_source = &x + &Vector::from_elem(x.len(), 50.0);
    let b = mvg_edit(&trace, &shifted_source, &field, &eta1, &sched)?;
    suite.le(
        "mvg.eta_one_ignores_reference",
        max_abs(&(&a.edited - &b.edited)),
        0.0,
    );

    // First step of the identity edit: the target velocity lands on the
    // stored source velocity, so the consumed difference is zero.
    let first_dv = &mvg_edit(&trace, &x, &field, &identity_cfg, &sched)?.delta_v_series[0];
    suite.le("mvg.identity_first_step_delta_v", max_abs(first_dv), 1e-10);

    // One guided step is affine in eta, so the midpoint blend must land
    // halfway between the endpoint blends.
    let state_after_one = |eta: f64| -> Result<Vector> {
        let cfg = EditConfig {
            eta,
            ..base.clone()
        };
        Ok(mvg_edit(&trace, &x, &field, &cfg, &sched)?.edit_traj[1].clone())
    };
    let lo = state_after_one(0.0)?;
    let mid = state_after_one(0.5)?;
    let hi = state_after_one(1.0)?;
    let blend = &(&lo + &hi) * 0.5;
    suite.le("mvg.blend_affine_in_eta", max_abs(&(&mid - &blend)), 1e-10);

    // At eta = 0 the final pull spans the full remaining time, landing the
    // edit exactly on the mobile reference.
    let pull_cfg = EditConfig {
        eta: 0.0,
        ..base.clone()
    };
    let res = mvg_edit(&trace, &x, &field, &pull_cfg, &sched)?;
    let reference = res.mvg_traj.last().expect("nonempty");
    suite.le(
        "mvg.eta_zero_lands_on_reference",
        max_abs(&(&res.edited - reference)),
        1e-9,
    );
    Ok(())
}

fn baseline_checks(suite: &mut Suite) -> Result<()> {
    let cfg = presets::standard_edit_config();
    let field = cfg.build_field()?;
    let sched = cfg.build_schedule()?;
    let src = cfg.resolved_src_cond()?;
    let tgt = cfg.resolved_tgt_cond()?;
    let mut rng = RngStream::new(SEED);
    let x = field
        .mixture(&src.mixture_id)
        .expect("preset mixture")
        .sample(&mut rng);

    let trace = fixed_noise_trace(&x, &field, &src, &sched, &mut rng)?;
    let replay = reconstruct_trajectory(&trace, &field, &src, &sched, true)?;
    suite.le(
        "baselines.fixed_noise_offset_replay",
        rel_err(replay.terminal(), &x),
        1e-10,
    );
    let max_offset = trace
        .offsets
        .iter()
        .map(max_abs)
        .fold(0.0f64, f64::max);
    suite.gt("baselines.fixed_noise_offsets_nonzero", max_offset, 1e-4);

    // Accumulator edit: the target is always probed at the parallelogram
    // point acc + z_src − source, in both noise modes.
    let parallelogram_residual = |detail: &crate::baselines::FloweditDetail| {
        let mut worst = 0.0f64;
        for i in 0..detail.src_points.len() {
            let expected = &(&detail.accumulator[i] + &detail.src_points[i]) - &x;
            worst = worst.max(max_abs(&(&detail.tgt_points[i] - &expected)));
        }
        worst
    };
    let mut rng_iid = RngStream::new(SEED + 2);
    let iid = flowedit_detailed(&x, &field, &src, &tgt, &sched, &mut rng_iid, NoiseMode::Iid)?;
    let mut rng_aligned = RngStream::new(SEED + 3);
    let aligned = flowedit_detailed(
        &x,
        &field,
        &src,
        &tgt,
        &sched,
        &mut rng_aligned,
        NoiseMode::Aligned(&trace),
    )?;
    suite.le(
        "baselines.accumulator_parallelogram",
        parallelogram_residual(&iid).max(parallelogram_residual(&aligned)),
        1e-9,
    );

    // Aligned accumulator editing is the full-target-weight guided edit in
    // accumulator coordinates; outputs must coincide.
    let dna_trace = dna_invert(&x, &field, &src, &sched, &mut rng)?;
    let mut rng_al2 = RngStream::new(SEED + 4);
    let aligned_dna = flowedit_detailed(
        &x,
        &field,
        &src,
        &tgt,
        &sched,
        &mut rng_al2,
        NoiseMode::Aligned(&dna_trace),
    )?;
    let mvg_cfg = EditConfig {
        eta: 1.0,
        t_start: 0,
        use_res_offset: true,
        use_mvg: false,
        src_cond: src.clone(),
        tgt_cond: tgt.clone(),
    };
    let guided = mvg_edit(&dna_trace, &x, &field, &mvg_cfg, &sched)?;
    suite.le(
        "baselines.aligned_accumulator_matches_guided",
        rel_err(&aligned_dna.output, &guided.edited),
        1e-6,
    );

    // On a constant field the midpoint probe sees the same velocity as
    // every other point, so inversion and replay cancel exactly.
    let c = array![0.3, -0.7];
    let const_field = fixed_test_field(FixedKind::Constant(c), 2)?;
    let cond = Condition::plain("any");
    let small = Schedule::uniform(6)?;
    let y = rng.sample_standard_normal(2);
    let inv = midpoint_invert(&y, &const_field, &cond, &small)?;
    let back = euler_forward(&inv.states[0], 0, &const_field, &cond, &small)?;
    suite.le(
        "baselines.midpoint_exact_on_constant_field",
        max_abs(&(back.terminal() - &y)),
        1e-12,
    );
    suite.le(
        "baselines.midpoint_two_evals_per_step",
        ((inv.nfe as f64) - (2.0 * small.steps() as f64)).abs(),
        0.0,
    );
    Ok(())
}

fn metric_checks(suite: &mut Suite) -> Result<()> {
    let a = array![1.0, 2.0, 3.0, 4.0];
    let b = array![1.0, 0.0, 3.0, 0.0];
    // Hand arithmetic: (0 + 4 + 0 + 16)/4 over all, (4 + 16)/2 on a subset.
    let full = mse(&a, &b, None)?;
    let part = mse(&a, &b, Some(&[1, 3]))?;
    suite.le(
        "metrics.mse_hand_arithmetic",
        (full - 5.0).abs().max((part - 10.0).abs()),
        1e-15,
    );

    let cfg = presets::standard_edit_config();
    let field = cfg.build_field()?;
    let sched = cfg.build_schedule()?;
    let src = cfg.resolved_src_cond()?;
    let mut rng = RngStream::new(SEED);
    let x = field
        .mixture(&src.mixture_id)
        .expect("preset mixture")
        .sample(&mut rng);
    let trace = dna_invert(&x, &field, &src, &sched, &mut rng)?;
    let curve = recon_error_curve(&trace, &field, &src, &sched, true)?;
    let worst = curve.iter().fold(0.0f64, |m, &e| m.max(e));
    suite.le("metrics.offset_replay_curve_flat", worst, 1e-10);

    let flat = noise_moments(&Vector::from_elem(16, 2.5));
    let ok = flat.degenerate && flat.skewness == 0.0 && flat.excess_kurtosis == 0.0;
    suite.le(
        "metrics.constant_vector_flagged_degenerate",
        if ok { 0.0 } else { 1.0 },
        0.0,
    );

    let scenario = cfg.build_scenario(x.clone())?;
    suite.le(
        "metrics.background_mse_zero_at_source",
        scenario.background_mse(&x)?,
        0.0,
    );

    // Moving the edited point's edit coordinates onto the target mean must
    // raise the target log-likelihood above the untouched source point.
    let mut toward_target = x.clone();
    let tgt_marginal_mean = scenario.tgt.mean();
    for &i in &scenario.dims_edit {
        toward_target[i] = tgt_marginal_mean[i];
    }
    let gain = target_loglik(&toward_target, &scenario)? - target_loglik(&x, &scenario)?;
    suite.gt("metrics.loglik_rises_toward_target", gain, 0.0);
    Ok(())
}

fn harness_checks(suite: &mut Suite) -> Result<()> {
    let mut cfg = presets::tiny_config();
    cfg.methods = vec!["dna".to_string()];
    cfg.seeds = vec![0];
    let out = run_reconstruction(&cfg)?;
    let row = &out.rows[0];
    suite.le(
        "harness.dna_row_costs_two_passes",
        ((row.nfe as f64) - (2.0 * cfg.schedule.steps as f64)).abs(),
        0.0,
    );

    let mut id_cfg = presets::tiny_config();
    id_cfg.tgt_cond = id_cfg.src_cond.clone();
    id_cfg.edit.eta = 1.0;
    id_cfg.seeds = vec![0];
    let rows = crate::harness::run::run_edit(&id_cfg)?;
    let full = rows
        .iter()
        .find(|r| r.method == "dna" && r.flags == "offsets+mvg")
        .expect("combo present");
    suite.le(
        "harness.identity_edit_background_mse",
        full.background_mse.expect("edit row"),
        1e-10,
    );

    let again = crate::harness::run::run_edit(&id_cfg)?;
    let identical = results_csv(&rows) == results_csv(&again);
    suite.le(
        "harness.rerun_renders_identically",
        if identical { 0.0 } else { 1.0 },
        0.0,
    );

    let tiny = presets::tiny_config();
    let text = tiny.to_json();
    let parsed: crate::harness::config::ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| crate::error::Error::Parse {
            what: "selftest roundtrip".to_string(),
            detail: e.to_string(),
        })?;
    let identical = parsed.to_json() == text;
    suite.le(
        "harness.config_json_roundtrip",
        if identical { 0.0 } else { 1.0 },
        0.0,
    );
    Ok(())
}

/// Runs the full invariant suite on the built-in presets.
pub fn selftest() -> Result<SelftestReport> {
    selftest_with(SelftestMutation::None)
}

/// Suite run with an optional deliberate corruption, used to demonstrate
/// that the checks detect a broken build rather than vacuously passing.
pub fn selftest_with(mutation: SelftestMutation) -> Result<SelftestReport> {
    let mut suite = Suite::new();
    math_checks(&mut suite)?;
    flow_checks(&mut suite)?;
    velocity_checks(&mut suite)?;
    dna_checks(&mut suite, mutation)?;
    mvg_checks(&mut suite)?;
    baseline_checks(&mut suite)?;
    metric_checks(&mut suite)?;
    harness_checks(&mut suite)?;
    Ok(SelftestReport { lines: suite.lines })
}
