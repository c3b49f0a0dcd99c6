//! Shared scenario builders for the criterion benches.

pub use rfedit_core as core;

use ndarray::Array2;
use rfedit_core::dna::{dna_invert, DnaTrace};
use rfedit_core::flow::Schedule;
use rfedit_core::harness::presets::standard_edit_config;
use rfedit_core::math::{RngStream, Vector};
use rfedit_core::velocity::{Condition, MixtureField};

/// Standard editing field with its schedule, both conditions, a sampled
/// source image, and a finished inversion trace for replay-style benches.
pub struct EditBench {
    pub field: MixtureField,
    pub sched: Schedule,
    pub src: Condition,
    pub tgt: Condition,
    pub image: Vector,
    pub trace: DnaTrace,
    pub t_start: usize,
    pub eta: f64,
}

pub fn edit_bench(seed: u64) -> EditBench {
    let cfg = standard_edit_config();
    let field = cfg.build_field().expect("preset field");
    let sched = cfg.build_schedule().expect("preset schedule");
    let src = cfg.resolved_src_cond().expect("preset source condition");
    let tgt = cfg.resolved_tgt_cond().expect("preset target condition");
    let mut rng = RngStream::new(seed);
    let image = field
        .mixture(&src.mixture_id)
        .expect("preset mixture")
        .sample(&mut rng);
    let trace = dna_invert(&image, &field, &src, &sched, &mut rng).expect("inversion runs");
    EditBench {
        field,
        sched,
        src,
        tgt,
        image,
        trace,
        t_start: cfg.edit.t_start,
        eta: cfg.edit.eta,
    }
}

/// Dense random SPD matrix for factorization benches.
pub fn random_spd(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = RngStream::new(seed);
    let mut b = Array2::<f64>::zeros((d, d));
    for r in 0..d {
        for c in 0..d {
            b[[r, c]] = 0.3 * rng.normal_pair().0;
        }
    }
    b.dot(&b.t()) + Array2::<f64>::eye(d)
}
