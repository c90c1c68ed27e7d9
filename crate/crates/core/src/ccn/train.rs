//! Minibatch training loop shared by CCN and FCCN.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{bce_with_grad, g_loss_row, CdfNetwork, ProbeCtx};
use super::{CdfModel, TrainConfig, ZSampler};
use crate::data::{Arm, Dataset, Standardizer};
use crate::error::{CcnError, Result};
use crate::fccn::{critic_step, FccnConfig, FccnHeads, Representation};
use crate::nn::{adam_step, AdamState, Tape};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Real;

/// Summary of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub steps: usize,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    /// Holdout g-loss per epoch; empty without a holdout split.
    pub holdout_loss: Vec<f64>,
    /// Mean training objective over the last epoch.
    pub final_train_loss: f64,
    pub stopped_early: bool,
    /// Minibatches in which the Wasserstein term was skipped for lack of
    /// one arm.
    pub skipped_wass_batches: usize,
}

struct Heads<S> {
    config: FccnConfig,
    nets: FccnHeads<S>,
    opt_w: Option<AdamState<S>>,
    opt_a: Option<AdamState<S>>,
    opt_e: AdamState<S>,
    opt_c: AdamState<S>,
    tape_w: Tape<S>,
    tape_a: Tape<S>,
    tape_e: Tape<S>,
    tape_c: Tape<S>,
}

impl<S: Real> Heads<S> {
    fn learned(&self) -> bool {
        !self.nets.is_raw()
    }

    fn feature_dim(&self, p: usize) -> usize {
        let base = if self.learned() { self.nets.q_w() + self.nets.q_a() } else { p };
        base + usize::from(self.config.propensity_feature)
    }

    /// Forward through the heads for one row, filling the tapes. Returns the
    /// features for `g`.
    fn forward(&mut self, x: &[S], feats: &mut Vec<S>) -> Result<()> {
        feats.clear();
        let need_e = self.config.trains_propensity();
        if let (Some(w), Some(a)) = (&self.nets.phi_w, &self.nets.phi_a) {
            w.forward_tape(x, &mut self.tape_w)?;
            a.forward_tape(x, &mut self.tape_a)?;
            feats.extend_from_slice(self.tape_w.output());
            feats.extend_from_slice(self.tape_a.output());
            if need_e {
                self.nets.e_head.forward_tape(self.tape_a.output(), &mut self.tape_e)?;
            }
        } else {
            feats.extend_from_slice(x);
            if need_e {
                self.nets.e_head.forward_tape(x, &mut self.tape_e)?;
            }
        }
        if self.config.propensity_feature {
            feats.push(self.tape_e.output()[0]);
        }
        Ok(())
    }
}

struct Split {
    train: Vec<usize>,
    holdout: Vec<usize>,
}

/// Per-arm split so each arm keeps training rows.
fn split_rows<S: Real>(data: &Dataset<S>, fraction: f64, rng: &mut ChaCha8Rng) -> Result<Split> {
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for arm in Arm::BOTH {
        let mut idx = data.indices_of(arm);
        idx.shuffle(rng);
        let h = ((idx.len() as f64) * fraction).floor() as usize;
        let h = h.min(idx.len().saturating_sub(1));
        holdout.extend_from_slice(&idx[..h]);
        train.extend_from_slice(&idx[h..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok(Split { train, holdout })
}

struct Trainer<'a, S: Real> {
    config: &'a TrainConfig,
    p: usize,
    xs: Vec<S>,
    ys: Vec<S>,
    arms: &'a [u8],
    g: [CdfNetwork<S>; 2],
    g_opt: [Vec<AdamState<S>>; 2],
    ctx: [ProbeCtx<S>; 2],
    heads: Option<Heads<S>>,
    feats: Vec<S>,
    feat_grad: Vec<S>,
    critic_inputs: Vec<S>,
    skipped_wass: usize,
}

impl<'a, S: Real> Trainer<'a, S> {
    /// One joint step on `batch`; `probes` holds `k` values per row.
    fn step(&mut self, batch: &[usize], probes: &[S]) -> Result<S> {
        let k = self.config.probes_per_datum;
        let mut counts = [0usize; 2];
        for &i in batch {
            counts[self.arms[i] as usize] += 1;
        }
        let both = counts[0] > 0 && counts[1] > 0;
        let scale = counts.map(|c| if c > 0 { S::one() / S::c((c * k) as f64) } else { S::zero() });
        let alpha = self.heads.as_ref().map_or(0.0, |h| h.config.alpha);
        let wass_on = alpha > 0.0;
        if wass_on && !both {
            self.skipped_wass += 1;
            log::warn!("wasserstein term skipped: a treatment arm is missing from the batch");
        }
        if wass_on && both {
            self.train_critic(batch, counts)?;
        }

        let mut g_total = S::zero();
        let mut wass = S::zero();
        let mut assign = S::zero();
        let batch_size = S::c(batch.len() as f64);
        for (r, &i) in batch.iter().enumerate() {
            let t = self.arms[i] as usize;
            let y = self.ys[i];
            let zs = &probes[r * k..(r + 1) * k];
            let Some(heads) = self.heads.as_mut() else {
                let x = &self.xs[i * self.p..(i + 1) * self.p];
                g_total += scale[t] * g_loss_row(&mut self.g[t], &mut self.ctx[t], x, y, zs, scale[t], None)?;
                continue;
            };
            let x = &self.xs[i * self.p..(i + 1) * self.p];
            heads.forward(x, &mut self.feats)?;
            let learned = heads.learned();
            let fg = if learned {
                self.feat_grad.clear();
                self.feat_grad.resize(self.feats.len(), S::zero());
                Some(self.feat_grad.as_mut_slice())
            } else {
                None
            };
            g_total += scale[t] * g_loss_row(&mut self.g[t], &mut self.ctx[t], &self.feats, y, zs, scale[t], fg)?;

            let (q_w, q_a) = (heads.nets.q_w(), heads.nets.q_a());
            let (gw, rest) = self.feat_grad.split_at_mut(if learned { q_w } else { 0 });
            let ga = if learned { &mut rest[..q_a] } else { &mut rest[..0] };

            if wass_on && both {
                let w_in: &[S] = if learned { heads.tape_w.output() } else { x };
                heads.nets.critic.forward_tape(w_in, &mut heads.tape_c)?;
                let d = heads.tape_c.output()[0];
                let sign = if t == 1 { S::one() } else { -S::one() };
                let u = sign / S::c(counts[t] as f64);
                wass += u * d;
                if learned {
                    heads.nets.critic.backward_tape(&heads.tape_c, &[S::c(alpha) * u], Some(gw))?;
                }
            }
            if heads.config.trains_propensity() {
                let e = heads.tape_e.output()[0];
                let (l, dl) = bce_with_grad(t == 1, e);
                assign += l / batch_size;
                let beta = heads.config.beta;
                let weight = if beta > 0.0 { S::c(beta) } else { S::one() };
                let into_a = if beta > 0.0 && learned { Some(&mut *ga) } else { None };
                heads.nets.e_head.backward_tape(&heads.tape_e, &[weight * dl / batch_size], into_a)?;
            }
            if learned {
                let (pw, pa) = (heads.nets.phi_w.as_mut().unwrap(), heads.nets.phi_a.as_mut().unwrap());
                pw.backward_tape(&heads.tape_w, gw, None)?;
                pa.backward_tape(&heads.tape_a, ga, None)?;
            }
        }

        for t in 0..2 {
            self.g[t].adam_step(&mut self.g_opt[t])?;
        }
        let mut objective = g_total;
        if let Some(h) = self.heads.as_mut() {
            h.nets.critic.zero_grads();
            if let (Some(n), Some(st)) = (h.nets.phi_w.as_mut(), h.opt_w.as_mut()) {
                adam_step(n, st)?;
            }
            if let (Some(n), Some(st)) = (h.nets.phi_a.as_mut(), h.opt_a.as_mut()) {
                adam_step(n, st)?;
            }
            if h.config.trains_propensity() {
                adam_step(&mut h.nets.e_head, &mut h.opt_e)?;
            }
            objective += S::c(h.config.alpha) * wass + S::c(h.config.beta) * assign;
        }
        Ok(objective)
    }

    /// Inner maximization of the critic gap on this batch's `phi_w` outputs.
    fn train_critic(&mut self, batch: &[usize], counts: [usize; 2]) -> Result<()> {
        let p = self.p;
        let heads = self.heads.as_mut().expect("critic needs heads");
        let q = heads.nets.q_w();
        self.critic_inputs.clear();
        for &i in batch {
            let x = &self.xs[i * p..(i + 1) * p];
            match &heads.nets.phi_w {
                Some(w) => {
                    w.forward_tape(x, &mut heads.tape_w)?;
                    self.critic_inputs.extend_from_slice(heads.tape_w.output());
                }
                None => self.critic_inputs.extend_from_slice(x),
            }
        }
        let mut groups: [Vec<&[S]>; 2] = [Vec::with_capacity(counts[0]), Vec::with_capacity(counts[1])];
        for (r, &i) in batch.iter().enumerate() {
            groups[self.arms[i] as usize].push(&self.critic_inputs[r * q..(r + 1) * q]);
        }
        let bound = S::c(heads.config.clip_bound);
        for _ in 0..heads.config.critic_steps {
            critic_step(&mut heads.nets.critic, &mut heads.opt_c, &groups[0], &groups[1], bound)?;
        }
        Ok(())
    }

    /// Sum over arms of the mean g-loss on the holdout rows.
    fn holdout_loss(&mut self, rows: &[usize], probes: &[S]) -> Result<f64> {
        let k = self.config.probes_per_datum;
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for (r, &i) in rows.iter().enumerate() {
            let t = self.arms[i] as usize;
            let y = self.ys[i];
            let x = &self.xs[i * self.p..(i + 1) * self.p];
            let feats: &[S] = match self.heads.as_mut() {
                Some(h) => {
                    h.forward(x, &mut self.feats)?;
                    &self.feats
                }
                None => x,
            };
            let g = &self.g[t];
            let ctx = &mut self.ctx[t];
            g.prepare(feats, ctx)?;
            for &z in &probes[r * k..(r + 1) * k] {
                sums[t] += bce_with_grad(y < z, g.probe(ctx, z)).0.to_f64_lossy();
            }
            counts[t] += 1;
        }
        Ok((0..2).filter(|&t| counts[t] > 0).map(|t| sums[t] / (counts[t] * k) as f64).sum())
    }

    fn scale_learning_rate(&mut self, factor: f64) {
        let mut states: Vec<&mut AdamState<S>> = self.g_opt.iter_mut().flatten().collect();
        if let Some(h) = self.heads.as_mut() {
            states.extend(h.opt_w.iter_mut());
            states.extend(h.opt_a.iter_mut());
            states.push(&mut h.opt_e);
        }
        for s in states {
            s.config.learning_rate *= factor;
        }
    }

    fn snapshot(&self) -> Vec<Vec<S>> {
        let mut s = self.g[0].snapshot();
        s.extend(self.g[1].snapshot());
        if let Some(h) = &self.heads {
            s.extend(h.nets.nets().iter().map(|n| n.params().to_vec()));
        }
        s
    }

    fn restore(&mut self, snap: &[Vec<S>]) {
        let n0 = self.g[0].nets().len();
        let n1 = self.g[1].nets().len();
        self.g[0].restore(&snap[..n0]);
        self.g[1].restore(&snap[n0..n0 + n1]);
        if let Some(h) = self.heads.as_mut() {
            for (net, p) in h.nets.nets_mut().into_iter().zip(&snap[n0 + n1..]) {
                net.params_mut().copy_from_slice(p);
            }
        }
    }
}

fn draw_probes<S: Real>(out: &mut Vec<S>, n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) {
    out.clear();
    out.extend((0..n).map(|_| S::c(rng.random_range(lo..hi))));
}

/// Trains `g0`/`g1`, with FCCN heads when `fccn` is given.
pub(crate) fn fit<S: Real>(data: &Dataset<S>, config: &TrainConfig, fccn: Option<&FccnConfig>) -> Result<CdfModel<S>> {
    config.validate()?;
    if let Some(f) = fccn {
        f.validate()?;
    }
    data.require_both_arms()?;
    let p = data.p();
    let sampler = ZSampler::from_outcomes(data.outcome(), config.padding_fraction)?;
    let standardizer = if config.standardize_covariates { Standardizer::fit(data) } else { Standardizer::identity(p) };
    let mut xs = vec![S::zero(); data.n() * p];
    for i in 0..data.n() {
        standardizer.apply_into(data.row(i), &mut xs[i * p..(i + 1) * p]);
    }
    let ys: Vec<S> = data.outcome().iter().map(|&y| sampler.to_unit(y)).collect();

    let heads = match fccn {
        Some(f) => {
            let nets = FccnHeads::new(p, f, config.activation, &mut stream_rng(config.seed, Stream::InitHeads))?;
            let opt = |n: &Option<crate::nn::DenseNet<S>>| n.as_ref().map(|n| AdamState::for_net(n, config.adam));
            Some(Heads {
                config: f.clone(),
                opt_w: opt(&nets.phi_w),
                opt_a: opt(&nets.phi_a),
                opt_e: AdamState::for_net(&nets.e_head, config.adam),
                opt_c: AdamState::for_net(&nets.critic, f.critic_adam),
                tape_w: nets.phi_w.as_ref().map(|n| n.new_tape()).unwrap_or_default(),
                tape_a: nets.phi_a.as_ref().map(|n| n.new_tape()).unwrap_or_default(),
                tape_e: nets.e_head.new_tape(),
                tape_c: nets.critic.new_tape(),
                nets,
            })
        }
        None => None,
    };
    let feature_dim = heads.as_ref().map_or(p, |h| h.feature_dim(p));
    let make_g = |stream| {
        CdfNetwork::new(
            config.architecture,
            feature_dim,
            &config.hidden_widths,
            config.activation,
            config.monotone_components,
            &mut stream_rng(config.seed, stream),
        )
    };
    let g = [make_g(Stream::InitG0)?, make_g(Stream::InitG1)?];
    let g_opt = [g[0].new_optimizer(config.adam), g[1].new_optimizer(config.adam)];
    let ctx = [g[0].new_ctx(), g[1].new_ctx()];

    let split = split_rows(data, config.holdout_fraction, &mut stream_rng(config.seed, Stream::Split))?;
    let k = config.probes_per_datum;
    let (lo, hi) = sampler.bounds();
    let (z_lo, z_hi) = (sampler.to_unit(lo), sampler.to_unit(hi));
    let mut holdout_probes = Vec::new();
    draw_probes(
        &mut holdout_probes,
        split.holdout.len() * k,
        z_lo,
        z_hi,
        &mut stream_rng(config.seed, Stream::HoldoutProbes),
    );

    let mut trainer = Trainer {
        config,
        p,
        xs,
        ys,
        arms: data.treatment(),
        g,
        g_opt,
        ctx,
        heads,
        feats: Vec::new(),
        feat_grad: Vec::new(),
        critic_inputs: Vec::new(),
        skipped_wass: 0,
    };

    let mut batch_rng = stream_rng(config.seed, Stream::Batches);
    let mut probe_rng = stream_rng(config.seed, Stream::Probes);
    let mut order = split.train.clone();
    let mut probes = Vec::new();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Vec<Vec<S>>)> = None;
    let mut since_best = 0usize;
    let mut reference = f64::INFINITY;

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut batch_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            draw_probes(&mut probes, batch.len() * k, z_lo, z_hi, &mut probe_rng);
            let loss = trainer.step(batch, &probes)?;
            report.steps += 1;
            if !loss.is_finite() {
                return Err(CcnError::Diverged { what: "loss", step: report.steps });
            }
            epoch_loss += loss.to_f64_lossy();
            batches += 1;
            if config.max_steps.is_some_and(|m| report.steps >= m) {
                report.epochs = epoch;
                report.final_train_loss = epoch_loss / batches as f64;
                break 'epochs;
            }
        }
        report.epochs = epoch;
        report.final_train_loss = epoch_loss / batches.max(1) as f64;
        if split.holdout.is_empty() {
            continue;
        }
        let h = trainer.holdout_loss(&split.holdout, &holdout_probes)?;
        report.holdout_loss.push(h);
        if best.as_ref().is_none_or(|(b, _)| h < *b) {
            best = Some((h, trainer.snapshot()));
            report.best_epoch = epoch;
        }
        if h < reference - config.min_delta {
            reference = h;
            since_best = 0;
        } else {
            since_best += 1;
            if config.lr_decay < 1.0 && since_best.is_multiple_of(config.decay_patience) {
                trainer.scale_learning_rate(config.lr_decay);
            }
            if since_best >= config.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, snap)) = &best {
        trainer.restore(snap);
    } else {
        report.best_epoch = report.epochs;
    }
    report.skipped_wass_batches = trainer.skipped_wass;

    let representation =
        trainer.heads.map(|h| Representation { propensity_feature: h.config.propensity_feature, heads: h.nets });
    let mut model = CdfModel::from_parts(trainer.g, sampler, standardizer, representation)?;
    model.report = Some(report);
    Ok(model)
}
