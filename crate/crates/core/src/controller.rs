//! Adaptive MPMC-IL: repeated fixed-D windows separated by component
//! updates (prune the lightest component, add one at the particle with the
//! largest likelihood ratio), under a global budget.

use std::io::Write;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{estimate_objective, sample_batch, smoothed_objective, update_parameters, ObjectivePoint};
use crate::error::{Error, Result};
use crate::math::SpdMatrix;
use crate::mixture::{MixtureParams, MixtureSnapshot};
use crate::model::TargetModel;
use crate::par::map_indexed;
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WindowRule {
    /// Stop once more than `t_w` iterations have run.
    Fixed { t_w: usize },
    /// Stop when the `s`-smoothed objective moves by less than `eps0`.
    Adaptive { s: usize, eps0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub n_particles: usize,
    pub n_add: usize,
    pub window: WindowRule,
    pub alpha_min: f64,
    pub alpha_add: f64,
    pub sigma_add_scale: f64,
    pub t_max: usize,
    pub d_max: usize,
    pub eps_tot: f64,
    /// Span of the reported smoothed objective under a fixed window.
    pub smoothing_span: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            n_particles: 10_000,
            n_add: 10_000,
            window: WindowRule::Fixed { t_w: 20 },
            alpha_min: 0.02,
            alpha_add: 0.1,
            sigma_add_scale: 1.0,
            t_max: 200,
            d_max: 10,
            eps_tot: 0.01,
            smoothing_span: 5,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.n_particles < 2 {
            return fail(format!("n_particles must be >= 2, got {}", self.n_particles));
        }
        if self.n_add < 1 {
            return fail("n_add must be >= 1".into());
        }
        match self.window {
            WindowRule::Fixed { t_w } if t_w < 1 => return fail("t_w must be >= 1".into()),
            WindowRule::Adaptive { s, .. } if s < 1 => return fail("s must be >= 1".into()),
            WindowRule::Adaptive { eps0, .. } if !(eps0 > 0.0) => {
                return fail(format!("eps0 must be > 0, got {eps0}"))
            }
            _ => {}
        }
        if !(self.alpha_add > 0.0 && self.alpha_add < 1.0) {
            return fail(format!("alpha_add must lie in (0,1), got {}", self.alpha_add));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < 0.5) {
            return fail(format!("alpha_min must lie in (0,1/2), got {}", self.alpha_min));
        }
        if !(self.sigma_add_scale > 0.0) || !self.sigma_add_scale.is_finite() {
            return fail(format!("sigma_add_scale must be > 0, got {}", self.sigma_add_scale));
        }
        if self.t_max < 1 {
            return fail("t_max must be >= 1".into());
        }
        if self.d_max < 1 {
            return fail("d_max must be >= 1".into());
        }
        if !(self.eps_tot >= 0.0) {
            return fail(format!("eps_tot must be >= 0, got {}", self.eps_tot));
        }
        if self.smoothing_span < 1 {
            return fail("smoothing_span must be >= 1".into());
        }
        Ok(())
    }

    fn span(&self) -> usize {
        match self.window {
            WindowRule::Fixed { .. } => self.smoothing_span,
            WindowRule::Adaptive { s, .. } => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    #[serde(rename = "T_max")]
    TMax,
    #[serde(rename = "D_max")]
    DMax,
    #[serde(rename = "eps_tot")]
    EpsTot,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::TMax => "T_max",
            StopReason::DMax => "D_max",
            StopReason::EpsTot => "eps_tot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    WindowStop,
    ComponentAdded,
    ComponentRemoved,
    GlobalStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Iterations completed when the event fired.
    pub iteration: usize,
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

/// One line of `trace.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header { config: AdaptiveConfig, dim: usize },
    Objective(ObjectivePoint),
    Event(TraceEvent),
    Snapshot { window: usize, mixture: MixtureSnapshot },
}

/// Chronological record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub stop_reason: Option<StopReason>,
}

impl RunTrace {
    pub fn objective(&self) -> impl Iterator<Item = &ObjectivePoint> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Objective(p) => Some(p),
            _ => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &MixtureSnapshot> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Snapshot { mixture, .. } => Some(mixture),
            _ => None,
        })
    }

    /// Total iterations, i.e. the number of objective evaluations.
    pub fn t_tot(&self) -> usize {
        self.objective().count()
    }

    /// Smoothed objective at the end of each completed window.
    pub fn window_ends(&self) -> Vec<f64> {
        self.events()
            .filter(|e| e.kind == EventKind::WindowStop)
            .filter_map(|e| e.payload["L_cur"].as_f64())
            .collect()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective().last().map(|p| p.smoothed)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self> {
        let mut trace = RunTrace::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let record: TraceRecord = serde_json::from_str(line)?;
            if let TraceRecord::Event(e) = &record {
                if e.kind == EventKind::GlobalStop {
                    trace.stop_reason = serde_json::from_value(e.payload["reason"].clone()).ok();
                }
            }
            trace.records.push(record);
        }
        Ok(trace)
    }

    fn event(&mut self, iteration: usize, kind: EventKind, payload: serde_json::Value) {
        self.records.push(TraceRecord::Event(TraceEvent {
            iteration,
            kind,
            payload,
        }));
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub trace: RunTrace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} iterations)", self.error, self.trace.t_tot())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Window stopping rule evaluated after `t` iterations, given that window's
/// objective values `L_1..L_t`.
pub fn window_should_stop(rule: WindowRule, t: usize, history: &[f64]) -> bool {
    assert!(t >= 1, "t counts completed iterations");
    match rule {
        WindowRule::Fixed { t_w } => t > t_w,
        WindowRule::Adaptive { s, eps0 } => {
            if t < 2 || history.len() < t {
                return false;
            }
            let cur = smoothed_objective(&history[..t], s);
            let prev = smoothed_objective(&history[..t - 1], s);
            (cur - prev).abs() < eps0
        }
    }
}

/// Removes the lightest component if its weight is below `alpha_min`.
pub fn prune_components(params: &MixtureParams, alpha_min: f64) -> (MixtureParams, Option<usize>) {
    if params.n_components() < 2 {
        return (params.clone(), None);
    }
    let mut best = 0;
    for (d, &a) in params.weights().iter().enumerate() {
        if a < params.weights()[best] {
            best = d;
        }
    }
    if params.weights()[best] < alpha_min {
        let pruned = params.remove_component(best).expect("D >= 2");
        (pruned, Some(best))
    } else {
        (params.clone(), None)
    }
}

/// Candidate component for the next round.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub mean: Vec<f64>,
    pub cov: SpdMatrix,
    /// Unnormalized log likelihood ratio at the chosen draw.
    pub log_lr: f64,
    pub index: usize,
}

/// Draws `n_add` particles from the current mixture and returns the one of
/// largest likelihood ratio as the mean of a new component.
pub fn propose_component<M: TargetModel + ?Sized>(
    params: &MixtureParams,
    model: &M,
    n_add: usize,
    sigma_add_scale: f64,
    stream: &SeedStream,
) -> Result<Proposal> {
    if n_add < 1 {
        return Err(Error::invalid("n_add must be >= 1"));
    }
    let draws = map_indexed(n_add, |i| {
        let mut rng = stream.child(i as u64).rng();
        let (theta, _) = params.sample_one(&mut rng);
        let lp = model.log_prior(&theta);
        let lpsi = if lp == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            model.log_psi(&theta, &mut rng)
        };
        let lq = params.mixture_log_density(&theta).expect("own draw");
        (theta, lp, lpsi, lq)
    });
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, lp, lpsi, lq)) in draws.iter().enumerate() {
        if lpsi.is_nan() || *lpsi == f64::INFINITY || lp.is_nan() {
            return Err(Error::InvalidEstimate {
                index: i,
                value: *lpsi,
            });
        }
        if *lq == f64::NEG_INFINITY {
            continue;
        }
        let lr = lp + lpsi - lq;
        if lr > f64::NEG_INFINITY && best.map_or(true, |(_, b)| lr > b) {
            best = Some((i, lr));
        }
    }
    let (index, log_lr) = best.ok_or(Error::NoInformativeProposal)?;
    let mut draws = draws;
    Ok(Proposal {
        mean: draws.swap_remove(index).0,
        cov: SpdMatrix::scaled_identity(params.dim(), sigma_add_scale),
        log_lr,
        index,
    })
}

/// Runs adaptive MPMC-IL from a one-component start.
///
/// Randomness comes from the `"engine"` and `"proposal"` children of
/// `stream`; iteration `k` of the run uses `engine.child(k)`.
pub fn run_adaptive<M: TargetModel + ?Sized>(
    model: &M,
    init: &MixtureParams,
    config: &AdaptiveConfig,
    stream: &SeedStream,
) -> std::result::Result<(MixtureParams, RunTrace), RunFailure> {
    let mut trace = RunTrace::default();
    let fail = |error: Error, trace: RunTrace| RunFailure { error, trace };
    if let Err(e) = config.validate() {
        return Err(fail(e, trace));
    }
    if init.n_components() != 1 {
        return Err(fail(
            Error::invalid(format!("initial mixture must have D = 1, got {}", init.n_components())),
            trace,
        ));
    }
    if init.dim() != model.dim() {
        return Err(fail(
            Error::DimensionMismatch {
                expected: model.dim(),
                found: init.dim(),
            },
            trace,
        ));
    }
    trace.records.push(TraceRecord::Header {
        config: config.clone(),
        dim: model.dim(),
    });

    let engine = stream.named("engine");
    let proposal = stream.named("proposal");
    let span = config.span();
    let mut params = init.clone();
    let mut t_tot = 0usize;
    let mut l_last = f64::NAN;
    let mut window = 0usize;

    let reason = loop {
        // one window at fixed D
        let mut history = Vec::new();
        let mut smoothed = f64::NAN;
        let mut t = 0;
        while t_tot < config.t_max {
            let batch = match sample_batch(&params, model, config.n_particles, &engine.child(t_tot as u64)) {
                Ok(b) => b,
                Err(e) => return Err(fail(e, trace)),
            };
            let l = estimate_objective(&batch, &params);
            params = update_parameters(&batch, &params);
            t_tot += 1;
            t += 1;
            history.push(l);
            smoothed = smoothed_objective(&history, span);
            trace.records.push(TraceRecord::Objective(ObjectivePoint {
                iteration: t_tot - 1,
                window,
                t,
                value: l,
                smoothed,
            }));
            debug!("iter {t_tot} window {window} L = {l:.6} ESS = {:.1}", batch.ess);
            if window_should_stop(config.window, t, &history) {
                break;
            }
        }
        let l_cur = smoothed;
        let delta = (l_cur - l_last).abs();
        trace.event(
            t_tot,
            EventKind::WindowStop,
            json!({
                "window": window,
                "iterations": t,
                "L_cur": l_cur,
                "delta_L": if window > 0 { json!(delta) } else { serde_json::Value::Null },
            }),
        );
        info!("window {window}: {t} iterations, D = {}, L = {l_cur:.6}", params.n_components());
        window += 1;

        if t_tot >= config.t_max {
            break StopReason::TMax;
        }
        let (pruned, removed) = prune_components(&params, config.alpha_min);
        if let Some(index) = removed {
            trace.event(
                t_tot,
                EventKind::ComponentRemoved,
                json!({ "index": index, "weight": params.weights()[index] }),
            );
            params = pruned;
        }
        if params.n_components() + 1 > config.d_max {
            break StopReason::DMax;
        }
        if window >= 2 && delta < config.eps_tot {
            break StopReason::EpsTot;
        }
        let prop = match propose_component(
            &params,
            model,
            config.n_add,
            config.sigma_add_scale,
            &proposal.child(window as u64 - 1),
        ) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, trace)),
        };
        params = params
            .add_component(prop.mean.clone(), prop.cov, config.alpha_add)
            .expect("validated alpha_add and dimension");
        trace.event(
            t_tot,
            EventKind::ComponentAdded,
            json!({ "mean": prop.mean, "weight": config.alpha_add, "log_lr": prop.log_lr }),
        );
        trace.records.push(TraceRecord::Snapshot {
            window: window - 1,
            mixture: params.snapshot(),
        });
        l_last = l_cur;
    };

    trace.records.push(TraceRecord::Snapshot {
        window: window - 1,
        mixture: params.snapshot(),
    });
    trace.event(
        t_tot,
        EventKind::GlobalStop,
        json!({ "reason": reason, "T_tot": t_tot, "D": params.n_components() }),
    );
    trace.stop_reason = Some(reason);
    Ok((params, trace))
}
