//! The Wang-Landau outer loop: proposal, acceptance against the
//! instantaneous entropy, histogram updates, flatness-gated iterations,
//! representative-sample capture, and checkpoint/resume.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dos_histogram::{BinIndex, BinSpec, DosHistogram, ModificationSchedule};
use crate::energy_models::{Config, EnergyModel, GradMatrix, ModelError};
use crate::entropy_interp::InterpView;
use crate::numfmt::g17;
use crate::proposals::{propose_gwg, propose_random, ProposalError, ProposalOutcome};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
    #[error("initial config falls outside the preset bin range (energy {0})")]
    InitOutOfRange(f64),
    #[error("iteration {iteration} exceeded {max_steps} steps without flatness")]
    IterationTimeout { iteration: u32, max_steps: u64 },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("checkpoint was written for model '{expected}', got '{actual}'")]
    ModelMismatch { expected: String, actual: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    Random,
    Gwg,
}

impl ProposalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProposalKind::Random => "random",
            ProposalKind::Gwg => "gwg",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "random" => Some(ProposalKind::Random),
            "gwg" => Some(ProposalKind::Gwg),
            _ => None,
        }
    }
}

/// Engine tunables; defaults suit the stock -300:100:1 binning.
#[derive(Debug, Clone)]
pub struct EngineParams {
    pub flatness_check_stride: u64,
    pub max_steps_per_iteration: u64,
    pub sample_stride: u64,
    pub group_width: f64,
    pub group_cap: usize,
    /// Re-draw nothing, but reset to the initial config at the start of
    /// every iteration instead of continuing the walk.
    pub restart_each_iteration: bool,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            flatness_check_stride: 10_000,
            max_steps_per_iteration: 100_000_000,
            sample_stride: 50_000,
            group_width: 5.0,
            group_cap: 200,
            restart_each_iteration: false,
        }
    }
}

/// Configurations captured every `sample_stride` steps, filed by the
/// output-value group they map to (groups are `group_width` wide).
#[derive(Debug, Clone)]
pub struct RepresentativeStore {
    pub group_width: f64,
    pub sample_stride: u64,
    pub cap: usize,
    pub groups: BTreeMap<i64, Vec<(Config, f64, u64)>>,
}

impl RepresentativeStore {
    pub fn new(group_width: f64, sample_stride: u64, cap: usize) -> Self {
        assert!(group_width > 0.0 && sample_stride > 0 && cap > 0);
        RepresentativeStore { group_width, sample_stride, cap, groups: BTreeMap::new() }
    }

    pub fn offer(&mut self, config: &Config, energy: f64, step: u64) {
        let group = (energy / self.group_width).floor() as i64;
        let list = self.groups.entry(group).or_default();
        if list.len() < self.cap {
            list.push((config.clone(), energy, step));
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = format!(
            "{{\"group_width\":{},\"sample_stride\":{},\"cap\":{},\"groups\":[",
            g17(self.group_width),
            self.sample_stride,
            self.cap
        );
        let mut first = true;
        for (group, samples) in &self.groups {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!(
                "{{\"lo\":{},\"hi\":{},\"samples\":[",
                g17(*group as f64 * self.group_width),
                g17((*group + 1) as f64 * self.group_width)
            ));
            for (i, (config, energy, step)) in samples.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&format!(
                    "{{\"energy\":{},\"step\":{},\"config\":[{}]}}",
                    g17(*energy),
                    step,
                    config.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
                ));
            }
            out.push_str("]}");
        }
        out.push_str("]}");
        out
    }
}

/// Full resumable sampler state for one walker.
pub struct WalkerState {
    pub config: Config,
    pub energy: f64,
    pub hist: DosHistogram,
    pub sched: ModificationSchedule,
    pub step_count: u64,
    pub rng: ChaCha8Rng,
    pub proposal: ProposalKind,
    /// Model gradient at `config`, reused across steps under GWG.
    cached_grad: Option<GradMatrix>,
    /// When false, visits bump `h` but leave `s` untouched (validation
    /// runs against a preloaded exact entropy).
    pub update_entropy: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub accepted: bool,
    pub old_bin: BinIndex,
    pub new_bin: BinIndex,
}

/// ln A = min(0, (s_x - s_x') + log q_rev - log q_fwd); s_x' = +inf
/// (out-of-range candidate) forces rejection.
pub fn acceptance_log_ratio(s_x: f64, s_x_new: f64, log_q_fwd: f64, log_q_rev: f64) -> f64 {
    if s_x_new == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    ((s_x - s_x_new) + log_q_rev - log_q_fwd).min(0.0)
}

impl WalkerState {
    pub fn new(
        model: &dyn EnergyModel,
        bins: BinSpec,
        ln_f0: f64,
        proposal: ProposalKind,
        seed: u64,
        init: Config,
    ) -> Result<Self, EngineError> {
        let energy = model.energy(&init)?;
        let hist = DosHistogram::new(bins);
        if !matches!(bins.bin_index(energy), BinIndex::In(_)) {
            return Err(EngineError::InitOutOfRange(energy));
        }
        Ok(WalkerState {
            config: init,
            energy,
            hist,
            sched: ModificationSchedule::new(ln_f0),
            step_count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            proposal,
            cached_grad: None,
            update_entropy: true,
        })
    }

    fn draw_proposal(&mut self, model: &dyn EnergyModel) -> Result<(ProposalOutcome, Option<(f64, GradMatrix)>), EngineError> {
        match self.proposal {
            ProposalKind::Random => {
                let out = propose_random(&self.config, model.space(), &mut self.rng);
                Ok((out, None))
            }
            ProposalKind::Gwg => {
                // target f(x) = -S_interp(y(x)); chain rule gives
                // f_grad = -slope(z) * dz/d onehot
                let view = InterpView::from_histogram(&self.hist)
                    .expect("preset bin range has >= 2 bins");
                if self.cached_grad.is_none() {
                    self.cached_grad = Some(model.grad_onehot(&self.config)?);
                }
                let (_, slope) = view.eval(self.energy);
                let f_grad = self.cached_grad.as_ref().unwrap().scaled(-slope);

                let mut candidate_eval: Option<(f64, GradMatrix)> = None;
                let out = propose_gwg(
                    &self.config,
                    &f_grad,
                    |candidate| {
                        let (z, grad) = model
                            .energy_and_grad(candidate)
                            .map_err(|e| ProposalError::Callback(e.to_string()))?;
                        let (_, cand_slope) = view.eval(z);
                        let scaled = grad.scaled(-cand_slope);
                        candidate_eval = Some((z, grad));
                        Ok(scaled)
                    },
                    &mut self.rng,
                )?;
                Ok((out, candidate_eval))
            }
        }
    }

    /// One WL step: propose, accept per the inverted-entropy rule, then
    /// update S and H at the post-decision state's bin.
    pub fn wl_step(
        &mut self,
        model: &dyn EnergyModel,
        reps: Option<&mut RepresentativeStore>,
    ) -> Result<StepRecord, EngineError> {
        let (outcome, candidate_eval) = self.draw_proposal(model)?;
        let (cand_energy, cand_grad) = match candidate_eval {
            Some((z, grad)) => (z, Some(grad)),
            None => (model.energy(&outcome.candidate)?, None),
        };
        let old_bin = self.hist.spec.bin_index(self.energy);
        let new_bin = self.hist.spec.bin_index(cand_energy);
        let ln_a = acceptance_log_ratio(
            self.hist.s_at(old_bin),
            self.hist.s_at(new_bin),
            outcome.log_q_forward,
            outcome.log_q_reverse,
        );
        let u: f64 = self.rng.gen();
        let accepted = ln_a >= 0.0 || u.ln() < ln_a;
        if accepted {
            self.config = outcome.candidate;
            self.energy = cand_energy;
            self.cached_grad = cand_grad;
        }
        let current_bin = if accepted { new_bin } else { old_bin };
        let ln_f = if self.update_entropy { self.sched.ln_f() } else { 0.0 };
        self.hist.record_visit(current_bin, ln_f);
        self.step_count += 1;
        if let Some(store) = reps {
            if self.step_count % store.sample_stride == 0 {
                store.offer(&self.config, self.energy, self.step_count);
            }
        }
        Ok(StepRecord { accepted, old_bin, new_bin })
    }

    /// Repeats wl_step until the visit histogram is flat at a check
    /// point; returns the number of steps taken. `h` is left untouched
    /// for the caller to advance.
    pub fn run_iteration(
        &mut self,
        model: &dyn EnergyModel,
        params: &EngineParams,
        reps: Option<&mut RepresentativeStore>,
    ) -> Result<u64, EngineError> {
        let mut steps = 0u64;
        let mut reps = reps;
        loop {
            self.wl_step(model, reps.as_deref_mut())?;
            steps += 1;
            if steps % params.flatness_check_stride == 0 && self.hist.is_flat() {
                return Ok(steps);
            }
            if steps >= params.max_steps_per_iteration {
                return Err(EngineError::IterationTimeout {
                    iteration: self.sched.iteration,
                    max_steps: params.max_steps_per_iteration,
                });
            }
        }
    }
}

/// Per-run summary.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub iteration_steps: Vec<u64>,
    pub overflow_low: u64,
    pub overflow_high: u64,
    pub wall_seconds: f64,
    pub final_ln_f: f64,
}

/// T rounds of run_iteration + advance_iteration from a fresh walker.
pub fn run(
    model: &dyn EnergyModel,
    bins: BinSpec,
    iterations: u32,
    ln_f0: f64,
    proposal: ProposalKind,
    seed: u64,
    init: Config,
    params: &EngineParams,
) -> Result<(WalkerState, RepresentativeStore, RunReport), EngineError> {
    assert!(iterations >= 1);
    let mut state = WalkerState::new(model, bins, ln_f0, proposal, seed, init.clone())?;
    let mut reps = RepresentativeStore::new(params.group_width, params.sample_stride, params.group_cap);
    let report = run_from(&mut state, model, iterations, &mut reps, params, &init)?;
    Ok((state, reps, report))
}

/// Continues an existing walker until its iteration counter reaches
/// `iterations`.
pub fn run_from(
    state: &mut WalkerState,
    model: &dyn EnergyModel,
    iterations: u32,
    reps: &mut RepresentativeStore,
    params: &EngineParams,
    init: &Config,
) -> Result<RunReport, EngineError> {
    let started = Instant::now();
    let mut iteration_steps = Vec::new();
    while state.sched.iteration < iterations {
        if params.restart_each_iteration && state.step_count > 0 {
            state.config = init.clone();
            state.energy = model.energy(init)?;
            state.cached_grad = None;
        }
        let steps = state.run_iteration(model, params, Some(reps))?;
        iteration_steps.push(steps);
        let mut sched = state.sched;
        state.hist.advance_iteration(&mut sched);
        state.sched = sched;
    }
    Ok(RunReport {
        iteration_steps,
        overflow_low: state.hist.overflow_low,
        overflow_high: state.hist.overflow_high,
        wall_seconds: started.elapsed().as_secs_f64(),
        final_ln_f: state.sched.ln_f(),
    })
}

fn rng_to_hex(rng: &ChaCha8Rng) -> String {
    let mut bytes = Vec::with_capacity(56);
    bytes.extend_from_slice(&rng.get_seed());
    bytes.extend_from_slice(&rng.get_stream().to_le_bytes());
    bytes.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

fn rng_from_hex(hex: &str) -> Result<ChaCha8Rng, EngineError> {
    if hex.len() != 112 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(EngineError::Checkpoint(format!("bad rng state '{}'", hex)));
    }
    let bytes: Vec<u8> = (0..56)
        .map(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap())
        .collect();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&bytes[..32]);
    let stream = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let word_pos = u128::from_le_bytes(bytes[40..56].try_into().unwrap());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(rng)
}

impl WalkerState {
    /// Serializes the full resumable state (wlck-v1). Restoring and
    /// stepping continues bit-identically with the same RNG stream.
    pub fn snapshot(&self, model_name: &str) -> String {
        let spec = self.hist.spec;
        let mut out = String::from("{\"format\":\"wlck-v1\",");
        out.push_str(&format!("\"model\":\"{}\",", model_name));
        out.push_str(&format!(
            "\"bins\":{{\"lo\":{},\"hi\":{},\"width\":{}}},",
            g17(spec.lo),
            g17(spec.hi),
            g17(spec.width)
        ));
        out.push_str("\"s\":[");
        out.push_str(&self.hist.s.iter().map(|&v| g17(v)).collect::<Vec<_>>().join(","));
        out.push_str("],\"h\":[");
        out.push_str(&self.hist.h.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","));
        out.push_str("],\"visited\":[");
        out.push_str(
            &self
                .hist
                .visited
                .iter()
                .map(|&v| if v { "true" } else { "false" })
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push_str(&format!(
            "],\"overflow_low\":{},\"overflow_high\":{},",
            self.hist.overflow_low, self.hist.overflow_high
        ));
        out.push_str(&format!(
            "\"ln_f0\":{},\"iteration\":{},\"step_count\":{},",
            g17(self.sched.ln_f0),
            self.sched.iteration,
            self.step_count
        ));
        out.push_str(&format!("\"rng\":\"{}\",", rng_to_hex(&self.rng)));
        out.push_str(&format!(
            "\"config\":[{}],",
            self.config.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        ));
        out.push_str(&format!("\"proposal\":\"{}\"}}", self.proposal.as_str()));
        out
    }

    pub fn restore(text: &str, model: &dyn EnergyModel) -> Result<Self, EngineError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        if v["format"].as_str() != Some("wlck-v1") {
            return Err(EngineError::Checkpoint(format!("bad magic {}", v["format"])));
        }
        let name = v["model"].as_str().unwrap_or("");
        if name != model.name() {
            return Err(EngineError::ModelMismatch {
                expected: name.to_string(),
                actual: model.name().to_string(),
            });
        }
        let field = |k: &str| -> Result<&serde_json::Value, EngineError> {
            v.get(k).ok_or_else(|| EngineError::Checkpoint(format!("missing field {}", k)))
        };
        let spec = BinSpec::new(
            field("bins")?["lo"].as_f64().unwrap_or(f64::NAN),
            field("bins")?["hi"].as_f64().unwrap_or(f64::NAN),
            field("bins")?["width"].as_f64().unwrap_or(f64::NAN),
        )
        .map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        let reals = |k: &str| -> Result<Vec<f64>, EngineError> {
            field(k)?
                .as_array()
                .ok_or_else(|| EngineError::Checkpoint(format!("{} not an array", k)))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| EngineError::Checkpoint(format!("{} entry", k))))
                .collect()
        };
        let s = reals("s")?;
        let h: Vec<u64> = field("h")?
            .as_array()
            .ok_or_else(|| EngineError::Checkpoint("h not an array".into()))?
            .iter()
            .map(|x| x.as_u64().unwrap_or(0))
            .collect();
        let visited: Vec<bool> = field("visited")?
            .as_array()
            .ok_or_else(|| EngineError::Checkpoint("visited not an array".into()))?
            .iter()
            .map(|x| x.as_bool().unwrap_or(false))
            .collect();
        let n = spec.bin_count();
        if s.len() != n || h.len() != n || visited.len() != n {
            return Err(EngineError::Checkpoint("histogram length mismatch".into()));
        }
        let config = Config::new(
            field("config")?
                .as_array()
                .ok_or_else(|| EngineError::Checkpoint("config not an array".into()))?
                .iter()
                .map(|x| x.as_u64().unwrap_or(0) as u16)
                .collect(),
        );
        let proposal = ProposalKind::from_str(v["proposal"].as_str().unwrap_or(""))
            .ok_or_else(|| EngineError::Checkpoint("bad proposal kind".into()))?;
        let energy = model.energy(&config)?;
        let mut hist = DosHistogram::new(spec);
        hist.s = s;
        hist.h = h;
        hist.visited = visited;
        hist.overflow_low = v["overflow_low"].as_u64().unwrap_or(0);
        hist.overflow_high = v["overflow_high"].as_u64().unwrap_or(0);
        Ok(WalkerState {
            config,
            energy,
            hist,
            sched: ModificationSchedule {
                ln_f0: field("ln_f0")?.as_f64().unwrap_or(1.0),
                iteration: field("iteration")?.as_u64().unwrap_or(0) as u32,
            },
            step_count: field("step_count")?.as_u64().unwrap_or(0),
            rng: rng_from_hex(v["rng"].as_str().unwrap_or(""))?,
            proposal,
            cached_grad: None,
            update_entropy: true,
        })
    }
}
