//! Verifier-in-the-loop training: gradient descent along closed-loop
//! rollouts, an exact MILP check between episodes, counterexample reuse,
//! and geometric growth of the certified region towards its target.

use std::time::Instant;

use rand::Rng;

use crate::dynamics::{step_platoon_error, PlatoonModel};
use crate::milp::{
    branch_and_bound, build_dec_milp, build_pos_milp, BnbConfig, LpError, MilpSolution,
    SolveStatus,
};
use crate::nn::{Adam, Gradients, Mlp};
use crate::scalar::{s, Scalar};

use super::loss::{
    control_loss_grads, loss_dec, loss_pos, lyapunov_loss, lyapunov_loss_grads,
};
use super::{CounterexampleSet, LyapunovHyper, Region, ShapingWeights};

/// Optima at or below this value count as "no violation found".
const CERT_TOL: f64 = 1e-6;

/// Mini-batch size for dataset training.
const BATCH: usize = 32;

/// How a fresh episode start state is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartMode {
    /// Argmax of the positivity residual, if it is violated anywhere.
    MilpPos,
    /// Argmax of the decrease residual, if it is violated anywhere.
    MilpDec,
    /// Uniform draw from the region.
    Random,
}

/// Both MILP verdicts for one candidate pair on one region.
#[derive(Clone, Debug)]
pub struct VerificationReport<T> {
    /// True when both solves are optimal with optima at most the tolerance.
    pub certified: bool,
    /// Positivity-condition solve (`max eps1*|x|_1 - V(x)`).
    pub pos: MilpSolution<T>,
    /// Decrease-condition solve (`max V(x+) - (1 + eps2) V(x)`).
    pub dec: MilpSolution<T>,
    /// Wall-clock time spent in both solves.
    pub wall_time_s: f64,
}

/// Solves both Lyapunov-condition MILPs exactly over the region.
pub fn certify<T: Scalar>(
    v: &Mlp<T>,
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    region: &Region<T>,
    hyper: &LyapunovHyper<T>,
    cfg: &BnbConfig<T>,
) -> Result<VerificationReport<T>, LpError> {
    let start = Instant::now();
    let bounds = region.bounds();

    let pos_inst = build_pos_milp(v, &bounds, hyper.eps1);
    let pos_eval = |x: &[T]| loss_pos(v, x, hyper.eps1);
    let pos = branch_and_bound(&pos_inst, cfg, Some(&pos_eval))?;

    let dec_inst = build_dec_milp(v, pi, model, &bounds, hyper.eps2);
    let dec_eval = |x: &[T]| loss_dec(v, pi, model, x, hyper.eps2);
    let dec = branch_and_bound(&dec_inst, cfg, Some(&dec_eval))?;

    let tol = s::<T>(CERT_TOL);
    let certified = pos.status == SolveStatus::Optimal
        && dec.status == SolveStatus::Optimal
        && pos.value <= tol
        && dec.value <= tol;
    Ok(VerificationReport { certified, pos, dec, wall_time_s: start.elapsed().as_secs_f64() })
}

/// Picks an episode start state, preferring a condition violation.
///
/// MILP modes return the violation argmax when the optimum is positive; a
/// clean or aborted solve falls back to a uniform draw (aborts also log a
/// warning to stderr).
pub fn sample_start<T: Scalar, R: Rng>(
    v: &Mlp<T>,
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    region: &Region<T>,
    hyper: &LyapunovHyper<T>,
    mode: StartMode,
    cfg: &BnbConfig<T>,
    rng: &mut R,
) -> Result<Vec<T>, LpError> {
    let bounds = region.bounds();
    let solution = match mode {
        StartMode::Random => None,
        StartMode::MilpPos => {
            let inst = build_pos_milp(v, &bounds, hyper.eps1);
            let eval = |x: &[T]| loss_pos(v, x, hyper.eps1);
            Some(branch_and_bound(&inst, cfg, Some(&eval))?)
        }
        StartMode::MilpDec => {
            let inst = build_dec_milp(v, pi, model, &bounds, hyper.eps2);
            let eval = |x: &[T]| loss_dec(v, pi, model, x, hyper.eps2);
            Some(branch_and_bound(&inst, cfg, Some(&eval))?)
        }
    };
    if let Some(sol) = solution {
        match sol.status {
            SolveStatus::Optimal if sol.value > s::<T>(CERT_TOL) => return Ok(sol.input),
            SolveStatus::Optimal | SolveStatus::Infeasible => {}
            SolveStatus::NodeLimit | SolveStatus::TimedOut => {
                eprintln!(
                    "warning: start-state search hit its solve budget ({:?}); sampling uniformly",
                    sol.status
                );
            }
        }
    }
    Ok(region.sample_uniform(rng))
}

/// Retrains both networks on the stored counterexamples.
///
/// Each epoch shuffles the violators together with fresh uniform samples
/// from the region (so the networks cannot overfit the finite set) and
/// applies mini-batch descent on the hinged condition losses.  Stops early
/// once an epoch sees no violation; an empty set is a no-op.
pub fn train_on_dataset<T: Scalar, R: Rng>(
    v: &mut Mlp<T>,
    pi: &mut Mlp<T>,
    model: &PlatoonModel<T>,
    data: &CounterexampleSet<T>,
    region: &Region<T>,
    hyper: &LyapunovHyper<T>,
    epochs: usize,
    lr: T,
    rng: &mut R,
) {
    if data.is_empty() {
        return;
    }
    let mut adam_v = Adam::new(v, lr);
    let mut adam_pi = Adam::new(pi, lr);
    let augment = (data.len() / 4).max(8);
    for _ in 0..epochs {
        let mut points: Vec<Vec<T>> = data.iter().map(|(x, _)| x.clone()).collect();
        points.extend((0..augment).map(|_| region.sample_uniform(rng)));
        // Fisher-Yates shuffle driven by the shared stream.
        for i in (1..points.len()).rev() {
            points.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_max = T::zero();
        for batch in points.chunks(BATCH) {
            let mut gv = Gradients::zeros_like(v);
            let mut gpi = Gradients::zeros_like(pi);
            let mut active = false;
            for x in batch {
                let (l, dv, dpi) = lyapunov_loss_grads(v, pi, model, x, hyper);
                epoch_max = epoch_max.max(l);
                if l > T::zero() {
                    active = true;
                }
                gv.add_scaled(&dv, T::one());
                gpi.add_scaled(&dpi, T::one());
            }
            if !active {
                continue;
            }
            let inv = T::one() / s::<T>(batch.len() as f64);
            gv.scale(inv);
            gpi.scale(inv);
            adam_v.step(v, &gv);
            adam_pi.step(pi, &gpi);
        }
        if epoch_max == T::zero() {
            break;
        }
    }
}

/// Knobs of the guided training loop.
#[derive(Clone, Debug)]
pub struct GuidedConfig<T> {
    /// Episode budget; zero returns immediately.
    pub episodes: usize,
    /// Cap on rollout steps within one episode.
    pub inner_cap: usize,
    /// Rollouts stop once the error norm drops below this.
    pub conv_tol: T,
    /// Adam learning rate for both networks.
    pub lr: T,
    /// Run the MILP verifier between episodes (disable for large platoons).
    pub verify: bool,
    /// Epochs of dataset retraining after a failed verification.
    pub dataset_epochs: usize,
    /// Feed MILP witnesses back into the counterexample set.
    pub harvest_witnesses: bool,
    /// Budget for each MILP solve.
    pub bnb: BnbConfig<T>,
}

impl<T: Scalar> Default for GuidedConfig<T> {
    fn default() -> Self {
        Self {
            episodes: 100,
            inner_cap: 500,
            conv_tol: s(1e-3),
            lr: s(1e-3),
            verify: true,
            dataset_epochs: 300,
            harvest_witnesses: true,
            bnb: BnbConfig::default(),
        }
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeStats<T> {
    /// Episode index, starting at zero.
    pub episode: usize,
    /// Largest positivity residual seen (MILP optimum when verifying,
    /// otherwise the maximum over visited states).
    pub max_loss_pos: T,
    /// Largest decrease residual seen, on the same basis.
    pub max_loss_dec: T,
    /// Region width relative to the target at verification time.
    pub region_scale: T,
    /// Counterexamples stored after the episode.
    pub dataset_size: usize,
    /// Wall-clock duration of the episode.
    pub wall_time_s: f64,
}

/// Result of a guided training run.
#[derive(Clone, Debug)]
pub struct GuidedOutcome<T> {
    /// Trained candidate value function.
    pub v: Mlp<T>,
    /// Trained controller.
    pub pi: Mlp<T>,
    /// Whether both conditions certified on the full target region.
    pub certified: bool,
    /// Region state when training stopped.
    pub region: Region<T>,
    /// Per-episode statistics.
    pub history: Vec<EpisodeStats<T>>,
}

/// Trains a controller and Lyapunov candidate with a verifier in the loop.
///
/// Each episode rolls the closed loop out from a start state (the previous
/// verification's worst violation when one exists), taking one descent step
/// per visited state on the hinged condition losses plus the shaped control
/// objective, and recording violating states.  Between episodes the MILP
/// verifier either certifies the current region — growing it towards the
/// target — or supplies counterexamples for dataset retraining.
#[allow(clippy::too_many_arguments)]
pub fn guided_train<T: Scalar, R: Rng>(
    v: Mlp<T>,
    pi: Mlp<T>,
    model: &PlatoonModel<T>,
    region: Region<T>,
    hyper: &LyapunovHyper<T>,
    shaping: &ShapingWeights<T>,
    data: &mut CounterexampleSet<T>,
    cfg: &GuidedConfig<T>,
    rng: &mut R,
) -> Result<GuidedOutcome<T>, LpError> {
    let mut v = v;
    let mut pi = pi;
    let mut region = region;
    let mut adam_v = Adam::new(&v, cfg.lr);
    let mut adam_pi = Adam::new(&pi, cfg.lr);
    let mut history = Vec::new();
    let mut certified = false;
    let mut next_start: Option<Vec<T>> = None;

    for episode in 0..cfg.episodes {
        let tick = Instant::now();
        let mut x = match next_start.take() {
            Some(start) if region.contains(&start) => start,
            _ => region.sample_uniform(rng),
        };

        let mut seen_pos = loss_pos(&v, &x, hyper.eps1);
        let mut seen_dec = loss_dec(&v, &pi, model, &x, hyper.eps2);
        let mut steps = 0;
        while steps < cfg.inner_cap
            && x.iter().map(|&c| c * c).sum::<T>().sqrt() >= cfg.conv_tol
        {
            seen_pos = seen_pos.max(loss_pos(&v, &x, hyper.eps1));
            seen_dec = seen_dec.max(loss_dec(&v, &pi, model, &x, hyper.eps2));
            let (lyap, gv, mut gpi) = lyapunov_loss_grads(&v, &pi, model, &x, hyper);
            if lyap > T::zero() {
                data.insert(x.clone(), lyap);
            }
            let (_, g_shape) = control_loss_grads(&pi, model, &x, shaping);
            gpi.add_scaled(&g_shape, T::one());
            adam_v.step(&mut v, &gv);
            adam_pi.step(&mut pi, &gpi);
            // Advance under the freshly updated controller.
            let u = pi.eval_blockwise(&x);
            x = step_platoon_error(model, &x, &u);
            steps += 1;
        }

        let scale_now = region.scale();
        let (max_pos, max_dec) = if cfg.verify {
            let report = certify(&v, &pi, model, &region, hyper, &cfg.bnb)?;
            if cfg.harvest_witnesses {
                for w in report.pos.witnesses.iter().chain(&report.dec.witnesses) {
                    let violation = lyapunov_loss(&v, &pi, model, w, hyper);
                    if violation > T::zero() {
                        data.insert(w.clone(), violation);
                    }
                }
            }
            if report.certified {
                if region.at_target() {
                    certified = true;
                } else {
                    region.grow();
                }
            } else {
                // Restart next episode from the worst violation found.
                let worst = if report.pos.value >= report.dec.value {
                    &report.pos
                } else {
                    &report.dec
                };
                if worst.value > s::<T>(CERT_TOL) {
                    next_start = Some(worst.input.clone());
                }
                train_on_dataset(
                    &mut v,
                    &mut pi,
                    model,
                    data,
                    &region,
                    hyper,
                    cfg.dataset_epochs,
                    cfg.lr,
                    rng,
                );
            }
            (report.pos.value, report.dec.value)
        } else {
            (seen_pos, seen_dec)
        };

        history.push(EpisodeStats {
            episode,
            max_loss_pos: max_pos,
            max_loss_dec: max_dec,
            region_scale: scale_now,
            dataset_size: data.len(),
            wall_time_s: tick.elapsed().as_secs_f64(),
        });
        if certified {
            break;
        }
    }
    Ok(GuidedOutcome { v, pi, certified, region, history })
}
