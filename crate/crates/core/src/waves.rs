//! Bistable traveling waves: direct moving-frame construction, the monotone
//! rescaled iteration, time-periodic waves and speed consistency.
//!
//! A wave with speed `c` satisfies `Q_t[psi](x) = psi(x + c t)`, so `c > 0`
//! means the profile moves to the left (the upper state invades).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, precondition, Error, Result};
use crate::kinetics::{homogeneous_step_map, probe_strong_stability, Kinetics, ProbeSide, StabilityProbe};
use crate::profiles::{compare, heaviside_profile, level_crossing, rescale, translate, Grid, LevelBox, OrderVerdict, Profile};
use crate::semiflow::{DelayState, Observer, Semiflow};
use crate::speeds::linear_fit;

/// Horizon used for the residual check of direct waves.
pub const RESIDUAL_HORIZON: f64 = 5.0;
/// Default acceptance tolerance on the wave residual.
pub const RESIDUAL_TOL: f64 = 1e-3;
/// Distance under which a profile endpoint is identified with an equilibrium.
pub const SNAP_DISTANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Direct,
    Iteration,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WaveTrace {
    Direct {
        horizon: f64,
        settle: f64,
        fit_residual: f64,
        /// Mid-level crossing of the final profile before re-centering.
        frame_shift: f64,
    },
    Iteration(IterationTrace),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub n: usize,
    pub kappa: f64,
    pub cbar: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub iterations: usize,
    pub last_increment: f64,
    pub converged: bool,
    /// Largest decrease of an iterate in `k` at any node.
    pub order_violation: f64,
    /// Largest excursion outside `[psi_under_n, psi_over_n]`.
    pub sandwich_violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSolution {
    #[serde(skip)]
    pub profile: Option<Profile>,
    /// Speed per unit time.
    pub speed: f64,
    pub endpoints: (Vec<f64>, Vec<f64>),
    /// `sup |Q_T[psi] - psi(. + c T)|` at `residual_horizon`.
    pub residual: f64,
    pub residual_horizon: f64,
    pub construction: Construction,
    pub accepted: bool,
    pub trace: WaveTrace,
}

impl WaveSolution {
    pub fn profile(&self) -> &Profile {
        self.profile.as_ref().expect("wave solutions carry their profile")
    }
}

/// Mid-level box between two states.
pub fn mid_level(lower: &[f64], upper: &[f64]) -> LevelBox {
    LevelBox::Lower(lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect())
}

/// History `u(theta) = psi(. + c theta)` on `[-tau, 0]` for delayed families,
/// the single profile otherwise.
pub fn wave_state(s: &Semiflow, psi: &Profile, c: f64) -> Result<DelayState> {
    let len = s.history_len();
    if len == 1 {
        return s.initial_state(psi);
    }
    let hist = (0..len)
        .map(|i| {
            let theta = -((len - 1 - i) as f64) * s.dt();
            translate(psi, -c * theta)
        })
        .collect();
    DelayState::from_history(hist)
}

/// `sup |Q_T[psi] - psi(. + c T)|` over grid nodes, starting at phase `t0`.
pub fn wave_residual(s: &Semiflow, psi: &Profile, c: f64, horizon: f64, t0: f64) -> Result<f64> {
    let st = wave_state(s, psi, c)?;
    let (st, _) = s.evolve_state(st, t0, horizon, &[])?;
    let moved = translate(psi, -c * horizon);
    st.current().sup_distance_nodes(&moved)
}

fn endpoints_of(p: &Profile) -> (Vec<f64>, Vec<f64>) {
    (p.left_limit().to_vec(), p.right_limit().to_vec())
}

/// Options for [`construct_wave_direct`].
#[derive(Clone, Debug)]
pub struct DirectWaveOptions {
    pub horizon: f64,
    /// Start of the fit window.
    pub settle: f64,
    pub residual_horizon: f64,
    pub tol: f64,
}

impl DirectWaveOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            settle: 0.5 * horizon,
            residual_horizon: RESIDUAL_HORIZON,
            tol: RESIDUAL_TOL,
        }
    }
}

/// Evolves a connecting datum, fits the mid-level front position over
/// `(settle, horizon)`, re-centers the final profile and checks the wave
/// relation over one more horizon.
///
/// For time-periodic kinetics the front is sampled stroboscopically once
/// per period and all horizons must be whole periods.
pub fn construct_wave_direct(s: &Semiflow, initial: &Profile, opts: &DirectWaveOptions) -> Result<WaveSolution> {
    let (lo, hi) = endpoints_of(initial);
    if lo.iter().zip(&hi).any(|(a, b)| a > b) {
        return precondition("initial datum must connect a lower state to an upper state");
    }
    let level = mid_level(&lo, &hi);
    let period = s.kinetics().period();
    let every = match period {
        Some(w) => s.steps_for(w)?,
        None => ((0.1 / s.dt()).round() as usize).max(1),
    };
    if !(opts.settle >= 0.0 && opts.settle < opts.horizon) {
        return invalid("settle time must lie in [0, horizon)");
    }
    let observers = [Observer::FrontPosition {
        level: level.clone(),
        every,
    }];
    let (last, obs) = s.evolve(initial, 0.0, opts.horizon, &observers)?;
    let g = s.grid();
    let edge = 10.0 * g.dx() + 2.0;
    for &(_, x) in &obs.fronts {
        if !x.is_finite() || x <= g.x_min() + edge || x >= g.x_max() - edge {
            let span = g.x_max() - g.x_min();
            return Err(Error::DomainTooSmall {
                suggested_min: g.x_min() - span,
                suggested_max: g.x_max() + span,
            });
        }
    }
    let window: Vec<(f64, f64)> = obs
        .fronts
        .iter()
        .copied()
        .filter(|(t, _)| *t >= opts.settle - 1e-12)
        .collect();
    let (slope, _, fit_residual) = linear_fit(&window)
        .ok_or_else(|| Error::Convergence("too few front samples after settling".into()))?;
    let c = -slope;
    let t0 = opts.horizon;
    let phase = period.map_or(0.0, |w| t0 - (t0 / w).round() * w);
    let residual = wave_residual(s, &last, c, opts.residual_horizon, phase)?;
    let frame_shift = level_crossing(&last, &level)?;
    let psi = translate(&last, -frame_shift);
    let endpoints = endpoints_of(&psi);
    Ok(WaveSolution {
        profile: Some(psi),
        speed: c,
        endpoints,
        residual,
        residual_horizon: opts.residual_horizon,
        construction: Construction::Direct,
        accepted: residual <= opts.tol,
        trace: WaveTrace::Direct {
            horizon: opts.horizon,
            settle: opts.settle,
            fit_residual,
            frame_shift,
        },
    })
}

// ---------------------------------------------------------------------------
// Monotone rescaled iteration

/// The sub- and super-solution data of the iteration:
/// `under = 0` for `x <= 0`, `beta - delta e` for `x >= 1`;
/// `over = delta e` for `x <= -1`, `beta` for `x >= 0`.
pub fn iteration_data(k: &Kinetics, grid: &Grid, delta: f64, e0: &[f64], e_beta: &[f64]) -> Result<(Profile, Profile)> {
    let n = k.n_species();
    if e0.len() != n || e_beta.len() != n {
        return invalid("direction dimension mismatch");
    }
    let low: Vec<f64> = (0..n).map(|c| k.bottom[c] + delta * e0[c]).collect();
    let high: Vec<f64> = (0..n).map(|c| k.top[c] - delta * e_beta[c]).collect();
    if (0..n).any(|c| low[c] >= high[c]) {
        return precondition("delta e0 must lie strictly below beta - delta e_beta");
    }
    let under = heaviside_profile(grid, &k.lift(&k.bottom), &k.lift(&high), 1.0, 1.0)?;
    let over = heaviside_profile(grid, &k.lift(&low), &k.lift(&k.top), 0.0, 1.0)?;
    Ok((under, over))
}

/// Half the smaller validated stability radius of the bottom state (from
/// above) and the top state (from below), probing along `e = 1`.
pub fn default_delta(k: &Kinetics) -> Result<f64> {
    let n = k.n_species();
    let q = homogeneous_step_map(k);
    let span = (0..n).map(|c| k.top[c] - k.bottom[c]).fold(f64::INFINITY, f64::min);
    let radii: Vec<f64> = [0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005]
        .iter()
        .map(|r| r * span)
        .collect();
    let ones = vec![1.0; n];
    let below = probe_strong_stability(
        &q,
        &StabilityProbe::new(k.bottom.clone(), ones.clone(), radii.clone(), ProbeSide::Above),
        &k.bottom,
        &k.top,
    )?;
    let above = probe_strong_stability(
        &q,
        &StabilityProbe::new(k.top.clone(), ones, radii, ProbeSide::Below),
        &k.bottom,
        &k.top,
    )?;
    match (below.validated_radius(), above.validated_radius()) {
        (Some(a), Some(b)) => Ok(0.5 * a.min(b)),
        _ => precondition("bottom or top state is not strongly stable at any tested radius"),
    }
}

/// Smallest tested `c` with `Q[under] >= T_c[under]` and
/// `Q[over] <= T_{-c}[over]`: doubling from 1 up to `2^10`, then bisection
/// down to multiples of `resolution`.
pub fn find_cbar(
    q: impl Fn(&Profile) -> Result<Profile>,
    under: &Profile,
    over: &Profile,
    resolution: f64,
) -> Result<f64> {
    if !under.is_nondecreasing(1e-12) || !over.is_nondecreasing(1e-12) {
        return precondition("sub/super data must be nondecreasing");
    }
    let qu = q(under)?;
    let qo = q(over)?;
    let ok = |c: f64| -> Result<bool> {
        let a = compare(&qu, &translate(under, c), 1e-12)?.verdict;
        let b = compare(&qo, &translate(over, -c), 1e-12)?.verdict;
        Ok(matches!(a, OrderVerdict::Geq | OrderVerdict::Equal)
            && matches!(b, OrderVerdict::Leq | OrderVerdict::Equal))
    };
    let mut hi = 1.0;
    while !ok(hi)? {
        hi *= 2.0;
        if hi > 1024.0 {
            return Err(Error::Convergence(
                "no shift up to 2^10 satisfies both comparisons; is the scheme monotone?".into(),
            ));
        }
    }
    let step = resolution;
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    // Invariant: ok(hi), and lo fails (or is zero).
    while hi - lo > step * (1.0 + 1e-9) {
        let mid = ((0.5 * (lo + hi)) / step).round() * step;
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Grid-aligned rational resolution for `cbar`: `dx` when `1/dx` is an
/// integer no larger than 64, else `1/64`.
pub fn cbar_resolution(dx: f64) -> f64 {
    let inv = 1.0 / dx;
    if (inv - inv.round()).abs() < 1e-9 && inv.round() <= 64.0 {
        dx
    } else {
        1.0 / 64.0
    }
}

#[derive(Clone, Debug)]
pub struct IterationOptions {
    pub k_max: usize,
    pub tol: f64,
    pub delta: f64,
    pub e0: Vec<f64>,
    pub e_beta: Vec<f64>,
    /// Tolerance for accepting the iteration profiles as waves.
    pub residual_tol: f64,
    /// The one-step map is `Q_{m omega}` (`omega = 1` when autonomous).
    pub map_periods: usize,
}

impl IterationOptions {
    pub fn map_time(&self, k: &Kinetics) -> f64 {
        k.period().unwrap_or(1.0) * self.map_periods.max(1) as f64
    }
}

impl IterationOptions {
    pub fn scalar(delta: f64) -> Self {
        Self {
            k_max: 20_000,
            tol: 1e-9,
            delta,
            e0: vec![1.0],
            e_beta: vec![1.0],
            residual_tol: RESIDUAL_TOL,
            map_periods: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRun {
    pub minus: WaveSolution,
    pub plus: WaveSolution,
    /// Speeds per unit time.
    pub c_minus: f64,
    pub c_plus: f64,
    pub trace: IterationTrace,
    /// Fixed point of `Q o A_kappa` before centering.
    #[serde(skip)]
    pub fixed_point: Option<Profile>,
}

/// Iterates `w <- Q[A_kappa w]` from the shifted sub-solution and extracts
/// the speeds `c_- = -cbar a_n / n >= c_+ = -cbar b_n / n`.
pub fn construct_wave_iteration(s: &Semiflow, cbar: f64, n: usize, opts: &IterationOptions) -> Result<IterationRun> {
    if n < 1 {
        return invalid("n must be at least 1");
    }
    let k = s.kinetics();
    let dx = s.grid().dx();
    let shift = n as f64 + cbar;
    let half = ((shift + 10.0) / dx).ceil() * dx;
    let grid = Grid::with_spacing(-half, half, dx)?;
    let sn = s.with_grid(grid.clone())?;
    let step_time = opts.map_time(k);
    let q = sn.poincare_map(Some(step_time))?;
    let (under, over) = iteration_data(k, &grid, opts.delta, &opts.e0, &opts.e_beta)?;
    let under_n = translate(&under, shift);
    let over_n = translate(&over, -shift);
    let kappa = shift / n as f64;

    let mut w = under_n.clone();
    let mut iterations = 0;
    let mut last_increment = f64::INFINITY;
    let mut order_violation: f64 = 0.0;
    let mut sandwich_violation: f64 = 0.0;
    while iterations < opts.k_max {
        let next = q(&rescale(&w, kappa)?)?;
        let mut inc: f64 = 0.0;
        for (a, b) in next.values().iter().zip(w.values()) {
            order_violation = order_violation.max(b - a);
            inc = inc.max((a - b).abs());
        }
        for ((v, lo), hi) in next.values().iter().zip(under_n.values()).zip(over_n.values()) {
            sandwich_violation = sandwich_violation.max(lo - v).max(v - hi);
        }
        w = next;
        iterations += 1;
        last_increment = inc;
        if order_violation > 1e-10 {
            return Err(Error::OrderViolation {
                violation: order_violation,
                tolerance: 1e-10,
                context: format!("iterate {iterations} decreased (n = {n})"),
            });
        }
        if inc <= opts.tol {
            break;
        }
    }
    let converged = last_increment <= opts.tol;
    let n_dim = k.n_species();
    let low: Vec<f64> = (0..n_dim).map(|c| k.bottom[c] + opts.delta * opts.e0[c]).collect();
    let high: Vec<f64> = (0..n_dim).map(|c| k.top[c] - opts.delta * opts.e_beta[c]).collect();
    let a_n = level_crossing(&w, &LevelBox::Lower(k.lift(&low)))?;
    let b_n = level_crossing(&w, &LevelBox::Upper(k.lift(&high)))?;
    if !(a_n.is_finite() && b_n.is_finite()) {
        return Err(Error::Convergence(format!(
            "level boxes not crossed inside the domain (a_n = {a_n}, b_n = {b_n})"
        )));
    }
    if a_n > b_n + 1e-12 {
        return Err(Error::OrderViolation {
            violation: a_n - b_n,
            tolerance: 0.0,
            context: "a_n exceeds b_n: level boxes misconfigured".into(),
        });
    }
    let c_minus = -cbar * a_n / n as f64 / step_time;
    let c_plus = -cbar * b_n / n as f64 / step_time;
    let trace = IterationTrace {
        n,
        kappa,
        cbar,
        a_n,
        b_n,
        iterations,
        last_increment,
        converged,
        order_violation,
        sandwich_violation,
    };
    let make = |center: f64, c: f64| -> Result<WaveSolution> {
        let psi = translate(&w, -center);
        let residual = wave_residual(&sn, &psi, c, RESIDUAL_HORIZON, 0.0)?;
        let endpoints = endpoints_of(&psi);
        Ok(WaveSolution {
            profile: Some(psi),
            speed: c,
            endpoints,
            residual,
            residual_horizon: RESIDUAL_HORIZON,
            construction: Construction::Iteration,
            accepted: converged && iterations > 0 && residual <= opts.residual_tol,
            trace: WaveTrace::Iteration(trace.clone()),
        })
    };
    let minus = make(a_n, c_minus)?;
    let plus = make(b_n, c_plus)?;
    Ok(IterationRun {
        minus,
        plus,
        c_minus,
        c_plus,
        trace,
        fixed_point: Some(w),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrichotomyCase {
    /// `beta = phi_-(+inf) >= phi_+(-inf)`: `phi_-` connects 0 to beta.
    MinusConnects,
    /// `phi_-(+inf) >= phi_+(-inf) = 0`: `phi_+` connects 0 to beta.
    PlusConnects,
    /// Both candidates connect 0 to beta.
    Both,
    /// Both endpoints snap to the same intermediate equilibrium.
    Intermediate,
    /// Endpoints do not snap to the equilibrium set.
    Unresolved,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trichotomy {
    pub case: TrichotomyCase,
    /// `phi_-` far to the right and `phi_+` far to the left.
    pub minus_right: Vec<f64>,
    pub plus_left: Vec<f64>,
    /// Indices into the equilibrium list after snapping.
    pub minus_snap: Option<usize>,
    pub plus_snap: Option<usize>,
}

/// Snaps the far endpoints of the centered iteration profiles to `E`.
pub fn classify_trichotomy(run: &IterationRun, equilibria: &[Vec<f64>], bottom: &[f64], top: &[f64]) -> Trichotomy {
    let reach = 0.5 * (run.trace.n as f64 + run.trace.cbar);
    let minus_right = run.minus.profile().eval(reach);
    let plus_left = run.plus.profile().eval(-reach);
    let snap = |v: &[f64]| {
        equilibria.iter().position(|e| {
            e.iter().zip(v).all(|(a, b)| (a - b).abs() <= SNAP_DISTANCE)
        })
    };
    let is = |v: &[f64], target: &[f64]| v.iter().zip(target).all(|(a, b)| (a - b).abs() <= SNAP_DISTANCE);
    let (ms, ps) = (snap(&minus_right), snap(&plus_left));
    let minus_ok = is(&minus_right, top);
    let plus_ok = is(&plus_left, bottom);
    let case = match (minus_ok, plus_ok) {
        (true, true) => TrichotomyCase::Both,
        (true, false) => TrichotomyCase::MinusConnects,
        (false, true) => TrichotomyCase::PlusConnects,
        (false, false) if ms.is_some() && ms == ps => TrichotomyCase::Intermediate,
        _ => TrichotomyCase::Unresolved,
    };
    Trichotomy {
        case,
        minus_right,
        plus_left,
        minus_snap: ms,
        plus_snap: ps,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationSweep {
    pub cbar: f64,
    pub delta: f64,
    pub runs: Vec<IterationRun>,
    /// Richardson extrapolation in `1/n` from the two largest `n`.
    pub c_minus_extrapolated: f64,
    pub c_plus_extrapolated: f64,
    pub trichotomy: Trichotomy,
}

/// `(n2 c2 - n1 c1) / (n2 - n1)`: removes the `O(1/n)` term.
pub fn richardson(n1: usize, c1: f64, n2: usize, c2: f64) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    (b * c2 - a * c1) / (b - a)
}

/// Runs the iteration for every `n` (in parallel), extrapolates the speeds
/// and classifies the endpoints of the largest-`n` run.
pub fn iteration_sweep(
    s: &Semiflow,
    ns: &[usize],
    opts: &IterationOptions,
    equilibria: &[Vec<f64>],
) -> Result<IterationSweep> {
    if ns.len() < 2 {
        return invalid("the sweep needs at least two values of n");
    }
    let k = s.kinetics();
    let dx = s.grid().dx();
    let step_time = opts.map_time(k);
    let probe_grid = Grid::with_spacing(-40.0, 40.0, dx)?;
    let sp = s.with_grid(probe_grid.clone())?;
    let q = sp.poincare_map(Some(step_time))?;
    let (under, over) = iteration_data(k, &probe_grid, opts.delta, &opts.e0, &opts.e_beta)?;
    let cbar = find_cbar(&q, &under, &over, cbar_resolution(dx))?;
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    let runs = sorted
        .par_iter()
        .map(|&n| construct_wave_iteration(s, cbar, n, opts))
        .collect::<Result<Vec<_>>>()?;
    let m = runs.len();
    let (r1, r2) = (&runs[m - 2], &runs[m - 1]);
    let c_minus_extrapolated = richardson(r1.trace.n, r1.c_minus, r2.trace.n, r2.c_minus);
    let c_plus_extrapolated = richardson(r1.trace.n, r1.c_plus, r2.trace.n, r2.c_plus);
    let lifted: Vec<Vec<f64>> = equilibria.iter().map(|e| k.lift(e)).collect();
    let trichotomy = classify_trichotomy(r2, &lifted, &k.lift(&k.bottom), &k.lift(&k.top));
    Ok(IterationSweep {
        cbar,
        delta: opts.delta,
        runs,
        c_minus_extrapolated,
        c_plus_extrapolated,
        trichotomy,
    })
}

// ---------------------------------------------------------------------------
// Time-periodic waves

#[derive(Clone, Debug)]
pub struct PeriodicWave {
    /// `(t, U(t, .))` at the sampled phases of `[0, omega]`.
    pub phases: Vec<(f64, Profile)>,
    pub speed: f64,
    pub periodicity_residual: f64,
    /// `max_t |U(t, +inf) - beta(t)|` including the rightmost grid node.
    pub upper_tracking: f64,
    /// `max_t |U(t, -inf) - 0(t)|` including the leftmost grid node.
    pub lower_tracking: f64,
    pub accepted: bool,
}

/// `U(t) = T_{c t} Q_t[phi]` for `t` in `[0, omega]`; `c` is the speed per
/// unit time.
pub fn periodic_wave(s: &Semiflow, phi: &Profile, c: f64, n_phase: usize, tol: f64) -> Result<PeriodicWave> {
    let k = s.kinetics();
    let omega = k
        .period()
        .ok_or_else(|| Error::Precondition("periodic kinetics required".into()))?;
    let total = s.steps_for(omega)?;
    let n_phase = n_phase.max(1);
    let every = (total / n_phase).max(1);
    let (end, obs) = s.evolve(phi, 0.0, omega, &[Observer::Snapshots { every }])?;
    let mut phases: Vec<(f64, Profile)> = obs
        .snapshots
        .into_iter()
        .map(|(t, p)| (t, translate(&p, c * t)))
        .collect();
    if phases.last().map(|(t, _)| (t - omega).abs() > 1e-9).unwrap_or(true) {
        phases.push((omega, translate(&end, c * omega)));
    }
    let u_end = &phases.last().expect("nonempty").1;
    let periodicity_residual = u_end.sup_distance_nodes(&phases[0].1)?;

    if k.state_dim() != k.n_species() {
        return precondition("periodic waves are tracked for habitats without cross-section");
    }
    let n = s.grid().n_points();
    let mut upper_tracking: f64 = 0.0;
    let mut lower_tracking: f64 = 0.0;
    for (t, u) in &phases {
        let beta_t = k.homogeneous_flow(0.0, phi.right_limit(), *t);
        let zero_t = k.homogeneous_flow(0.0, phi.left_limit(), *t);
        for (c, b) in beta_t.iter().enumerate() {
            upper_tracking = upper_tracking
                .max((u.right_limit()[c] - b).abs())
                .max((u.value(n - 1)[c] - b).abs());
        }
        for (c, z) in zero_t.iter().enumerate() {
            lower_tracking = lower_tracking
                .max((u.left_limit()[c] - z).abs())
                .max((u.value(0)[c] - z).abs());
        }
    }
    Ok(PeriodicWave {
        phases,
        speed: c,
        periodicity_residual,
        upper_tracking,
        lower_tracking,
        accepted: periodicity_residual <= tol,
    })
}

// ---------------------------------------------------------------------------
// Speed consistency

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// `(T, optimal shift y, sup-distance at y)`, with `Q_T[psi] ~ T_y psi`.
    pub matches: Vec<(f64, f64, f64)>,
    /// `-y / T` per horizon.
    pub speeds: Vec<f64>,
    pub disagreement: f64,
    /// Constant profile: every shift is zero and carries no information.
    pub degenerate: bool,
    pub is_wave: bool,
}

/// Best shift `y` minimizing `sup |q - T_y psi|`, searched around `guess`.
pub fn optimal_shift(q: &Profile, psi: &Profile, guess: f64) -> Result<(f64, f64)> {
    let dist = |y: f64| q.sup_distance_nodes(&translate(psi, y));
    let dx = psi.grid().dx();
    // Coarse scan then golden section.
    let mut best = (guess, dist(guess)?);
    for i in -20..=20 {
        let y = guess + i as f64 * 0.25 * dx;
        let d = dist(y)?;
        if d < best.1 {
            best = (y, d);
        }
    }
    let (mut a, mut b) = (best.0 - 0.25 * dx, best.0 + 0.25 * dx);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (dist(x1)?, dist(x2)?);
    while b - a > 1e-9 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = dist(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = dist(x2)?;
        }
    }
    let y = 0.5 * (a + b);
    Ok((y, dist(y)?))
}

/// Estimates the speed independently at each horizon by optimal-shift
/// matching and reports the largest pairwise disagreement.
pub fn speed_consistency(s: &Semiflow, psi: &Profile, horizons: &[f64], tol: f64) -> Result<ConsistencyReport> {
    let (lo, hi) = endpoints_of(psi);
    let degenerate = psi.monotonicity_defect() <= 0.0
        && (0..psi.len()).all(|i| psi.value(i) == psi.value(0))
        && lo == hi;
    let level = mid_level(&lo, &hi);
    let x0 = if degenerate { 0.0 } else { level_crossing(psi, &level)? };
    let results = horizons
        .par_iter()
        .map(|&t| -> Result<(f64, f64, f64)> {
            // Snap to the time step so every horizon is reachable.
            let t = (t / s.dt()).round() * s.dt();
            if degenerate {
                return Ok((t, 0.0, 0.0));
            }
            let (q, _) = s.evolve(psi, 0.0, t, &[])?;
            let x1 = level_crossing(&q, &level).unwrap_or(x0);
            let (y, d) = optimal_shift(&q, psi, x1 - x0)?;
            Ok((t, y, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let speeds: Vec<f64> = results.iter().map(|(t, y, _)| if *t > 0.0 { -y / t } else { 0.0 }).collect();
    let mut disagreement: f64 = 0.0;
    for i in 0..speeds.len() {
        for j in i + 1..speeds.len() {
            disagreement = disagreement.max((speeds[i] - speeds[j]).abs());
        }
    }
    Ok(ConsistencyReport {
        matches: results,
        speeds,
        disagreement,
        degenerate,
        is_wave: !degenerate && disagreement <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiflow::Scheme;

    fn nagumo(x: f64) -> f64 {
        1.0 / (1.0 + (-x / 2f64.sqrt()).exp())
    }

    #[test]
    fn nagumo_closed_form_solves_the_wave_equation() {
        // c psi' = psi'' + f(psi) for c = (1 - 2a)/sqrt 2.
        for a in [0.1, 0.25, 0.4] {
            let c = (1.0 - 2.0 * a) / 2f64.sqrt();
            let h = 1e-4;
            for i in -40..=40 {
                let x = i as f64 * 0.25;
                let d1 = (nagumo(x + h) - nagumo(x - h)) / (2.0 * h);
                let d2 = (nagumo(x + h) - 2.0 * nagumo(x) + nagumo(x - h)) / (h * h);
                let u = nagumo(x);
                let r = c * d1 - d2 - u * (1.0 - u) * (u - a);
                assert!(r.abs() < 1e-6, "a={a} x={x} r={r}");
            }
        }
    }

    #[test]
    fn cbar_for_cubic() {
        let g = Grid::with_spacing(-40.0, 40.0, 0.1).unwrap();
        let k = Kinetics::cubic(0.25);
        let s = Semiflow::auto(k.clone(), g.clone(), Scheme::ExplicitEuler).unwrap();
        let q = s.poincare_map(Some(1.0)).unwrap();
        let delta = default_delta(&k).unwrap();
        let (u, o) = iteration_data(&k, &g, delta, &[1.0], &[1.0]).unwrap();
        let c = find_cbar(&q, &u, &o, 0.1).unwrap();
        assert!(c > 0.0 && c <= 8.0, "{c}");
        let bad = Profile::from_fn(g, 1, |x, o| o[0] = (-x * x).exp());
        assert!(find_cbar(&q, &bad, &o, 0.1).is_err());
    }

    #[test]
    fn zero_iterations_return_the_subsolution() {
        let g = Grid::with_spacing(-40.0, 40.0, 0.1).unwrap();
        let k = Kinetics::cubic(0.25);
        let s = Semiflow::auto(k, g, Scheme::ExplicitEuler).unwrap();
        let mut o = IterationOptions::scalar(0.1);
        o.k_max = 0;
        // With no iterations the level boxes still bracket the step.
        let run = construct_wave_iteration(&s, 4.0, 4, &o).unwrap();
        assert!(!run.minus.accepted && run.trace.iterations == 0);
    }

    #[test]
    fn consistency_flags_constants() {
        let g = Grid::with_spacing(-20.0, 20.0, 0.1).unwrap();
        let s = Semiflow::auto(Kinetics::cubic(0.25), g.clone(), Scheme::ExplicitEuler).unwrap();
        let r = speed_consistency(&s, &Profile::constant(g.clone(), &[1.0]), &[1.0, 2.0], 1e-3).unwrap();
        assert!(r.degenerate && !r.is_wave);
        let step = heaviside_profile(&g, &[0.0], &[1.0], 0.0, 0.0).unwrap();
        let r = speed_consistency(&s, &step, &[0.5, 2.0, 5.0], 1e-3).unwrap();
        assert!(!r.is_wave, "{r:?}");
    }
}
