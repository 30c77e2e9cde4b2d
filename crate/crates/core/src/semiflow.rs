//! Order-preserving time steppers for the four system families.
//!
//! All schemes are monotone under the step-size constraint checked at
//! construction, so the discrete map inherits the comparison principle.
//! Far-field limits evolve under the homogeneous dynamics and act as ghost
//! values at both ends of the grid.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, precondition, Error, Result};
use crate::kinetics::{Family, Kinetics};
use crate::profiles::{level_crossing, translate, Grid, LevelBox, Profile};

/// Mass discarded when truncating a dispersal kernel.
pub const KERNEL_TAIL: f64 = 1e-10;
/// Fraction of the monotonicity limit used by [`Semiflow::auto`].
pub const DT_SAFETY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitEuler,
    ImexDiffusionImplicit,
}

#[derive(Clone, Debug)]
pub struct Semiflow {
    kinetics: Kinetics,
    grid: Grid,
    dt: f64,
    scheme: Scheme,
    delay_steps: usize,
    /// Symmetric kernel weights `w_{-m..=m}`.
    kernel: Vec<f64>,
    /// `d(x_i - dx/2)` for `i = 0..=n`.
    half_d: Vec<f64>,
    /// Advection values `E_s(y_j)`, species-major.
    advection: Vec<f64>,
}

/// History of a delayed trajectory on `[t - tau, t]`; the last entry is the
/// current state. Non-delayed families use a ring of length one.
#[derive(Clone, Debug)]
pub struct DelayState {
    ring: VecDeque<Profile>,
}

impl DelayState {
    /// Replicates `p` over the whole history window.
    pub fn constant(p: &Profile, len: usize) -> Self {
        Self {
            ring: std::iter::repeat_n(p.clone(), len.max(1)).collect(),
        }
    }

    pub fn from_history(history: Vec<Profile>) -> Result<Self> {
        if history.is_empty() {
            return invalid("history must contain at least one profile");
        }
        Ok(Self {
            ring: history.into(),
        })
    }

    pub fn current(&self) -> &Profile {
        self.ring.back().expect("nonempty ring")
    }

    pub fn delayed(&self) -> &Profile {
        self.ring.front().expect("nonempty ring")
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn into_current(mut self) -> Profile {
        self.ring.pop_back().expect("nonempty ring")
    }
}

impl Semiflow {
    pub fn new(kinetics: Kinetics, grid: Grid, dt: f64, scheme: Scheme) -> Result<Self> {
        kinetics.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        let dx = grid.dx();
        let delay_steps = match &kinetics.nonlocal {
            Some(nl) if kinetics.family == Family::NonlocalDelayed => {
                let m = nl.delay / dt;
                if (m - m.round()).abs() > 1e-9 * m.max(1.0) {
                    return precondition(format!(
                        "delay {} is not an integer multiple of dt = {dt}",
                        nl.delay
                    ));
                }
                let b_min = sample_min(|u| nl.birth_prime(u), kinetics.bottom[0], kinetics.top[0]);
                if b_min < -1e-12 {
                    return precondition(format!(
                        "birth function decreases on the order box (min b' = {b_min})"
                    ));
                }
                m.round() as usize
            }
            _ => 0,
        };
        let kernel = match (&kinetics.family, &kinetics.nonlocal) {
            (Family::NonlocalDelayed, Some(nl)) => {
                let r = nl.kernel.support_radius(KERNEL_TAIL);
                let m = (r / dx).ceil() as usize;
                let mut w: Vec<f64> = (0..=2 * m)
                    .map(|k| dx * nl.kernel.density((k as f64 - m as f64) * dx))
                    .collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= total);
                w
            }
            _ => vec![],
        };
        let half_d = match (&kinetics.family, &kinetics.medium) {
            (Family::PeriodicDiffusion, Some(m)) => (0..=grid.n_points())
                .map(|i| m.d(grid.x_min() + (i as f64 - 0.5) * dx))
                .collect(),
            _ => vec![],
        };
        let advection = match (&kinetics.family, &kinetics.cross_section) {
            (Family::Cylinder, Some(cs)) => (0..kinetics.n_species())
                .flat_map(|s| (0..cs.n_cross).map(move |j| (s, j)))
                .map(|(s, j)| cs.advection[s].eval(cs.y(j), cs.length))
                .collect(),
            _ => vec![],
        };
        let sf = Self {
            kinetics,
            grid,
            dt,
            scheme,
            delay_steps,
            kernel,
            half_d,
            advection,
        };
        let limit = sf.max_stable_dt();
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepSize(format!(
                "dt = {dt} exceeds the monotonicity limit {limit} for the {:?} scheme",
                scheme
            )));
        }
        Ok(sf)
    }

    /// Picks `dt = 1/N`, at most `DT_SAFETY` times the monotonicity limit,
    /// with `N` chosen so that unit time, the reaction period and the delay
    /// are whole numbers of steps whenever they are rational with small
    /// denominator.
    pub fn auto(kinetics: Kinetics, grid: Grid, scheme: Scheme) -> Result<Self> {
        let probe = Self::new(kinetics.clone(), grid.clone(), 1e-12, scheme)
            .or_else(|e| match e {
                // Delay divisibility is not known yet.
                Error::Precondition(_) if kinetics.family == Family::NonlocalDelayed => {
                    let mut k = kinetics.clone();
                    if let Some(nl) = k.nonlocal.as_mut() {
                        nl.delay = 0.0;
                    }
                    Self::new(k, grid.clone(), 1e-12, scheme)
                }
                e => Err(e),
            })?;
        let dt_max = DT_SAFETY * probe.max_stable_dt();
        let mut n = (1.0 / dt_max).ceil().max(1.0) as u64;
        let mut constraints = vec![];
        if let Some(w) = kinetics.period() {
            constraints.push(w);
        }
        if let Some(nl) = &kinetics.nonlocal {
            if nl.delay > 0.0 {
                constraints.push(nl.delay);
            }
        }
        for c in constraints {
            if let Some(q) = small_denominator(c) {
                n = n.div_ceil(q) * q;
            } else {
                // Fall back to resolving this constraint exactly.
                let steps = (c / dt_max).ceil();
                return Self::new(kinetics, grid, c / steps, scheme);
            }
        }
        Self::new(kinetics, grid, 1.0 / n as f64, scheme)
    }

    /// Same kinetics, scheme and step on another grid.
    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        Self::new(self.kinetics.clone(), grid, self.dt, self.scheme)
    }

    pub fn kinetics(&self) -> &Kinetics {
        &self.kinetics
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// Ring length for [`DelayState`]: `round(tau / dt) + 1`.
    pub fn history_len(&self) -> usize {
        self.delay_steps + 1
    }

    pub fn kernel_weights(&self) -> &[f64] {
        &self.kernel
    }

    fn kernel_half(&self) -> usize {
        self.kernel.len() / 2
    }

    /// Nodes over which the implicit diffusion solve carries a boundary
    /// perturbation before it decays below 1e-16.
    fn implicit_reach(&self) -> usize {
        if self.scheme != Scheme::ImexDiffusionImplicit {
            return 0;
        }
        let k = &self.kinetics;
        let d = match k.family {
            Family::PeriodicDiffusion => self.half_d.iter().copied().fold(0.0, f64::max),
            _ => k.diffusion.iter().copied().fold(0.0, f64::max),
        };
        let lam = self.dt * d / (self.grid.dx() * self.grid.dx());
        if lam <= 0.0 {
            return 0;
        }
        // Decaying root of lam * rho^2 - (1 + 2 lam) rho + lam = 0.
        let b = 1.0 + 2.0 * lam;
        let rho = (b - (b * b - 4.0 * lam * lam).sqrt()) / (2.0 * lam);
        ((1e-16f64).ln() / rho.ln()).ceil() as usize + 1
    }

    /// Largest `dt` keeping both sub-steps monotone: the transport update
    /// needs nonnegative diagonal coefficients, the reaction step needs
    /// `dt * L_f <= 1`.
    pub fn max_stable_dt(&self) -> f64 {
        let dx = self.grid.dx();
        let k = &self.kinetics;
        let mut worst = k.decay_bound();
        for s in 0..k.n_species() {
            let mut rate = 0.0;
            if self.scheme == Scheme::ExplicitEuler {
                rate += match k.family {
                    Family::PeriodicDiffusion => {
                        let m = self
                            .half_d
                            .windows(2)
                            .map(|w| w[0] + w[1])
                            .fold(0.0, f64::max);
                        m / (dx * dx)
                    }
                    _ => 2.0 * k.diffusion[s] / (dx * dx),
                };
            }
            if let Some(cs) = &k.cross_section {
                let nc = cs.n_cross;
                let e_max = self.advection[s * nc..(s + 1) * nc]
                    .iter()
                    .fold(0.0f64, |m, e| m.max(e.abs()));
                rate += e_max / dx;
                if nc > 1 {
                    rate += 2.0 * cs.diffusion[s] / (cs.dy() * cs.dy());
                }
            }
            worst = worst.max(rate);
        }
        if worst == 0.0 {
            f64::INFINITY
        } else {
            1.0 / worst
        }
    }

    fn check_profile(&self, p: &Profile) -> Result<()> {
        if !p.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("profile grid differs from the semiflow grid".into()));
        }
        if p.dim() != self.kinetics.state_dim() {
            return Err(Error::GridMismatch(format!(
                "profile dimension {} but the system state has dimension {}",
                p.dim(),
                self.kinetics.state_dim()
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self, p: &Profile) -> Result<DelayState> {
        self.check_profile(p)?;
        Ok(DelayState::constant(p, self.history_len()))
    }

    /// One step from phase `t`. Delayed families use a constant history.
    pub fn step(&self, p: &Profile, t: f64) -> Result<Profile> {
        let mut st = self.initial_state(p)?;
        self.step_state(&mut st, t)?;
        Ok(st.into_current())
    }

    pub fn step_state(&self, st: &mut DelayState, t: f64) -> Result<()> {
        if st.len() != self.history_len() {
            return invalid(format!(
                "history ring has length {}, expected {}",
                st.len(),
                self.history_len()
            ));
        }
        self.check_profile(st.current())?;
        let next = self.advance(st.current(), st.delayed(), t)?;
        if self.delay_steps > 0 {
            st.ring.pop_front();
        } else {
            st.ring.clear();
        }
        st.ring.push_back(next);
        Ok(())
    }

    /// Transport part of the update (habitat diffusion unless implicit,
    /// cross-section diffusion, advection) for the node at extended index `k`.
    fn transport(&self, ext: &[f64], k: usize, node: Option<usize>, implicit_x: bool, out: &mut [f64]) {
        let kin = &self.kinetics;
        let dim = kin.state_dim();
        let ns = kin.n_species();
        let nc = dim / ns;
        let dx = self.grid.dx();
        let inv_dx2 = 1.0 / (dx * dx);
        let (um, u0, up) = (
            &ext[(k - 1) * dim..k * dim],
            &ext[k * dim..(k + 1) * dim],
            &ext[(k + 1) * dim..(k + 2) * dim],
        );
        for c in 0..dim {
            let (s, j) = (c / nc, c % nc);
            let mut acc = 0.0;
            if !implicit_x {
                acc += match (kin.family, node) {
                    (Family::PeriodicDiffusion, Some(i)) => {
                        (self.half_d[i + 1] * (up[c] - u0[c]) - self.half_d[i] * (u0[c] - um[c]))
                            * inv_dx2
                    }
                    _ => kin.diffusion[s] * (up[c] - 2.0 * u0[c] + um[c]) * inv_dx2,
                };
            }
            if let Some(cs) = &kin.cross_section {
                if nc > 1 {
                    let below = if j > 0 { u0[c - 1] } else { u0[c] };
                    let above = if j + 1 < nc { u0[c + 1] } else { u0[c] };
                    acc += cs.diffusion[s] * (above - 2.0 * u0[c] + below) / (cs.dy() * cs.dy());
                }
                let e = self.advection[c];
                acc += if e > 0.0 {
                    e * (up[c] - u0[c]) / dx
                } else {
                    e * (u0[c] - um[c]) / dx
                };
            }
            out[c] = u0[c] + self.dt * acc;
        }
    }

    /// Reaction sub-step on one point's state: an RK4 step of the local
    /// field, or for the nonlocal family an Euler step with the delayed
    /// convolution `conv` (one value per point).
    fn react(&self, state: &mut [f64], conv: f64, t: f64, bu: &mut [f64], rk: &mut [Vec<f64>; 5]) {
        let kin = &self.kinetics;
        if let (Family::NonlocalDelayed, Some(nl)) = (&kin.family, &kin.nonlocal) {
            state[0] += self.dt * (-nl.death * state[0] + conv);
            return;
        }
        let ns = kin.n_species();
        let nc = state.len() / ns;
        let h = self.dt;
        for j in 0..nc {
            for s in 0..ns {
                bu[s] = state[s * nc + j];
            }
            let [k1, k2, k3, k4, tmp] = rk;
            let f = |t: f64, u: &[f64], o: &mut [f64]| kin.reaction.eval(t, u, o);
            f(t, &bu[..ns], &mut k1[..ns]);
            for s in 0..ns {
                tmp[s] = bu[s] + 0.5 * h * k1[s];
            }
            f(t + 0.5 * h, &tmp[..ns], &mut k2[..ns]);
            for s in 0..ns {
                tmp[s] = bu[s] + 0.5 * h * k2[s];
            }
            f(t + 0.5 * h, &tmp[..ns], &mut k3[..ns]);
            for s in 0..ns {
                tmp[s] = bu[s] + h * k3[s];
            }
            f(t + h, &tmp[..ns], &mut k4[..ns]);
            for s in 0..ns {
                state[s * nc + j] = bu[s] + h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
            }
        }
    }

    fn advance(&self, cur: &Profile, delayed: &Profile, t: f64) -> Result<Profile> {
        let kin = &self.kinetics;
        let dim = kin.state_dim();
        let n = self.grid.n_points();
        let pad = self.kernel_half().max(1);
        let implicit_x = self.scheme == Scheme::ImexDiffusionImplicit;

        let extend = |p: &Profile| {
            let mut ext = Vec::with_capacity((n + 2 * pad) * dim);
            for _ in 0..pad {
                ext.extend_from_slice(p.left_limit());
            }
            ext.extend_from_slice(p.values());
            for _ in 0..pad {
                ext.extend_from_slice(p.right_limit());
            }
            ext
        };
        let ext = extend(cur);
        let mut values = vec![0.0; n * dim];
        for i in 0..n {
            self.transport(&ext, i + pad, Some(i), implicit_x, &mut values[i * dim..(i + 1) * dim]);
        }
        // A constant neighbourhood only feels the cross-section terms.
        let limit_transport = |lim: &[f64]| {
            let ext: Vec<f64> = lim.iter().copied().cycle().take(3 * dim).collect();
            let mut out = vec![0.0; dim];
            self.transport(&ext, 1, None, true, &mut out);
            out
        };
        let mut left = limit_transport(cur.left_limit());
        let mut right = limit_transport(cur.right_limit());
        if implicit_x {
            self.solve_implicit_x(&mut values, &left, &right);
        }

        let conv: Vec<f64> = match (&kin.family, &kin.nonlocal) {
            (Family::NonlocalDelayed, Some(nl)) => {
                let b: Vec<f64> = extend(delayed).into_iter().map(|u| nl.birth(u)).collect();
                let h = self.kernel_half();
                let mut c: Vec<f64> = (0..n)
                    .map(|i| self.kernel.iter().enumerate().map(|(m, w)| w * b[i + pad + m - h]).sum())
                    .collect();
                c.push(nl.birth(delayed.left_limit()[0]));
                c.push(nl.birth(delayed.right_limit()[0]));
                c
            }
            _ => vec![0.0; n + 2],
        };
        let ns = kin.n_species();
        let mut bu = vec![0.0; ns];
        let mut rk: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; ns]);
        for i in 0..n {
            self.react(&mut values[i * dim..(i + 1) * dim], conv[i], t, &mut bu, &mut rk);
        }
        self.react(&mut left, conv[n], t, &mut bu, &mut rk);
        self.react(&mut right, conv[n + 1], t, &mut bu, &mut rk);

        if let Some(pos) = values.iter().chain(&left).chain(&right).position(|v| !v.is_finite()) {
            let (lo, hi) = values
                .iter()
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            return Err(Error::NonFinite {
                t: t + self.dt,
                detail: format!(
                    "first non-finite entry at flat index {pos}; finite range [{lo}, {hi}] \
                     (dt = {}, dx = {})",
                    self.dt,
                    self.grid.dx()
                ),
            });
        }
        Profile::new(self.grid.clone(), dim, values, left, right)
    }

    /// `(I - dt D_xx) u = rhs` per component, ghost values at the new limits.
    fn solve_implicit_x(&self, values: &mut [f64], left: &[f64], right: &[f64]) {
        let kin = &self.kinetics;
        let dim = kin.state_dim();
        let ns = kin.n_species();
        let nc = dim / ns;
        let n = self.grid.n_points();
        let dx = self.grid.dx();
        let r = self.dt / (dx * dx);
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for c in 0..dim {
            let s = c / nc;
            for i in 0..n {
                let (dl, dr) = match kin.family {
                    Family::PeriodicDiffusion => (self.half_d[i], self.half_d[i + 1]),
                    _ => (kin.diffusion[s], kin.diffusion[s]),
                };
                sub[i] = -r * dl;
                sup[i] = -r * dr;
                diag[i] = 1.0 + r * (dl + dr);
                rhs[i] = values[i * dim + c];
            }
            rhs[0] -= sub[0] * left[c];
            rhs[n - 1] -= sup[n - 1] * right[c];
            let x = thomas(&sub, &diag, &sup, &rhs);
            for i in 0..n {
                values[i * dim + c] = x[i];
            }
        }
    }

    /// Evolves `p` from phase `t0` over `horizon`, feeding the observers.
    pub fn evolve(
        &self,
        p: &Profile,
        t0: f64,
        horizon: f64,
        observers: &[Observer],
    ) -> Result<(Profile, Observations)> {
        let st = self.initial_state(p)?;
        let (st, obs) = self.evolve_state(st, t0, horizon, observers)?;
        Ok((st.into_current(), obs))
    }

    /// Number of whole steps closest to `horizon`.
    pub fn steps_for_approx(&self, horizon: f64) -> usize {
        (horizon / self.dt).round().max(0.0) as usize
    }

    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        if !(horizon >= 0.0) {
            return invalid(format!("horizon must be nonnegative, got {horizon}"));
        }
        let m = (horizon / self.dt).round();
        if (m * self.dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return precondition(format!(
                "horizon {horizon} is not a multiple of dt = {}",
                self.dt
            ));
        }
        Ok(m as usize)
    }

    pub fn evolve_state(
        &self,
        mut st: DelayState,
        t0: f64,
        horizon: f64,
        observers: &[Observer],
    ) -> Result<(DelayState, Observations)> {
        let steps = self.steps_for(horizon)?;
        let mut obs = Observations::default();
        obs.record(observers, 0, t0, st.current());
        for k in 1..=steps {
            self.step_state(&mut st, t0 + (k - 1) as f64 * self.dt)?;
            obs.record(observers, k, t0 + k as f64 * self.dt, st.current());
        }
        Ok((st, obs))
    }

    /// The period map `Q_omega`, starting at phase zero. Autonomous kinetics
    /// accept an artificial period.
    pub fn poincare_map(&self, omega: Option<f64>) -> Result<impl Fn(&Profile) -> Result<Profile> + '_> {
        let w = match (omega, self.kinetics.period()) {
            (Some(w), _) | (None, Some(w)) => w,
            (None, None) => return precondition("no period: kinetics are autonomous"),
        };
        if !(w > 0.0) {
            return invalid("period must be positive");
        }
        let steps = self.steps_for(w).map_err(|_| {
            Error::Precondition(format!("period {w} is not resolvable by dt = {}", self.dt))
        })?;
        Ok(move |p: &Profile| {
            let mut st = self.initial_state(p)?;
            for k in 0..steps {
                self.step_state(&mut st, k as f64 * self.dt)?;
            }
            Ok(st.into_current())
        })
    }

    /// Random audit of shift equivariance, the comparison principle and
    /// invariance of the order box.
    pub fn audit_axioms(&self, trials: usize, seed: u64) -> Result<AxiomAudit> {
        let kin = &self.kinetics;
        let dim = kin.state_dim();
        let ns = kin.n_species();
        let nc = dim / ns;
        let n = self.grid.n_points();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // Grid-aligned shift; periodic media need whole periods.
        let shift_nodes = match (&kin.family, &kin.medium) {
            (Family::PeriodicDiffusion, Some(m)) => {
                let q = m.period / self.grid.dx();
                ((q - q.round()).abs() < 1e-9).then_some(q.round() as usize)
            }
            _ => Some(5),
        };
        let margin = self.kernel_half().max(1) + 1 + self.implicit_reach();

        let random_profile = |rng: &mut ChaCha8Rng| {
            let mut vals = vec![0.0; n * dim];
            for i in 0..n {
                for c in 0..dim {
                    let s = c / nc;
                    vals[i * dim + c] = rng.random_range(kin.bottom[s]..=kin.top[s]);
                }
            }
            let left = vals[..dim].to_vec();
            let right = vals[(n - 1) * dim..].to_vec();
            Profile::new(self.grid.clone(), dim, vals, left, right)
        };

        let mut audit = AxiomAudit {
            trials,
            shift_nodes: shift_nodes.unwrap_or(0),
            ..Default::default()
        };
        for trial in 0..trials {
            let t = rng.random_range(0.0..1.0) * kin.period().unwrap_or(1.0);
            let p = random_profile(&mut rng)?;
            let mut q_vals = p.values().to_vec();
            for (i, v) in q_vals.iter_mut().enumerate() {
                let s = (i % dim) / nc;
                *v = (*v + rng.random_range(0.0..0.5) * (kin.top[s] - kin.bottom[s])).min(kin.top[s]);
            }
            let ql = q_vals[..dim].to_vec();
            let qr = q_vals[(n - 1) * dim..].to_vec();
            let q = Profile::new(self.grid.clone(), dim, q_vals, ql, qr)?;
            let sp = self.step(&p, t)?;
            let sq = self.step(&q, t)?;
            let violation = sp
                .values()
                .iter()
                .zip(sq.values())
                .chain(sp.left_limit().iter().zip(sq.left_limit()))
                .chain(sp.right_limit().iter().zip(sq.right_limit()))
                .fold(0.0f64, |m, (a, b)| m.max(a - b));
            audit.comparison_violation = audit.comparison_violation.max(violation);
            for (i, v) in sp.values().iter().chain(sq.values()).enumerate() {
                let s = (i % dim) / nc;
                let out = (kin.bottom[s] - v).max(v - kin.top[s]);
                audit.box_violation = audit.box_violation.max(out);
            }
            if let Some(m) = shift_nodes {
                let y = m as f64 * self.grid.dx();
                let a = translate(&sp, y);
                let b = self.step(&translate(&p, y), t)?;
                // The first m nodes of `a` are fill from the left limit, which a
                // nonlocal kernel does not reproduce; the right end loses data.
                let hi = n.saturating_sub(m + margin);
                let mut r: f64 = 0.0;
                for i in m.min(hi)..hi {
                    for c in 0..dim {
                        r = r.max((a.value(i)[c] - b.value(i)[c]).abs());
                    }
                }
                audit.translation_residual = audit.translation_residual.max(r);
            }
            audit.completed = trial + 1;
        }
        Ok(audit)
    }

    /// Writes each snapshot in the binary profile format plus a JSON
    /// manifest with content hashes.
    pub fn write_snapshots(&self, dir: &Path, snapshots: &[(f64, Profile)]) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(snapshots.len());
        for (k, (t, p)) in snapshots.iter().enumerate() {
            let bytes = p.to_bytes();
            let name = format!("snapshot_{k:05}.mwpf");
            std::fs::write(dir.join(&name), &bytes)?;
            entries.push(SnapshotEntry {
                t: *t,
                file: name,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = SnapshotManifest {
            dt: self.dt,
            dx: self.grid.dx(),
            scheme: self.scheme,
            family: self.kinetics.family,
            snapshots: entries,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

fn sample_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    (0..=512)
        .map(|i| f(lo + (hi - lo) * i as f64 / 512.0))
        .fold(f64::INFINITY, f64::min)
}

/// `q` with `c * q` an integer, `q <= 1000`, if one exists.
fn small_denominator(c: f64) -> Option<u64> {
    (1..=1000u64).find(|&q| {
        let v = c * q as f64;
        (v - v.round()).abs() < 1e-9 && v.round() >= 1.0
    })
}

/// Tridiagonal solve (Thomas algorithm); diagonally dominant systems only.
pub fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[derive(Clone, Debug)]
pub enum Observer {
    /// Level-crossing position every `every` steps.
    FrontPosition { level: LevelBox, every: usize },
    /// Monotonicity defect every `every` steps.
    OrderMonitor { every: usize },
    Snapshots { every: usize },
}

#[derive(Clone, Debug, Default)]
pub struct Observations {
    /// `(t, position)`; `NaN` when the profile is not monotone.
    pub fronts: Vec<(f64, f64)>,
    /// `(t, largest decrease between neighbouring samples)`.
    pub order_defects: Vec<(f64, f64)>,
    pub snapshots: Vec<(f64, Profile)>,
}

impl Observations {
    fn record(&mut self, observers: &[Observer], k: usize, t: f64, p: &Profile) {
        for o in observers {
            match o {
                Observer::FrontPosition { level, every } if k % every.max(&1) == 0 => {
                    let x = level_crossing(p, level).unwrap_or(f64::NAN);
                    self.fronts.push((t, x));
                }
                Observer::OrderMonitor { every } if k % every.max(&1) == 0 => {
                    self.order_defects.push((t, p.monotonicity_defect()));
                }
                Observer::Snapshots { every } if k % every.max(&1) == 0 => {
                    self.snapshots.push((t, p.clone()));
                }
                _ => {}
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxiomAudit {
    pub trials: usize,
    pub completed: usize,
    pub shift_nodes: usize,
    pub translation_residual: f64,
    pub comparison_violation: f64,
    pub box_violation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub t: f64,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub dt: f64,
    pub dx: f64,
    pub scheme: Scheme,
    pub family: Family,
    pub snapshots: Vec<SnapshotEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{Reaction, STEPS_PER_PERIOD};
    use crate::profiles::heaviside_profile;

    fn cubic_flow(a: f64) -> Semiflow {
        let g = Grid::with_spacing(-20.0, 20.0, 0.1).unwrap();
        Semiflow::auto(Kinetics::cubic(a), g, Scheme::ExplicitEuler).unwrap()
    }

    #[test]
    fn equilibria_are_fixed() {
        let s = cubic_flow(0.25);
        for v in [0.0, 1.0] {
            let p = Profile::constant(s.grid().clone(), &[v]);
            let q = s.step(&p, 0.0).unwrap();
            assert!(q.sup_distance(&p).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn step_size_gate() {
        let g = Grid::with_spacing(-5.0, 5.0, 0.1).unwrap();
        let k = Kinetics::cubic(0.25);
        let s = Semiflow::auto(k.clone(), g.clone(), Scheme::ExplicitEuler).unwrap();
        let err = Semiflow::new(k.clone(), g.clone(), 2.0 * s.max_stable_dt(), Scheme::ExplicitEuler);
        assert!(matches!(err, Err(Error::StepSize(_))));
        // The implicit scheme only needs the reaction bound.
        assert!(Semiflow::new(k, g, 2.0 * s.max_stable_dt(), Scheme::ImexDiffusionImplicit).is_ok());
    }

    #[test]
    fn heat_mass_conserved() {
        let g = Grid::with_spacing(-20.0, 20.0, 0.1).unwrap();
        let k = Kinetics::reaction_diffusion(Reaction::Polynomial { coeffs: vec![] }, vec![1.0]).unwrap();
        let s = Semiflow::auto(k, g.clone(), Scheme::ExplicitEuler).unwrap();
        let mut p = Profile::from_fn(g, 1, |x, o| o[0] = (-x * x).exp());
        p.set_limits(vec![0.0], vec![0.0]);
        let mass = |p: &Profile| p.values().iter().sum::<f64>() * 0.1;
        let (q, _) = s.evolve(&p, 0.0, 1.0, &[]).unwrap();
        assert!((mass(&q) - mass(&p)).abs() <= 1e-12, "{} {}", mass(&q), mass(&p));
    }

    #[test]
    fn semigroup_property() {
        let s = cubic_flow(0.25);
        let p = heaviside_profile(s.grid(), &[0.0], &[1.0], 0.0, 2.0).unwrap();
        let (a, _) = s.evolve(&p, 0.0, 3.0, &[]).unwrap();
        let (b, _) = s.evolve(&p, 0.0, 1.0, &[]).unwrap();
        let (b, _) = s.evolve(&b, 1.0, 2.0, &[]).unwrap();
        assert!(a.sup_distance(&b).unwrap() <= 1e-12);
        let (z, _) = s.evolve(&p, 0.0, 0.0, &[]).unwrap();
        assert_eq!(z.values(), p.values());
    }

    #[test]
    fn front_moves_monotonically() {
        let s = cubic_flow(0.25);
        let p = heaviside_profile(s.grid(), &[0.0], &[1.0], 5.0, 0.0).unwrap();
        let obs = [Observer::FrontPosition { level: LevelBox::lower_scalar(0.5), every: 100 }];
        let (_, o) = s.evolve(&p, 0.0, 20.0, &obs).unwrap();
        // c > 0 moves the front to the left.
        let xs: Vec<f64> = o.fronts.iter().skip(5).map(|f| f.1).collect();
        assert!(xs.windows(2).all(|w| w[1] <= w[0]), "{xs:?}");
    }

    #[test]
    fn periodic_poincare_map() {
        let g = Grid::with_spacing(-5.0, 5.0, 0.1).unwrap();
        let k = Kinetics::reaction_diffusion(
            Reaction::PeriodicCubic { a0: 0.25, amp: 0.1, period: 1.0 },
            vec![1.0],
        )
        .unwrap();
        let s = Semiflow::auto(k, g.clone(), Scheme::ExplicitEuler).unwrap();
        let q = s.poincare_map(None).unwrap();
        for v in [0.0, 1.0] {
            let p = Profile::constant(g.clone(), &[v]);
            assert!(q(&p).unwrap().sup_distance(&p).unwrap() <= 1e-12);
        }
        let auto = cubic_flow(0.25);
        let q1 = auto.poincare_map(Some(1.0)).unwrap();
        let p = heaviside_profile(auto.grid(), &[0.0], &[1.0], 0.0, 1.0).unwrap();
        let (e, _) = auto.evolve(&p, 0.0, 1.0, &[]).unwrap();
        assert!(q1(&p).unwrap().sup_distance(&e).unwrap() <= 1e-15);
        assert!(auto.poincare_map(None).is_err());
        let _ = STEPS_PER_PERIOD;
    }

    #[test]
    fn linear_periodic_growth() {
        let g = Grid::with_spacing(-2.0, 2.0, 0.1).unwrap();
        let k = Kinetics::reaction_diffusion(
            Reaction::LinearPeriodic { mean: 0.1875, amp: 1.0, period: 1.0 },
            vec![1.0],
        )
        .unwrap();
        let s = Semiflow::auto(k, g.clone(), Scheme::ExplicitEuler).unwrap();
        let q = s.poincare_map(None).unwrap();
        let p = Profile::constant(g.clone(), &[0.3]);
        let want = 0.3 * 0.1875f64.exp();
        let image = q(&p).unwrap();
        for v in image.values().iter().chain(image.left_limit()) {
            assert!((v - want).abs() < 1e-8, "{v} {want}");
        }
    }

    #[test]
    fn audit_cubic() {
        let g = Grid::with_spacing(-5.0, 5.0, 0.1).unwrap();
        let s = Semiflow::auto(Kinetics::cubic(0.25), g, Scheme::ExplicitEuler).unwrap();
        let a = s.audit_axioms(20, 1).unwrap();
        assert!(a.comparison_violation <= 1e-10, "{a:?}");
        assert!(a.translation_residual <= 1e-12, "{a:?}");
        assert!(a.box_violation <= 1e-10, "{a:?}");
    }

    #[test]
    fn thomas_solves() {
        let x = thomas(&[0.0, -1.0, -1.0], &[4.0, 4.0, 4.0], &[-1.0, -1.0, 0.0], &[3.0, 2.0, 3.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
