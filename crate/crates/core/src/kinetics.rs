//! System-family descriptors and the spatially homogeneous dynamics.
//!
//! A [`Kinetics`] value carries everything needed to build both the spatial
//! semiflow and its linearizations: the reaction field, its Jacobian, the
//! diffusion data of the family, and the order box `[bottom, top]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, precondition, Error, Result};
use crate::pulsating::PeriodicMedium;

const TWO_PI: f64 = std::f64::consts::TAU;

/// Residual tolerance for refined equilibria.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-12;
/// Max-norm distance under which two equilibria are identified.
pub const EQUILIBRIUM_DEDUP: f64 = 1e-8;
/// `|indicator|` below which an equilibrium is declared marginal.
pub const MARGINAL_THRESHOLD: f64 = 1e-8;
/// RK4 steps per period used for period maps and Floquet integration.
pub const STEPS_PER_PERIOD: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PeriodicRdSystem,
    Cylinder,
    PeriodicDiffusion,
    NonlocalDelayed,
}

/// Closed-form reaction catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Reaction {
    /// `u (1 - u)(u - a)`
    Cubic { a: f64 },
    /// `u (1 - u^2)`
    CubicOdd,
    /// `u (1 - u)(u - a(t))`, `a(t) = a0 + amp sin(2 pi t / period)`
    PeriodicCubic { a0: f64, amp: f64, period: f64 },
    /// `sum_k coeffs[k] u^k`
    Polynomial { coeffs: Vec<f64> },
    /// `p(t) u`, `p(t) = mean + amp sin(2 pi t / period)`
    LinearPeriodic { mean: f64, amp: f64, period: f64 },
    /// `u_i (1 - u_i)(u_i - a_i) + coupling (u_{i+1} - u_i)`, indices cyclic
    CoupledCubic { a: Vec<f64>, coupling: f64 },
}

fn cubic(u: f64, a: f64) -> f64 {
    u * (1.0 - u) * (u - a)
}

fn cubic_prime(u: f64, a: f64) -> f64 {
    -3.0 * u * u + 2.0 * (1.0 + a) * u - a
}

impl Reaction {
    pub fn n_species(&self) -> usize {
        match self {
            Reaction::CoupledCubic { a, .. } => a.len(),
            _ => 1,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            Reaction::PeriodicCubic { period, .. } | Reaction::LinearPeriodic { period, .. } => {
                Some(*period)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Reaction::PeriodicCubic { period, .. } | Reaction::LinearPeriodic { period, .. }
                if !(*period > 0.0) =>
            {
                invalid(format!("reaction period must be positive, got {period}"))
            }
            Reaction::CoupledCubic { a, coupling } => {
                if a.is_empty() {
                    return invalid("coupled-cubic needs at least one species");
                }
                if *coupling < 0.0 {
                    return invalid("coupled-cubic coupling must be nonnegative (cooperative)");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64, u: &[f64], out: &mut [f64]) {
        match self {
            Reaction::Cubic { a } => out[0] = cubic(u[0], *a),
            Reaction::CubicOdd => out[0] = u[0] * (1.0 - u[0] * u[0]),
            Reaction::PeriodicCubic { a0, amp, period } => {
                let a = a0 + amp * (TWO_PI * t / period).sin();
                out[0] = cubic(u[0], a);
            }
            Reaction::Polynomial { coeffs } => {
                out[0] = coeffs.iter().rev().fold(0.0, |acc, c| acc * u[0] + c);
            }
            Reaction::LinearPeriodic { mean, amp, period } => {
                out[0] = (mean + amp * (TWO_PI * t / period).sin()) * u[0];
            }
            Reaction::CoupledCubic { a, coupling } => {
                let n = a.len();
                for i in 0..n {
                    let j = (i + 1) % n;
                    let couple = if n > 1 { coupling * (u[j] - u[i]) } else { 0.0 };
                    out[i] = cubic(u[i], a[i]) + couple;
                }
            }
        }
    }

    pub fn jacobian_into(&self, t: f64, u: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        match self {
            Reaction::Cubic { a } => jac[(0, 0)] = cubic_prime(u[0], *a),
            Reaction::CubicOdd => jac[(0, 0)] = 1.0 - 3.0 * u[0] * u[0],
            Reaction::PeriodicCubic { a0, amp, period } => {
                let a = a0 + amp * (TWO_PI * t / period).sin();
                jac[(0, 0)] = cubic_prime(u[0], a);
            }
            Reaction::Polynomial { coeffs } => {
                let mut d = 0.0;
                for k in (1..coeffs.len()).rev() {
                    d = d * u[0] + k as f64 * coeffs[k];
                }
                jac[(0, 0)] = d;
            }
            Reaction::LinearPeriodic { mean, amp, period } => {
                jac[(0, 0)] = mean + amp * (TWO_PI * t / period).sin();
            }
            Reaction::CoupledCubic { a, coupling } => {
                let n = a.len();
                for i in 0..n {
                    jac[(i, i)] = cubic_prime(u[i], a[i]);
                    if n > 1 {
                        let j = (i + 1) % n;
                        jac[(i, i)] -= coupling;
                        jac[(i, j)] += coupling;
                    }
                }
            }
        }
    }
}

/// Cross-section advection profile `E(y)` for one species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Advection {
    Constant { e: f64 },
    Linear { e0: f64, e1: f64 },
    Cosine { e0: f64, e1: f64 },
}

impl Advection {
    /// `E(y)` on a cross-section of length `len`.
    pub fn eval(&self, y: f64, len: f64) -> f64 {
        match self {
            Advection::Constant { e } => *e,
            Advection::Linear { e0, e1 } => e0 + e1 * y,
            Advection::Cosine { e0, e1 } => e0 + e1 * (std::f64::consts::PI * y / len).cos(),
        }
    }
}

/// Interval cross-section `Omega = (0, length)` with homogeneous Neumann data,
/// discretized cell-centred with `n_cross` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub length: f64,
    pub n_cross: usize,
    /// `B`, one diffusivity per species.
    pub diffusion: Vec<f64>,
    /// `E(y)`, one profile per species.
    pub advection: Vec<Advection>,
}

impl CrossSection {
    pub fn dy(&self) -> f64 {
        self.length / self.n_cross as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Kernel {
    Gaussian { sigma: f64 },
    Laplace { lambda: f64 },
    TopHat { w: f64 },
}

impl Kernel {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Kernel::Gaussian { sigma } => {
                (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * TWO_PI.sqrt())
            }
            Kernel::Laplace { lambda } => 0.5 * lambda * (-lambda * x.abs()).exp(),
            Kernel::TopHat { w } => {
                if x.abs() <= *w {
                    0.5 / w
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width beyond which the kernel carries at most `tail` mass.
    pub fn support_radius(&self, tail: f64) -> f64 {
        match self {
            Kernel::Gaussian { sigma } => {
                // erfc(r / (sigma sqrt 2)) <= tail; a tight upper bound suffices.
                sigma * (2.0 * (1.0 / tail).ln()).sqrt() + sigma
            }
            Kernel::Laplace { lambda } => (1.0 / tail).ln() / lambda,
            Kernel::TopHat { w } => *w,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Kernel::Gaussian { sigma } => *sigma > 0.0,
            Kernel::Laplace { lambda } => *lambda > 0.0,
            Kernel::TopHat { w } => *w > 0.0,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("kernel parameter must be positive: {self:?}"))
        }
    }

    /// Numerical mass by composite Simpson quadrature over the support.
    pub fn mass(&self) -> f64 {
        let r = self.support_radius(1e-14);
        let n = 20_000;
        let h = 2.0 * r / n as f64;
        let mut s = self.density(-r) + self.density(r);
        for i in 1..n {
            let x = -r + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * self.density(x);
        }
        s * h / 3.0
    }
}

/// Birth function of the nonlocal delayed family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Birth {
    /// `death * u + u (1 - u)(u - a)`: the local limit is the cubic equation.
    ShiftedCubic { a: f64 },
    /// `sum_k coeffs[k] u^k`
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlocal {
    /// Death rate `d`.
    pub death: f64,
    pub birth: Birth,
    pub kernel: Kernel,
    /// Delay `tau >= 0`.
    pub delay: f64,
}

impl Nonlocal {
    pub fn birth(&self, u: f64) -> f64 {
        match &self.birth {
            Birth::ShiftedCubic { a } => self.death * u + cubic(u, *a),
            Birth::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c),
        }
    }

    pub fn birth_prime(&self, u: f64) -> f64 {
        match &self.birth {
            Birth::ShiftedCubic { a } => self.death + cubic_prime(u, *a),
            Birth::Polynomial { coeffs } => {
                let mut d = 0.0;
                for k in (1..coeffs.len()).rev() {
                    d = d * u + k as f64 * coeffs[k];
                }
                d
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kinetics {
    pub family: Family,
    /// Local reaction; for the nonlocal family the homogeneous field is
    /// `-d u + b(u)` and this entry is unused.
    pub reaction: Reaction,
    /// Species diffusivities `A` along the habitat.
    pub diffusion: Vec<f64>,
    /// Lower corner of the order box (usually `0`).
    pub bottom: Vec<f64>,
    /// Top state `beta`.
    pub top: Vec<f64>,
    pub cross_section: Option<CrossSection>,
    pub medium: Option<PeriodicMedium>,
    pub nonlocal: Option<Nonlocal>,
}

impl Kinetics {
    /// Scalar or system reaction-diffusion `u_t = A u_xx + f(t, u)` on `[0, 1]^n`.
    pub fn reaction_diffusion(reaction: Reaction, diffusion: Vec<f64>) -> Result<Self> {
        let n = reaction.n_species();
        let k = Self {
            family: Family::PeriodicRdSystem,
            reaction,
            diffusion,
            bottom: vec![0.0; n],
            top: vec![1.0; n],
            cross_section: None,
            medium: None,
            nonlocal: None,
        };
        k.validate()?;
        Ok(k)
    }

    /// Scalar cubic `u_t = u_xx + u (1 - u)(u - a)`.
    pub fn cubic(a: f64) -> Self {
        Self::reaction_diffusion(Reaction::Cubic { a }, vec![1.0]).expect("valid cubic")
    }

    pub fn cylinder(
        reaction: Reaction,
        diffusion: Vec<f64>,
        cross_section: CrossSection,
    ) -> Result<Self> {
        let n = reaction.n_species();
        let k = Self {
            family: Family::Cylinder,
            reaction,
            diffusion,
            bottom: vec![0.0; n],
            top: vec![1.0; n],
            cross_section: Some(cross_section),
            medium: None,
            nonlocal: None,
        };
        k.validate()?;
        Ok(k)
    }

    /// `u_t = (d(x) u_x)_x + f(u)`.
    pub fn periodic_diffusion(reaction: Reaction, medium: PeriodicMedium) -> Result<Self> {
        let k = Self {
            family: Family::PeriodicDiffusion,
            reaction,
            diffusion: vec![1.0],
            bottom: vec![0.0],
            top: vec![1.0],
            cross_section: None,
            medium: Some(medium),
            nonlocal: None,
        };
        k.validate()?;
        Ok(k)
    }

    /// `u_t = u_xx - d u + int b(u(t - tau, y)) k(x - y) dy`.
    pub fn nonlocal_delayed(nonlocal: Nonlocal) -> Result<Self> {
        let k = Self {
            family: Family::NonlocalDelayed,
            reaction: Reaction::Polynomial { coeffs: vec![] },
            diffusion: vec![1.0],
            bottom: vec![0.0],
            top: vec![1.0],
            cross_section: None,
            medium: None,
            nonlocal: Some(nonlocal),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn with_box(mut self, bottom: Vec<f64>, top: Vec<f64>) -> Result<Self> {
        self.bottom = bottom;
        self.top = top;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.reaction.validate()?;
        let n = self.n_species();
        if self.diffusion.len() != n {
            return invalid(format!(
                "expected {n} diffusivities, got {}",
                self.diffusion.len()
            ));
        }
        if self.diffusion.iter().any(|d| !(*d > 0.0)) {
            return invalid("diffusivities must be strictly positive");
        }
        if self.bottom.len() != n || self.top.len() != n {
            return invalid("order box dimension does not match the species count");
        }
        if self.bottom.iter().zip(&self.top).any(|(b, t)| !(b < t)) {
            return invalid("bottom state must lie strictly below the top state");
        }
        match self.family {
            Family::Cylinder => {
                let Some(cs) = &self.cross_section else {
                    return invalid("cylinder family needs a cross-section");
                };
                if cs.n_cross < 1 || !(cs.length > 0.0) {
                    return invalid("cross-section needs positive length and at least one cell");
                }
                if cs.diffusion.len() != n || cs.diffusion.iter().any(|b| !(*b > 0.0)) {
                    return invalid("cross-section diffusivities must be positive, one per species");
                }
                if cs.advection.len() != n {
                    return invalid("one advection profile per species is required");
                }
            }
            Family::PeriodicDiffusion => {
                let Some(m) = &self.medium else {
                    return invalid("periodic-diffusion family needs a medium");
                };
                m.validate()?;
                if n != 1 {
                    return invalid("periodic-diffusion family is scalar");
                }
            }
            Family::NonlocalDelayed => {
                let Some(nl) = &self.nonlocal else {
                    return invalid("nonlocal family needs death/birth/kernel/delay data");
                };
                nl.kernel.validate()?;
                if !(nl.delay >= 0.0) {
                    return invalid("delay must be nonnegative");
                }
                if !(nl.death >= 0.0) {
                    return invalid("death rate must be nonnegative");
                }
                let mass = nl.kernel.mass();
                if (mass - 1.0).abs() > 1e-8 {
                    return invalid(format!("kernel mass {mass} differs from 1"));
                }
            }
            Family::PeriodicRdSystem => {}
        }
        Ok(())
    }

    pub fn n_species(&self) -> usize {
        match self.family {
            Family::NonlocalDelayed => 1,
            _ => self.reaction.n_species(),
        }
    }

    /// Length of the state vector stored per habitat point.
    pub fn state_dim(&self) -> usize {
        match &self.cross_section {
            Some(cs) if self.family == Family::Cylinder => self.n_species() * cs.n_cross,
            _ => self.n_species(),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self.family {
            Family::NonlocalDelayed => None,
            _ => self.reaction.period(),
        }
    }

    /// Per-species state repeated over the cross-section nodes (species-major).
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        let nc = self.state_dim() / self.n_species();
        v.iter().flat_map(|x| std::iter::repeat_n(*x, nc)).collect()
    }

    /// Spatially homogeneous vector field (per species).
    pub fn field(&self, t: f64, u: &[f64], out: &mut [f64]) {
        match (&self.family, &self.nonlocal) {
            (Family::NonlocalDelayed, Some(nl)) => out[0] = -nl.death * u[0] + nl.birth(u[0]),
            _ => self.reaction.eval(t, u, out),
        }
    }

    pub fn field_vec(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.field(t, u, &mut out);
        out
    }

    pub fn jacobian(&self, t: f64, u: &[f64]) -> DMatrix<f64> {
        let n = self.n_species();
        let mut jac = DMatrix::zeros(n, n);
        match (&self.family, &self.nonlocal) {
            (Family::NonlocalDelayed, Some(nl)) => {
                jac[(0, 0)] = -nl.death + nl.birth_prime(u[0]);
            }
            _ => self.reaction.jacobian_into(t, u, &mut jac),
        }
        jac
    }

    /// Upper bound for `max(-df_i/du_i)` on the order box (and over one
    /// period), sampled on a lattice and inflated by 5%. For the nonlocal
    /// family this is the death rate.
    pub fn decay_bound(&self) -> f64 {
        if let (Family::NonlocalDelayed, Some(nl)) = (&self.family, &self.nonlocal) {
            return nl.death;
        }
        let n = self.n_species();
        let per_dim: usize = match n {
            1 => 257,
            2 => 33,
            3 => 9,
            _ => 3,
        };
        let times: Vec<f64> = match self.period() {
            Some(w) => (0..16).map(|k| w * k as f64 / 16.0).collect(),
            None => vec![0.0],
        };
        let mut worst: f64 = 0.0;
        let mut jac = DMatrix::zeros(n, n);
        let mut u = vec![0.0; n];
        let total = per_dim.pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            for c in 0..n {
                let k = rem % per_dim;
                rem /= per_dim;
                let s = k as f64 / (per_dim - 1) as f64;
                u[c] = self.bottom[c] + s * (self.top[c] - self.bottom[c]);
            }
            for &t in &times {
                self.reaction.jacobian_into(t, &u, &mut jac);
                for i in 0..n {
                    worst = worst.max(-jac[(i, i)]);
                }
            }
        }
        worst * 1.05
    }

    /// Audits cooperativity (off-diagonal Jacobian entries >= 0) and
    /// irreducibility at `samples` random points of the box.
    pub fn audit_cooperativity(&self, samples: usize, seed: u64) -> CooperativityAudit {
        let n = self.n_species();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_offdiag = f64::INFINITY;
        let mut irreducible = true;
        for _ in 0..samples {
            let u: Vec<f64> = (0..n)
                .map(|c| rng.random_range(self.bottom[c]..=self.top[c]))
                .collect();
            let t = self.period().map_or(0.0, |w| rng.random_range(0.0..w));
            let jac = self.jacobian(t, &u);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        min_offdiag = min_offdiag.min(jac[(i, j)]);
                    }
                }
            }
            irreducible &= is_irreducible(&jac);
        }
        CooperativityAudit {
            samples,
            min_offdiagonal: if n == 1 { 0.0 } else { min_offdiag },
            cooperative: n == 1 || min_offdiag >= -1e-12,
            irreducible,
        }
    }

    /// Flow of the homogeneous dynamics from `t0` over `span`.
    pub fn homogeneous_flow(&self, t0: f64, u0: &[f64], span: f64) -> Vec<f64> {
        if let (Family::NonlocalDelayed, Some(nl)) = (&self.family, &self.nonlocal) {
            if nl.delay > 0.0 {
                return delayed_flow(nl, u0[0], span);
            }
        }
        let steps = match self.period() {
            Some(w) => ((span / w).ceil() as usize).max(1) * STEPS_PER_PERIOD,
            None => ((span * 200.0).ceil() as usize).max(1),
        };
        rk4(
            |t, u, out| self.field(t, u, out),
            t0,
            u0,
            span,
            steps,
        )
    }

    /// Period map (or time-one map when autonomous) together with its
    /// derivative, by integrating the variational equation alongside.
    pub fn period_map_with_jacobian(&self, u0: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.n_species();
        let span = self.period().unwrap_or(1.0);
        let steps = STEPS_PER_PERIOD;
        let h = span / steps as f64;
        let mut u = u0.to_vec();
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut buf = vec![0.0; n];
        for s in 0..steps {
            let t = s as f64 * h;
            // RK4 on the augmented system (u, M).
            let eval = |t: f64, u: &[f64], m: &DMatrix<f64>, du: &mut Vec<f64>| {
                self.field(t, u, du);
                self.jacobian(t, u) * m
            };
            let mut k1u = vec![0.0; n];
            let k1m = eval(t, &u, &m, &mut k1u);
            for c in 0..n {
                buf[c] = u[c] + 0.5 * h * k1u[c];
            }
            let mut k2u = vec![0.0; n];
            let k2m = eval(t + 0.5 * h, &buf, &(&m + &k1m * (0.5 * h)), &mut k2u);
            for c in 0..n {
                buf[c] = u[c] + 0.5 * h * k2u[c];
            }
            let mut k3u = vec![0.0; n];
            let k3m = eval(t + 0.5 * h, &buf, &(&m + &k2m * (0.5 * h)), &mut k3u);
            for c in 0..n {
                buf[c] = u[c] + h * k3u[c];
            }
            let mut k4u = vec![0.0; n];
            let k4m = eval(t + h, &buf, &(&m + &k3m * h), &mut k4u);
            for c in 0..n {
                u[c] += h / 6.0 * (k1u[c] + 2.0 * k2u[c] + 2.0 * k3u[c] + k4u[c]);
            }
            m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        }
        (u, m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooperativityAudit {
    pub samples: usize,
    pub min_offdiagonal: f64,
    pub cooperative: bool,
    pub irreducible: bool,
}

/// Strong connectivity of the off-diagonal support graph.
pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { m[(i, j)] } else { m[(j, i)] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Classical RK4 for `u' = f(t, u)` over `[t0, t0 + span]`.
pub fn rk4(
    f: impl Fn(f64, &[f64], &mut [f64]),
    t0: f64,
    u0: &[f64],
    span: f64,
    steps: usize,
) -> Vec<f64> {
    let n = u0.len();
    let h = span / steps as f64;
    let mut u = u0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &u, &mut k1);
        for c in 0..n {
            tmp[c] = u[c] + 0.5 * h * k1[c];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for c in 0..n {
            tmp[c] = u[c] + 0.5 * h * k2[c];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for c in 0..n {
            tmp[c] = u[c] + h * k3[c];
        }
        f(t + h, &tmp, &mut k4);
        for c in 0..n {
            u[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    u
}

/// Homogeneous delayed flow `u' = -d u + b(u(t - tau))` from constant history.
fn delayed_flow(nl: &Nonlocal, u0: f64, span: f64) -> Vec<f64> {
    let lag = 50usize;
    let h = nl.delay / lag as f64;
    let steps = (span / h).round().max(1.0) as usize;
    let h = span / steps as f64;
    let mut hist = std::collections::VecDeque::from(vec![u0; lag + 1]);
    let mut u = u0;
    for _ in 0..steps {
        let delayed = hist[0];
        u += h * (-nl.death * u + nl.birth(delayed));
        hist.pop_front();
        hist.push_back(u);
    }
    vec![u]
}

// ---------------------------------------------------------------------------
// Equilibria and stability

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// The equilibrium, or for time-periodic kinetics the phase-zero point of
    /// the periodic orbit.
    pub state: Vec<f64>,
    pub stability: Stability,
    /// `s(Df(u*))`, or `ln rho(0) / omega` for periodic orbits.
    pub indicator: f64,
    /// Some component sits on a face of the order box.
    pub on_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub equilibria: Vec<Equilibrium>,
    pub unordered_certificate: bool,
    pub bistable: bool,
    /// Intermediate equilibria `E \ {0, beta}`.
    pub alpha_list: Vec<Vec<f64>>,
    /// The field vanishes identically on the box.
    pub degenerate: bool,
    pub failed_seeds: usize,
    pub reason: Option<String>,
}

impl EquilibriumReport {
    fn unlabelled(states: Vec<Vec<f64>>, k: &Kinetics, degenerate: bool, failed: usize) -> Self {
        let equilibria = states
            .into_iter()
            .map(|s| {
                let on_boundary = on_box_face(&s, k);
                Equilibrium {
                    state: s,
                    stability: Stability::Unclassified,
                    indicator: f64::NAN,
                    on_boundary,
                }
            })
            .collect();
        Self {
            equilibria,
            unordered_certificate: false,
            bistable: false,
            alpha_list: vec![],
            degenerate,
            failed_seeds: failed,
            reason: None,
        }
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.equilibria.iter().map(|e| e.state.clone()).collect()
    }
}

fn on_box_face(s: &[f64], k: &Kinetics) -> bool {
    let is_corner = |c: &[f64]| s.iter().zip(c).all(|(a, b)| (a - b).abs() < 1e-9);
    if is_corner(&k.bottom) || is_corner(&k.top) {
        return false;
    }
    s.iter()
        .enumerate()
        .any(|(c, v)| (v - k.bottom[c]).abs() < 1e-9 || (v - k.top[c]).abs() < 1e-9)
}

/// Residual whose zeros are the equilibria: `f(u)` for autonomous kinetics,
/// `P(u) - u` with the period map `P` otherwise.
fn residual(k: &Kinetics, u: &[f64]) -> Vec<f64> {
    match k.period() {
        None => k.field_vec(0.0, u),
        Some(w) => {
            let p = k.homogeneous_flow(0.0, u, w);
            p.iter().zip(u).map(|(a, b)| a - b).collect()
        }
    }
}

fn residual_with_jacobian(k: &Kinetics, u: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    match k.period() {
        None => (k.field_vec(0.0, u), k.jacobian(0.0, u)),
        Some(_) => {
            let (p, m) = k.period_map_with_jacobian(u);
            let n = u.len();
            let r = p.iter().zip(u).map(|(a, b)| a - b).collect();
            (r, m - DMatrix::identity(n, n))
        }
    }
}

fn newton(k: &Kinetics, seed: &[f64], max_iter: usize) -> Option<Vec<f64>> {
    let mut u = seed.to_vec();
    for _ in 0..max_iter {
        let (r, j) = residual_with_jacobian(k, &u);
        let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() {
            return None;
        }
        if norm <= EQUILIBRIUM_RESIDUAL {
            return Some(u);
        }
        let rhs = nalgebra::DVector::from_vec(r.iter().map(|v| -v).collect());
        let step = j.lu().solve(&rhs)?;
        for (c, s) in step.iter().enumerate() {
            u[c] += s;
        }
        if u.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return None;
        }
    }
    let r = residual(k, &u);
    (r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= EQUILIBRIUM_RESIDUAL * 10.0).then_some(u)
}

fn in_box(k: &Kinetics, u: &[f64]) -> bool {
    u.iter()
        .enumerate()
        .all(|(c, v)| *v >= k.bottom[c] - 1e-9 && *v <= k.top[c] + 1e-9)
}

/// Equilibria (or periodic orbits, through their period map) in the order box.
pub fn find_equilibria(k: &Kinetics, resolution: usize) -> Result<EquilibriumReport> {
    if resolution < 2 {
        return invalid("resolution must be at least 2");
    }
    if k.n_species() == 1 {
        return scalar_equilibria(k, resolution);
    }
    let n = k.n_species();
    let per_dim = match n {
        2 => resolution.min(24),
        3 => resolution.min(8),
        _ => resolution.min(4),
    };
    let total = per_dim.pow(n as u32);
    let seeds: Vec<Vec<f64>> = (0..total)
        .map(|idx| {
            let mut rem = idx;
            (0..n)
                .map(|c| {
                    let i = rem % per_dim;
                    rem /= per_dim;
                    k.bottom[c] + (i as f64 / (per_dim - 1) as f64) * (k.top[c] - k.bottom[c])
                })
                .collect()
        })
        .collect();
    let results: Vec<Option<Vec<f64>>> = seeds.par_iter().map(|s| newton(k, s, 60)).collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    let mut found: Vec<Vec<f64>> = results
        .into_iter()
        .flatten()
        .filter(|u| in_box(k, u))
        .collect();
    found.sort_by(|a, b| lex_cmp(a, b));
    let states = dedup(found);
    Ok(EquilibriumReport::unlabelled(states, k, false, failed))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn dedup(sorted: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for u in sorted {
        let dup = out.iter().any(|v| {
            v.iter()
                .zip(&u)
                .all(|(a, b)| (a - b).abs() <= EQUILIBRIUM_DEDUP)
        });
        if !dup {
            out.push(u);
        }
    }
    out
}

fn scalar_equilibria(k: &Kinetics, resolution: usize) -> Result<EquilibriumReport> {
    let (lo, hi) = (k.bottom[0], k.top[0]);
    let g = |u: f64| residual(k, &[u])[0];
    let xs: Vec<f64> = (0..resolution)
        .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
        .collect();
    let vals: Vec<f64> = xs.par_iter().map(|&u| g(u)).collect();
    if vals.iter().all(|v| v.abs() <= 1e-14) {
        let states = xs.into_iter().map(|u| vec![u]).collect();
        let mut rep = EquilibriumReport::unlabelled(states, k, true, 0);
        rep.reason = Some("field vanishes identically: every point is fixed".into());
        return Ok(rep);
    }
    let mut roots = Vec::new();
    let mut failed = 0;
    for i in 0..resolution {
        if vals[i] == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        if i + 1 < resolution && vals[i] * vals[i + 1] < 0.0 {
            match refine_root(&g, k, xs[i], xs[i + 1], vals[i]) {
                Some(r) => roots.push(r),
                None => failed += 1,
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    let states = dedup(roots.into_iter().map(|r| vec![r]).collect());
    Ok(EquilibriumReport::unlabelled(states, k, false, failed))
}

/// Bisection to a small bracket, then Newton polish.
fn refine_root(g: &impl Fn(f64) -> f64, k: &Kinetics, mut a: f64, mut b: f64, ga: f64) -> Option<f64> {
    let mut ga = ga;
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 {
            return Some(m);
        }
        if ga * gm < 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
        if b - a < 1e-10 {
            break;
        }
    }
    let mut u = 0.5 * (a + b);
    for _ in 0..20 {
        let (r, j) = residual_with_jacobian(k, &[u]);
        if r[0].abs() <= EQUILIBRIUM_RESIDUAL {
            return Some(u);
        }
        let d = j[(0, 0)];
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = u - r[0] / d;
        if !(next >= a - 1e-8 && next <= b + 1e-8) {
            break;
        }
        u = next;
    }
    (g(u).abs() <= 1e-10).then_some(u)
}

/// Largest real part of the eigenvalues of `j`.
pub fn stability_modulus(j: &DMatrix<f64>) -> Result<f64> {
    if j.iter().any(|v| !v.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    if !j.is_square() || j.nrows() == 0 {
        return invalid("matrix must be square and nonempty");
    }
    if j.nrows() == 1 {
        return Ok(j[(0, 0)]);
    }
    Ok(j.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// A periodic orbit of the homogeneous dynamics sampled at half RK4 steps,
/// i.e. `2 * steps + 1` states on `[0, period]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    pub period: f64,
    pub steps: usize,
    pub samples: Vec<Vec<f64>>,
}

impl PeriodicOrbit {
    pub fn constant(state: &[f64], period: f64, steps: usize) -> Self {
        Self {
            period,
            steps,
            samples: vec![state.to_vec(); 2 * steps + 1],
        }
    }

    /// Integrates the homogeneous dynamics from `u0` over one period.
    pub fn from_initial(k: &Kinetics, u0: &[f64], period: f64, steps: usize) -> Self {
        let h = period / (2 * steps) as f64;
        let mut samples = Vec::with_capacity(2 * steps + 1);
        let mut u = u0.to_vec();
        samples.push(u.clone());
        for s in 0..2 * steps {
            u = rk4(|t, x, o| k.field(t, x, o), s as f64 * h, &u, h, 1);
            samples.push(u.clone());
        }
        Self {
            period,
            steps,
            samples,
        }
    }
}

/// Principal Floquet multiplier of `v' = [mu^2 A + J(t)] v` over one period,
/// with `J(t)` supplied at half-step resolution.
pub fn floquet_multiplier_with(
    jac: impl Fn(usize) -> DMatrix<f64>,
    diffusion: &[f64],
    mu: f64,
    period: f64,
    steps: usize,
) -> Result<f64> {
    let n = diffusion.len();
    let h = period / steps as f64;
    let shift = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        diffusion.iter().map(|d| mu * mu * d),
    ));
    let mut m = DMatrix::<f64>::identity(n, n);
    let check = |j: &DMatrix<f64>, idx: usize| -> Result<()> {
        for a in 0..n {
            for b in 0..n {
                if a != b && j[(a, b)] < -1e-12 {
                    return Err(Error::Precondition(format!(
                        "Jacobian not cooperative at sample {idx}: entry ({a},{b}) = {}",
                        j[(a, b)]
                    )));
                }
            }
        }
        Ok(())
    };
    for s in 0..steps {
        let j0 = jac(2 * s) + &shift;
        let jh = jac(2 * s + 1) + &shift;
        let j1 = jac(2 * s + 2) + &shift;
        check(&j0, 2 * s)?;
        check(&jh, 2 * s + 1)?;
        let k1 = &j0 * &m;
        let k2 = &jh * (&m + &k1 * (0.5 * h));
        let k3 = &jh * (&m + &k2 * (0.5 * h));
        let k4 = &j1 * (&m + &k3 * h);
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if n == 1 {
        return Ok(m[(0, 0)]);
    }
    Ok(m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// `rho(mu)` for the linearization of `k` along `orbit`.
pub fn floquet_multiplier(k: &Kinetics, orbit: &PeriodicOrbit, mu: f64) -> Result<f64> {
    if !(orbit.period > 0.0) {
        return precondition("orbit period must be positive");
    }
    if orbit.samples.len() != 2 * orbit.steps + 1 {
        return invalid("orbit must be sampled at half steps");
    }
    let h = orbit.period / (2 * orbit.steps) as f64;
    floquet_multiplier_with(
        |i| k.jacobian(i as f64 * h, &orbit.samples[i]),
        &k.diffusion,
        mu,
        orbit.period,
        orbit.steps,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSide {
    Above,
    Below,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    ConfirmsStable,
    ConfirmsUnstable,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityProbe {
    pub equilibrium: Vec<f64>,
    /// Strongly positive direction, normalized to max-norm one.
    pub direction: Vec<f64>,
    /// Strictly decreasing radii.
    pub delta_grid: Vec<f64>,
    pub side: ProbeSide,
    pub verdicts: Vec<ProbeVerdict>,
}

impl StabilityProbe {
    pub fn new(equilibrium: Vec<f64>, direction: Vec<f64>, delta_grid: Vec<f64>, side: ProbeSide) -> Self {
        Self {
            equilibrium,
            direction,
            delta_grid,
            side,
            verdicts: vec![],
        }
    }

    /// Consensus over the three smallest radii.
    pub fn overall(&self) -> ProbeVerdict {
        let tail = &self.verdicts[self.verdicts.len().saturating_sub(3)..];
        match tail.first() {
            Some(v) if tail.iter().all(|w| w == v) => *v,
            _ => ProbeVerdict::Inconclusive,
        }
    }

    /// Largest radius below which every tested radius confirms stability.
    pub fn validated_radius(&self) -> Option<f64> {
        let mut radius = None;
        for (d, v) in self.delta_grid.iter().zip(&self.verdicts).rev() {
            if *v == ProbeVerdict::ConfirmsStable {
                radius = Some(*d);
            } else {
                break;
            }
        }
        radius
    }
}

/// Tests `Q[u* -+ delta e]` against `u* -+ delta e` for every radius.
pub fn probe_strong_stability(
    step_map: impl Fn(&[f64]) -> Vec<f64>,
    probe: &StabilityProbe,
    bottom: &[f64],
    top: &[f64],
) -> Result<StabilityProbe> {
    let n = probe.equilibrium.len();
    if probe.direction.len() != n {
        return invalid("probe direction dimension mismatch");
    }
    if probe.direction.iter().any(|e| !(*e > 0.0)) {
        return precondition("probe direction must be strongly positive");
    }
    if probe.delta_grid.is_empty() || probe.delta_grid.iter().any(|d| !(*d > 0.0)) {
        return precondition("probe radii must be positive");
    }
    if probe.delta_grid.windows(2).any(|w| w[1] >= w[0]) {
        return precondition("probe radii must be strictly decreasing");
    }
    let norm = probe.direction.iter().fold(0.0f64, |m, v| m.max(*v));
    let e: Vec<f64> = probe.direction.iter().map(|v| v / norm).collect();
    let scale = probe
        .equilibrium
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let margin = 1e-12 * scale;
    let sign = match probe.side {
        ProbeSide::Above => 1.0,
        ProbeSide::Below => -1.0,
    };
    let mut verdicts = Vec::with_capacity(probe.delta_grid.len());
    for &delta in &probe.delta_grid {
        let point: Vec<f64> = (0..n)
            .map(|c| probe.equilibrium[c] + sign * delta * e[c])
            .collect();
        if (0..n).any(|c| point[c] < bottom[c] - 1e-12 || point[c] > top[c] + 1e-12) {
            return Err(Error::Precondition(format!(
                "probe radius {delta} leaves the order box"
            )));
        }
        let image = step_map(&point);
        let below = (0..n).all(|c| image[c] < point[c] - margin);
        let above = (0..n).all(|c| image[c] > point[c] + margin);
        // Moving back toward the equilibrium means stable on this side.
        let v = match (probe.side, below, above) {
            (ProbeSide::Above, true, _) | (ProbeSide::Below, _, true) => ProbeVerdict::ConfirmsStable,
            (ProbeSide::Above, _, true) | (ProbeSide::Below, true, _) => {
                ProbeVerdict::ConfirmsUnstable
            }
            _ => ProbeVerdict::Inconclusive,
        };
        verdicts.push(v);
    }
    Ok(StabilityProbe {
        verdicts,
        ..probe.clone()
    })
}

/// Time map of the homogeneous dynamics: one period, or unit time.
pub fn homogeneous_step_map(k: &Kinetics) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    let span = k.period().unwrap_or(1.0);
    move |u: &[f64]| k.homogeneous_flow(0.0, u, span)
}

/// Stability indicator of one equilibrium (or periodic orbit through it).
pub fn stability_indicator(k: &Kinetics, state: &[f64]) -> Result<f64> {
    match k.period() {
        None => stability_modulus(&k.jacobian(0.0, state)),
        Some(w) => {
            let orbit = PeriodicOrbit::from_initial(k, state, w, STEPS_PER_PERIOD);
            let rho = floquet_multiplier(k, &orbit, 0.0)?;
            Ok(rho.ln() / w)
        }
    }
}

/// Labels every equilibrium and evaluates the bistability certificate.
pub fn classify_bistability(k: &Kinetics) -> Result<EquilibriumReport> {
    let report = find_equilibria(k, 200)?;
    if report.degenerate {
        let mut r = report;
        for e in &mut r.equilibria {
            e.stability = Stability::Marginal;
            e.indicator = 0.0;
        }
        r.reason = Some("degenerate: field vanishes identically".into());
        return Ok(r);
    }
    let labelled = report
        .equilibria
        .par_iter()
        .map(|e| {
            let ind = stability_indicator(k, &e.state)?;
            Ok(Equilibrium {
                indicator: ind,
                stability: label(ind),
                ..e.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(certify(
        EquilibriumReport {
            equilibria: labelled,
            ..report
        },
        &k.bottom,
        &k.top,
    ))
}

pub fn label(indicator: f64) -> Stability {
    if indicator.abs() < MARGINAL_THRESHOLD {
        Stability::Marginal
    } else if indicator < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// Bistability certificate over labelled equilibria: bottom and top present
/// and stable, every intermediate unstable, intermediates pairwise unordered.
pub fn certify(mut report: EquilibriumReport, bottom: &[f64], top: &[f64]) -> EquilibriumReport {
    report
        .equilibria
        .sort_by(|a, b| lex_cmp(&a.state, &b.state));
    let close = |s: &[f64], t: &[f64]| s.iter().zip(t).all(|(a, b)| (a - b).abs() < 1e-8);
    let bottom_eq = report.equilibria.iter().find(|e| close(&e.state, bottom));
    let top_eq = report.equilibria.iter().find(|e| close(&e.state, top));
    let intermediates: Vec<&Equilibrium> = report
        .equilibria
        .iter()
        .filter(|e| !close(&e.state, bottom) && !close(&e.state, top))
        .collect();
    report.alpha_list = intermediates.iter().map(|e| e.state.clone()).collect();

    let mut unordered = true;
    for (i, a) in intermediates.iter().enumerate() {
        for b in &intermediates[i + 1..] {
            let le = a.state.iter().zip(&b.state).all(|(x, y)| x <= y);
            let ge = a.state.iter().zip(&b.state).all(|(x, y)| x >= y);
            if le || ge {
                unordered = false;
            }
        }
    }
    report.unordered_certificate = unordered;

    let reason = if report
        .equilibria
        .iter()
        .any(|e| e.stability == Stability::Marginal)
    {
        Some("marginal equilibrium: inconclusive".to_string())
    } else if bottom_eq.is_none() {
        Some("0 not fixed".to_string())
    } else if top_eq.is_none() {
        Some("β not fixed".to_string())
    } else if bottom_eq.unwrap().stability != Stability::Stable {
        Some("0 is not stable".to_string())
    } else if top_eq.unwrap().stability != Stability::Stable {
        Some("β is not stable".to_string())
    } else if intermediates
        .iter()
        .any(|e| e.stability != Stability::Unstable)
    {
        Some("an intermediate equilibrium is not unstable".to_string())
    } else if !unordered {
        Some("intermediate equilibria are ordered".to_string())
    } else {
        None
    };
    report.bistable = reason.is_none();
    report.reason = reason;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_equilibria() {
        let k = Kinetics::cubic(0.25);
        let r = find_equilibria(&k, 200).unwrap();
        let s: Vec<f64> = r.equilibria.iter().map(|e| e.state[0]).collect();
        assert_eq!(s.len(), 3);
        for (got, want) in s.iter().zip([0.0, 0.25, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn odd_cubic_equilibria_on_shifted_box() {
        let k = Kinetics::reaction_diffusion(Reaction::CubicOdd, vec![1.0])
            .unwrap()
            .with_box(vec![-1.0], vec![1.0])
            .unwrap();
        let r = find_equilibria(&k, 201).unwrap();
        let s: Vec<f64> = r.equilibria.iter().map(|e| e.state[0]).collect();
        assert_eq!(s.len(), 3, "{s:?}");
        for (got, want) in s.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_field_is_degenerate() {
        let k = Kinetics::reaction_diffusion(Reaction::Polynomial { coeffs: vec![] }, vec![1.0]).unwrap();
        let r = find_equilibria(&k, 11).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.equilibria.len(), 11);
        let c = classify_bistability(&k).unwrap();
        assert!(!c.bistable);
        assert!(c.equilibria.iter().all(|e| e.stability == Stability::Marginal));
    }

    #[test]
    fn stability_modulus_examples() {
        let a = 0.25;
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        assert!((stability_modulus(&m(cubic_prime(0.0, a))).unwrap() + 0.25).abs() < 1e-15);
        assert!((stability_modulus(&m(cubic_prime(a, a))).unwrap() - 0.1875).abs() < 1e-15);
        let j = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        assert!(stability_modulus(&j).unwrap().abs() < 1e-12);
        assert!(stability_modulus(&m(f64::NAN)).is_err());
    }

    #[test]
    fn floquet_scalar_closed_form() {
        let pbar = 0.1875;
        let k = Kinetics::reaction_diffusion(
            Reaction::LinearPeriodic { mean: pbar, amp: 1.0, period: 1.0 },
            vec![1.0],
        )
        .unwrap();
        let orbit = PeriodicOrbit::constant(&[0.0], 1.0, 1000);
        for mu in [0.0, 0.5, 1.3] {
            let rho = floquet_multiplier(&k, &orbit, mu).unwrap();
            let want = (mu * mu + pbar).exp();
            assert!((rho - want).abs() < 1e-10 * want, "{rho} vs {want}");
        }
    }

    #[test]
    fn floquet_decoupled_pair() {
        // Diagonal system: rho = exp(omega (mu^2 d_i + p_i)) maximized over i.
        let (d, p) = ([1.0, 2.0], [0.3, -0.1]);
        let omega = 2.0;
        for mu in [0.0, 0.4, 1.0] {
            let rho = floquet_multiplier_with(
                |_| DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&p)),
                &d,
                mu,
                omega,
                400,
            )
            .unwrap();
            let want = (0..2)
                .map(|i| (omega * (mu * mu * d[i] + p[i])).exp())
                .fold(0.0, f64::max);
            assert!((rho - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn floquet_rejects_non_cooperative() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let r = floquet_multiplier_with(|_| j.clone(), &[1.0, 1.0], 0.0, 1.0, 10);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn probes_on_cubic() {
        let k = Kinetics::cubic(0.25);
        let q = homogeneous_step_map(&k);
        let p = StabilityProbe::new(vec![0.0], vec![1.0], vec![0.1, 0.05, 0.01], ProbeSide::Above);
        let r = probe_strong_stability(&q, &p, &k.bottom, &k.top).unwrap();
        assert_eq!(r.overall(), ProbeVerdict::ConfirmsStable);
        assert_eq!(r.validated_radius(), Some(0.1));
        let p = StabilityProbe::new(vec![0.25], vec![1.0], vec![0.1, 0.05, 0.01], ProbeSide::Above);
        let r = probe_strong_stability(&q, &p, &k.bottom, &k.top).unwrap();
        assert_eq!(r.overall(), ProbeVerdict::ConfirmsUnstable);
        let p = StabilityProbe::new(vec![0.0], vec![1.0], vec![0.1, 0.0], ProbeSide::Above);
        assert!(probe_strong_stability(&q, &p, &k.bottom, &k.top).is_err());
        let p = StabilityProbe::new(vec![0.0], vec![1.0], vec![0.1], ProbeSide::Below);
        assert!(probe_strong_stability(&q, &p, &k.bottom, &k.top).is_err());
    }

    #[test]
    fn cubic_is_bistable() {
        let r = classify_bistability(&Kinetics::cubic(0.25)).unwrap();
        assert!(r.bistable, "{:?}", r.reason);
        assert_eq!(r.alpha_list, vec![vec![0.25]]);
        let labels: Vec<Stability> = r.equilibria.iter().map(|e| e.stability).collect();
        assert_eq!(labels, [Stability::Stable, Stability::Unstable, Stability::Stable]);
    }

    #[test]
    fn decaying_field_is_not_bistable() {
        let k = Kinetics::reaction_diffusion(Reaction::Polynomial { coeffs: vec![0.0, -1.0] }, vec![1.0])
            .unwrap();
        let r = classify_bistability(&k).unwrap();
        assert!(!r.bistable);
        assert_eq!(r.reason.as_deref(), Some("β not fixed"));
    }

    #[test]
    fn ordered_intermediates_break_certificate() {
        let mk = |s: [f64; 2], st| Equilibrium {
            state: s.to_vec(),
            stability: st,
            indicator: if st == Stability::Stable { -1.0 } else { 1.0 },
            on_boundary: false,
        };
        let rep = EquilibriumReport {
            equilibria: vec![
                mk([0.0, 0.0], Stability::Stable),
                mk([0.2, 0.2], Stability::Unstable),
                mk([0.4, 0.5], Stability::Unstable),
                mk([1.0, 1.0], Stability::Stable),
            ],
            unordered_certificate: false,
            bistable: false,
            alpha_list: vec![],
            degenerate: false,
            failed_seeds: 0,
            reason: None,
        };
        let c = certify(rep, &[0.0, 0.0], &[1.0, 1.0]);
        assert!(!c.unordered_certificate);
        assert!(!c.bistable);
    }

    #[test]
    fn periodic_cubic_orbits() {
        let k = Kinetics::reaction_diffusion(
            Reaction::PeriodicCubic { a0: 0.25, amp: 0.1, period: 1.0 },
            vec![1.0],
        )
        .unwrap();
        let r = classify_bistability(&k).unwrap();
        assert!(r.bistable, "{r:?}");
        assert_eq!(r.equilibria.len(), 3);
        // ln rho(0) at u = 0 is the mean of f'(0) = -a(t), i.e. -0.25.
        assert!((r.equilibria[0].indicator + 0.25).abs() < 1e-8);
    }

    #[test]
    fn irreducibility_graph() {
        let j = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.5, -1.0]);
        assert!(is_irreducible(&j));
        let j = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -1.0]);
        assert!(!is_irreducible(&j));
    }

    #[test]
    fn coupled_cubic_audit() {
        let k = Kinetics::reaction_diffusion(
            Reaction::CoupledCubic { a: vec![0.25, 0.3], coupling: 0.5 },
            vec![1.0, 0.5],
        )
        .unwrap();
        let audit = k.audit_cooperativity(50, 7);
        assert!(audit.cooperative && audit.irreducible);
    }

    #[test]
    fn kernel_masses() {
        for k in [
            Kernel::Gaussian { sigma: 0.2 },
            Kernel::Laplace { lambda: 3.0 },
            Kernel::TopHat { w: 0.5 },
        ] {
            assert!((k.mass() - 1.0).abs() < 1e-8, "{k:?} {}", k.mass());
        }
    }
}
