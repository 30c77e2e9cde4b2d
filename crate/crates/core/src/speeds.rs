//! Spreading speeds: direct level-set tracking, linearized lower bounds and
//! the counter-propagation check.
//!
//! Sign convention: a `Leftward` speed is positive when the upper state
//! invades to the left (the front position decreases); a `Rightward` speed is
//! positive when the lower state invades to the right. With this convention
//! the counter-propagation sum is the plain sum of the two values.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, precondition, Error, Result};
use crate::kinetics::{floquet_multiplier, Family, Kinetics, PeriodicOrbit};
use crate::profiles::{heaviside_profile, Grid, LevelBox, Profile};
use crate::semiflow::{Observer, Semiflow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMethod {
    DirectLevelSet,
    LinearizedFloquet,
    LinearizedElliptic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Leftward,
    Rightward,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpeedDiagnostics {
    /// RMS deviation of the tracked positions from the fitted line.
    pub fit_residual: f64,
    pub horizon: f64,
    pub window: (f64, f64),
    /// `(t, front position)` samples.
    pub samples: Vec<(f64, f64)>,
    /// Speeds over the first and second half of the window; a persistent
    /// increase hints at an accelerating front.
    pub half_window_speeds: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub value: f64,
    pub method: SpeedMethod,
    pub direction: Direction,
    pub mu_star: Option<f64>,
    pub diagnostics: SpeedDiagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Minus,
    Plus,
}

/// Largest `theta` in `[0, 1]` keeping `theta * gap` inside `delta * e`
/// componentwise (`gap >= 0`).
fn theta_bound(gap: &[f64], delta: f64, e: &[f64]) -> f64 {
    gap.iter()
        .zip(e)
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, ec)| delta * ec / g)
        .fold(1.0, f64::min)
}

/// Connecting datum above (`Minus`) or below (`Plus`) an intermediate
/// equilibrium `alpha`.
///
/// `Minus`: `alpha` for `x <= -1`, `v = theta alpha + (1 - theta) beta` for
/// `x >= 0`, `theta` the largest value keeping `v` in `[beta - delta e, beta]`.
/// `Plus`: `v = theta alpha` (relative to the bottom state) for `x <= 0`,
/// `alpha` for `x >= 1`, `theta` the largest value keeping `v` in
/// `[0, delta e]`.
pub fn build_phi_alpha(
    k: &Kinetics,
    grid: &Grid,
    alpha: &[f64],
    side: Side,
    delta: f64,
    e: &[f64],
) -> Result<Profile> {
    let (theta, v) = phi_alpha_state(k, alpha, side, delta, e)?;
    if theta <= 0.0 {
        return precondition("radius excludes the whole segment (theta = 0)");
    }
    match side {
        Side::Minus => heaviside_profile(grid, alpha, &v, 0.0, 1.0),
        Side::Plus => heaviside_profile(grid, &v, alpha, 1.0, 1.0),
    }
}

/// `(theta, v_alpha)` for one side.
pub fn phi_alpha_state(
    k: &Kinetics,
    alpha: &[f64],
    side: Side,
    delta: f64,
    e: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = alpha.len();
    if e.len() != n || k.top.len() != n {
        return invalid("alpha, direction and box dimensions differ");
    }
    if !(delta > 0.0) {
        return precondition(format!("radius must be positive, got {delta}"));
    }
    if e.iter().any(|v| !(*v > 0.0)) {
        return precondition("direction must be strongly positive");
    }
    let (bottom, top) = (&k.bottom, &k.top);
    if (0..n).any(|c| alpha[c] < bottom[c] || alpha[c] > top[c]) {
        return precondition("alpha lies outside the order box");
    }
    match side {
        Side::Minus => {
            if (0..n).any(|c| top[c] - delta * e[c] < bottom[c]) {
                return precondition("radius so large the upper box leaves the order box");
            }
            let gap: Vec<f64> = (0..n).map(|c| top[c] - alpha[c]).collect();
            let theta = theta_bound(&gap, delta, e);
            let v = (0..n).map(|c| theta * alpha[c] + (1.0 - theta) * top[c]).collect();
            Ok((theta, v))
        }
        Side::Plus => {
            if (0..n).any(|c| bottom[c] + delta * e[c] > top[c]) {
                return precondition("radius so large the lower box leaves the order box");
            }
            let gap: Vec<f64> = (0..n).map(|c| alpha[c] - bottom[c]).collect();
            let theta = theta_bound(&gap, delta, e);
            let v = (0..n).map(|c| bottom[c] + theta * gap[c]).collect();
            Ok((theta, v))
        }
    }
}

/// Least-squares line through `(t, x)`: `(slope, intercept, rms residual)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let stx: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let slope = stx / stt;
    let intercept = mx - slope * mt;
    let rms = (points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some((slope, intercept, rms))
}

/// Options for [`spreading_speed_direct`].
#[derive(Clone, Debug)]
pub struct DirectOptions {
    pub horizon: f64,
    /// Fit window; defaults to the last 40% of the horizon.
    pub window: Option<(f64, f64)>,
    /// Time between recorded front positions.
    pub sample_every: f64,
}

impl DirectOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            window: None,
            sample_every: 0.1,
        }
    }
}

/// Tracks the level-set position of an evolving monotone profile and fits a
/// line over the window.
pub fn spreading_speed_direct(
    s: &Semiflow,
    initial: &Profile,
    level: &LevelBox,
    direction: Direction,
    opts: &DirectOptions,
) -> Result<SpeedEstimate> {
    let horizon = opts.horizon;
    let window = opts.window.unwrap_or((0.6 * horizon, horizon));
    if !(window.0 >= 0.0 && window.0 < window.1 && window.1 <= horizon + 1e-12) {
        return invalid(format!("fit window {window:?} not inside (0, {horizon}]"));
    }
    let every = ((opts.sample_every / s.dt()).round() as usize).max(1);
    let observers = [Observer::FrontPosition {
        level: level.clone(),
        every,
    }];
    let samples = track_front(s, initial, horizon, &observers)?;
    speed_from_samples(samples, window, horizon, direction)
}

fn track_front(
    s: &Semiflow,
    initial: &Profile,
    horizon: f64,
    observers: &[Observer],
) -> Result<Vec<(f64, f64)>> {
    let (_, obs) = s.evolve(initial, 0.0, horizon, observers)?;
    let g = s.grid();
    let edge = 10.0 * g.dx() + 2.0;
    let start = obs.fronts.first().map(|f| f.1).unwrap_or(f64::NAN);
    for &(t, x) in &obs.fronts {
        let near = x <= g.x_min() + edge || x >= g.x_max() - edge;
        if near || !x.is_finite() {
            let travel = if start.is_finite() && x.is_finite() {
                (x - start).abs() * horizon / t.max(s.dt())
            } else {
                g.x_max() - g.x_min()
            };
            return Err(Error::DomainTooSmall {
                suggested_min: g.x_min() - 2.0 * travel - edge,
                suggested_max: g.x_max() + 2.0 * travel + edge,
            });
        }
    }
    Ok(obs.fronts)
}

fn speed_from_samples(
    samples: Vec<(f64, f64)>,
    window: (f64, f64),
    horizon: f64,
    direction: Direction,
) -> Result<SpeedEstimate> {
    let in_window: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 - 1e-12 && *t <= window.1 + 1e-12)
        .collect();
    let (slope, _, rms) = linear_fit(&in_window)
        .ok_or_else(|| Error::Convergence("too few front samples in the fit window".into()))?;
    let mid = 0.5 * (window.0 + window.1);
    let halves: Vec<f64> = [(window.0, mid), (mid, window.1)]
        .iter()
        .map(|(a, b)| {
            let pts: Vec<_> = in_window
                .iter()
                .copied()
                .filter(|(t, _)| t >= a && t <= b)
                .collect();
            linear_fit(&pts).map_or(f64::NAN, |f| f.0)
        })
        .collect();
    let sign = match direction {
        Direction::Leftward => -1.0,
        Direction::Rightward => 1.0,
    };
    Ok(SpeedEstimate {
        value: sign * slope,
        method: SpeedMethod::DirectLevelSet,
        direction,
        mu_star: None,
        diagnostics: SpeedDiagnostics {
            fit_residual: rms,
            horizon,
            window,
            samples,
            half_window_speeds: (sign * halves[0], sign * halves[1]),
        },
    })
}

/// Default `mu` grid: geometric from 0.05 to 8 with 40 points.
pub fn default_mu_grid() -> Vec<f64> {
    geometric_grid(0.05, 8.0, 40)
}

pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Minimizes `phi` over `mu > 0`: grid scan (extending the grid up to four
/// times when the minimum sits at an end), then golden-section refinement.
pub fn minimize_over_mu(
    phi: impl Fn(f64) -> Result<f64> + Sync,
    mu_grid: &[f64],
    tol: f64,
) -> Result<(f64, f64)> {
    if mu_grid.len() < 3 || mu_grid.iter().any(|m| !(*m > 0.0)) {
        return invalid("mu grid needs at least three positive points");
    }
    let mut grid = mu_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    for _ in 0..=4 {
        let vals = grid
            .par_iter()
            .map(|&m| phi(m))
            .collect::<Result<Vec<f64>>>()?;
        let i = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty grid");
        if i == grid.len() - 1 {
            let hi = grid[grid.len() - 1];
            grid = geometric_grid(grid[grid.len() / 2], hi * 8.0, grid.len());
            continue;
        }
        if i == 0 {
            let lo = grid[0];
            grid = geometric_grid(lo / 8.0, grid[grid.len() / 2], grid.len());
            continue;
        }
        return golden_section(&phi, grid[i - 1], grid[i + 1], tol);
    }
    Err(Error::Convergence(
        "no interior minimum of the speed function after extending the mu grid".into(),
    ))
}

fn golden_section(phi: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = phi(c)?;
    let mut fd = phi(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = phi(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = phi(d)?;
        }
    }
    let m = 0.5 * (a + b);
    Ok((phi(m)?, m))
}

/// `Phi(mu) / omega = ln rho(mu) / (mu omega)`: speed per unit time.
pub fn floquet_speed_function(k: &Kinetics, orbit: &PeriodicOrbit, mu: f64) -> Result<f64> {
    let rho = floquet_multiplier(k, orbit, mu)?;
    Ok(rho.ln() / (mu * orbit.period))
}

/// `inf_mu ln rho(mu) / (mu omega)` along an unstable periodic orbit.
pub fn linearized_speed_floquet(
    k: &Kinetics,
    orbit: &PeriodicOrbit,
    mu_grid: &[f64],
    refine_tol: f64,
    direction: Direction,
) -> Result<SpeedEstimate> {
    let rho0 = floquet_multiplier(k, orbit, 0.0)?;
    if !(rho0.ln() > 0.0) {
        return precondition(format!(
            "orbit is not unstable: ln rho(0) = {}",
            rho0.ln()
        ));
    }
    let (value, mu) = minimize_over_mu(|m| floquet_speed_function(k, orbit, m), mu_grid, refine_tol)?;
    Ok(SpeedEstimate {
        value,
        method: SpeedMethod::LinearizedFloquet,
        direction,
        mu_star: Some(mu),
        diagnostics: SpeedDiagnostics::default(),
    })
}

/// Principal eigenvalue of `B v'' + [mu^2 A + mu E(y) + Df(alpha(y))] v` on
/// the cross-section with Neumann data. `alpha` holds either one state per
/// species (constant in `y`) or the full species-major cross-section state.
/// Negative `mu` gives `lambda^-(|mu|)`.
pub fn cylinder_eigenvalue(k: &Kinetics, alpha: &[f64], mu: f64) -> Result<f64> {
    let Some(cs) = (k.family == Family::Cylinder).then_some(()).and(k.cross_section.as_ref()) else {
        return precondition("cylinder kinetics required");
    };
    let ns = k.n_species();
    let nc = cs.n_cross;
    let dim = ns * nc;
    let alpha_at = |j: usize| -> Vec<f64> {
        if alpha.len() == ns {
            alpha.to_vec()
        } else {
            (0..ns).map(|s| alpha[s * nc + j]).collect()
        }
    };
    if alpha.len() != ns && alpha.len() != dim {
        return invalid("alpha must have one entry per species or per cross-section state");
    }
    let dy2 = cs.dy() * cs.dy();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..nc {
        let jac = k.jacobian(0.0, &alpha_at(j));
        let y = cs.y(j);
        for s in 0..ns {
            let row = s * nc + j;
            m[(row, row)] += mu * mu * k.diffusion[s] + mu * cs.advection[s].eval(y, cs.length);
            for r in 0..ns {
                m[(row, r * nc + j)] += jac[(s, r)];
            }
            if nc > 1 {
                let b = cs.diffusion[s] / dy2;
                if j > 0 {
                    m[(row, row - 1)] += b;
                    m[(row, row)] -= b;
                }
                if j + 1 < nc {
                    m[(row, row + 1)] += b;
                    m[(row, row)] -= b;
                }
            }
        }
    }
    principal_eigenvalue(&m).map(|(l, _)| l)
}

/// Principal eigenpair of a cooperative (Metzler) matrix by inverse power
/// iteration on `(sigma I - M)^{-1}`, with `sigma` above the Gershgorin
/// bound so that the inverse is entrywise nonnegative.
pub fn principal_eigenvalue(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if n == 0 || !m.is_square() {
        return invalid("matrix must be square and nonempty");
    }
    let gersh = (0..n)
        .map(|i| m[(i, i)] + (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let sigma = gersh + 1.0;
    let shifted = DMatrix::<f64>::identity(n, n) * sigma - m;
    let lu = shifted.lu();
    let mut x = DVector::<f64>::from_element(n, 1.0);
    let mut prev = f64::NAN;
    for _ in 0..20_000 {
        let y = lu
            .solve(&x)
            .ok_or_else(|| Error::Convergence("singular shifted operator".into()))?;
        let norm = y.amax();
        let lambda = sigma - 1.0 / norm;
        x = y / norm;
        if (lambda - prev).abs() <= 1e-15 * lambda.abs().max(1.0) {
            let residual = (m * &x - &x * lambda).amax();
            if residual > 1e-8 {
                return Err(Error::Convergence(format!(
                    "power iteration stagnated with eigen-residual {residual:e}"
                )));
            }
            return Ok((lambda, x));
        }
        prev = lambda;
    }
    Err(Error::Convergence(
        "power iteration did not converge (spectral gap below resolution)".into(),
    ))
}

/// `lambda^+(mu)` for `sign = +1`, `lambda^-(mu) = lambda^+(-mu)` for `-1`.
pub fn linearized_speed_elliptic(k: &Kinetics, alpha: &[f64], mu: f64, sign: f64) -> Result<f64> {
    cylinder_eigenvalue(k, alpha, sign.signum() * mu)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticCertificate {
    pub mu1: f64,
    pub mu2: f64,
    /// `inf lambda^+(mu) / mu`
    pub leftward_bound: f64,
    /// `inf lambda^-(mu) / mu`
    pub rightward_bound: f64,
    pub lambda0: f64,
    /// `(mu1 + mu2) / (mu1 mu2) * lambda0`
    pub combination: f64,
    pub holds: bool,
}

/// Evaluates the convexity chain bounding the counter-propagation sum from
/// below by `(mu1 + mu2) / (mu1 mu2) * lambda0`.
pub fn cylinder_counter_propagation(
    k: &Kinetics,
    alpha: &[f64],
    mu_grid: &[f64],
    tol: f64,
) -> Result<EllipticCertificate> {
    let lambda0 = cylinder_eigenvalue(k, alpha, 0.0)?;
    if !(lambda0 > 0.0) {
        return precondition(format!("alpha is not linearly unstable: lambda0 = {lambda0}"));
    }
    let (left, mu1) = minimize_over_mu(|m| Ok(cylinder_eigenvalue(k, alpha, m)? / m), mu_grid, tol)?;
    let (right, mu2) = minimize_over_mu(|m| Ok(cylinder_eigenvalue(k, alpha, -m)? / m), mu_grid, tol)?;
    let combination = (mu1 + mu2) / (mu1 * mu2) * lambda0;
    Ok(EllipticCertificate {
        mu1,
        mu2,
        leftward_bound: left,
        rightward_bound: right,
        lambda0,
        combination,
        holds: combination > 0.0 && left + right >= combination - 1e-9,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterPropagation {
    pub sum: f64,
    pub verdict: bool,
    pub linearized_sum: Option<f64>,
    pub linearized_verdict: Option<bool>,
}

/// `c_-(alpha, beta) + c_+(0, alpha) > margin`, for the direct pair and,
/// when supplied, the linearized pair.
pub fn counter_propagation_check(
    leftward: Option<&SpeedEstimate>,
    rightward: Option<&SpeedEstimate>,
    linearized: Option<(&SpeedEstimate, &SpeedEstimate)>,
    margin: f64,
) -> Result<CounterPropagation> {
    let (Some(l), Some(r)) = (leftward, rightward) else {
        return invalid("both the leftward and the rightward estimate are required");
    };
    if l.direction != Direction::Leftward || r.direction != Direction::Rightward {
        return invalid("estimates must be (leftward, rightward)");
    }
    let sum = l.value + r.value;
    let lin = linearized.map(|(a, b)| a.value + b.value);
    Ok(CounterPropagation {
        sum,
        verdict: sum > margin,
        linearized_sum: lin,
        linearized_verdict: lin.map(|s| s > margin),
    })
}

/// Parameters for [`monostable_speeds`].
#[derive(Clone, Debug)]
pub struct MonostableOptions {
    pub domain: (f64, f64),
    pub dx: f64,
    pub horizon: f64,
    /// Radii for the upper and lower boxes.
    pub delta_top: f64,
    pub delta_bottom: f64,
}

impl Default for MonostableOptions {
    fn default() -> Self {
        Self {
            domain: (-200.0, 200.0),
            dx: 0.1,
            horizon: 100.0,
            delta_top: 0.1,
            delta_bottom: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonostableSpeeds {
    pub leftward: SpeedEstimate,
    pub rightward: SpeedEstimate,
    pub linearized: Option<(SpeedEstimate, SpeedEstimate)>,
    pub check: CounterPropagation,
}

/// Direct speeds of the two monostable restrictions around a scalar
/// intermediate equilibrium `alpha`: `[alpha, beta]` (upper state invades
/// leftward) and `[0, alpha]` (lower state invades rightward), plus the
/// linearized bounds at `alpha` for autonomous kinetics.
pub fn monostable_speeds(k: &Kinetics, alpha: &[f64], opts: &MonostableOptions) -> Result<MonostableSpeeds> {
    if k.n_species() != 1 || k.family != Family::PeriodicRdSystem {
        return precondition("direct monostable speeds are implemented for scalar reaction-diffusion");
    }
    let grid = Grid::with_spacing(opts.domain.0, opts.domain.1, opts.dx)?;
    let (bottom, top) = (k.bottom[0], k.top[0]);
    let upper_k = k.clone().with_box(alpha.to_vec(), k.top.clone())?;
    let lower_k = k.clone().with_box(k.bottom.clone(), alpha.to_vec())?;
    let one = [1.0];
    let run = |kk: Kinetics, side: Side, delta: f64, direction| -> Result<SpeedEstimate> {
        let s = Semiflow::auto(kk.clone(), grid.clone(), crate::semiflow::Scheme::ExplicitEuler)?;
        let init = build_phi_alpha(&kk, &grid, alpha, side, delta, &one)?;
        let mid = 0.5 * (kk.bottom[0] + kk.top[0]);
        spreading_speed_direct(
            &s,
            &init,
            &LevelBox::lower_scalar(mid),
            direction,
            &DirectOptions::new(opts.horizon),
        )
    };
    let (leftward, rightward) = rayon::join(
        || run(upper_k, Side::Minus, opts.delta_top.min(top - alpha[0]), Direction::Leftward),
        || run(lower_k, Side::Plus, opts.delta_bottom.min(alpha[0] - bottom), Direction::Rightward),
    );
    let (leftward, rightward) = (leftward?, rightward?);
    let linearized = if k.period().is_none() {
        let orbit = PeriodicOrbit::constant(alpha, 1.0, 200);
        let grid_mu = default_mu_grid();
        let l = linearized_speed_floquet(k, &orbit, &grid_mu, 1e-7, Direction::Leftward)?;
        let r = linearized_speed_floquet(k, &orbit, &grid_mu, 1e-7, Direction::Rightward)?;
        Some((l, r))
    } else {
        None
    };
    let check = counter_propagation_check(
        Some(&leftward),
        Some(&rightward),
        linearized.as_ref().map(|(a, b)| (a, b)),
        0.0,
    )?;
    Ok(MonostableSpeeds {
        leftward,
        rightward,
        linearized,
        check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{Advection, CrossSection, Reaction};

    #[test]
    fn phi_alpha_scalar() {
        let k = Kinetics::cubic(0.25);
        let (t, v) = phi_alpha_state(&k, &[0.25], Side::Minus, 0.15, &[1.0]).unwrap();
        assert!((t - 0.2).abs() < 1e-15 && (v[0] - 0.85).abs() < 1e-15);
        let (t, v) = phi_alpha_state(&k, &[0.25], Side::Plus, 0.1, &[1.0]).unwrap();
        assert!((t - 0.4).abs() < 1e-15 && (v[0] - 0.1).abs() < 1e-15);
        assert!(phi_alpha_state(&k, &[0.25], Side::Plus, 2.0, &[1.0]).is_err());
    }

    #[test]
    fn phi_alpha_vector_matches_scan() {
        let k = Kinetics::reaction_diffusion(
            Reaction::CoupledCubic { a: vec![0.25, 0.3], coupling: 0.1 },
            vec![1.0, 1.0],
        )
        .unwrap();
        let alpha = [0.3, 0.2];
        let e = [1.0, 0.4];
        let delta = 0.1;
        let (theta, _) = phi_alpha_state(&k, &alpha, Side::Plus, delta, &e).unwrap();
        let scan = (0..=1_000_000)
            .map(|i| i as f64 * 1e-6)
            .filter(|th| (0..2).all(|c| th * alpha[c] <= delta * e[c]))
            .fold(0.0, f64::max);
        assert!((theta - scan).abs() <= 1e-6);
    }

    #[test]
    fn fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let (s, b, r) = linear_fit(&pts).unwrap();
        assert!((s + 0.5).abs() < 1e-12 && (b - 3.0).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn floquet_speed_closed_form() {
        let pbar = 0.1875;
        let k = Kinetics::reaction_diffusion(
            Reaction::LinearPeriodic { mean: pbar, amp: 1.0, period: 1.0 },
            vec![1.0],
        )
        .unwrap();
        let orbit = PeriodicOrbit::constant(&[0.0], 1.0, 400);
        let est = linearized_speed_floquet(&k, &orbit, &default_mu_grid(), 1e-8, Direction::Leftward).unwrap();
        assert!((est.value - 2.0 * pbar.sqrt()).abs() < 1e-6);
        assert!((est.mu_star.unwrap() - pbar.sqrt()).abs() < 1e-4);
        let neg = Kinetics::reaction_diffusion(
            Reaction::LinearPeriodic { mean: -0.1, amp: 1.0, period: 1.0 },
            vec![1.0],
        )
        .unwrap();
        assert!(linearized_speed_floquet(&neg, &orbit, &default_mu_grid(), 1e-8, Direction::Leftward).is_err());
    }

    fn cylinder(n_cross: usize) -> Kinetics {
        Kinetics::cylinder(
            Reaction::Cubic { a: 0.25 },
            vec![1.0],
            CrossSection {
                length: 1.0,
                n_cross,
                diffusion: vec![1.0],
                advection: vec![Advection::Constant { e: 0.0 }],
            },
        )
        .unwrap()
    }

    #[test]
    fn cylinder_constant_reduction() {
        let k = cylinder(128);
        let l = cylinder_eigenvalue(&k, &[0.25], 0.5).unwrap();
        assert!((l - 0.4375).abs() < 1e-6, "{l}");
        let l0 = cylinder_eigenvalue(&k, &[0.25], 0.0).unwrap();
        assert!((l0 - 0.1875).abs() < 1e-6);
    }

    #[test]
    fn principal_eigenvalue_of_symmetric_pair() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let (l, v) = principal_eigenvalue(&m).unwrap();
        assert!(l.abs() < 1e-12);
        assert!((v[0] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn counter_propagation_arithmetic() {
        let mk = |v, d| SpeedEstimate {
            value: v,
            method: SpeedMethod::DirectLevelSet,
            direction: d,
            mu_star: None,
            diagnostics: SpeedDiagnostics::default(),
        };
        let l = mk(-1.0, Direction::Leftward);
        let r = mk(0.5, Direction::Rightward);
        let c = counter_propagation_check(Some(&l), Some(&r), None, 0.0).unwrap();
        assert!(!c.verdict && (c.sum + 0.5).abs() < 1e-15);
        assert!(counter_propagation_check(Some(&l), None, None, 0.0).is_err());
    }
}
