//! Periodic habitats: media, principal periodic eigenvalues, periodic steady
//! states and pulsating waves.

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{invalid, precondition, Error, Result};
use crate::kinetics::{Family, Kinetics, Stability, MARGINAL_THRESHOLD};
use crate::profiles::{heaviside_profile, level_crossing, Grid, LevelBox, Profile};
use crate::semiflow::{thomas, Observer, Semiflow};
use crate::speeds::linear_fit;

const TWO_PI: f64 = std::f64::consts::TAU;
/// Multiple-shooting segments per cell.
const SEGMENTS: usize = 8;

/// Shape of an `r`-periodic diffusivity `d(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum MediumShape {
    Constant { d: f64 },
    /// `mean + eps cos(2 pi x / r)`
    Cosine { mean: f64, eps: f64 },
    /// Smoothed two-level step (low band of width `2 l` around the origin),
    /// reflected into a 4-periodic medium.
    FuscoHale { l: f64, smooth: f64, floor: f64 },
    /// Samples of `d` on `[0, r)` at uniform spacing, interpolated linearly.
    Tabulated { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicMedium {
    pub shape: MediumShape,
    /// Period `r`.
    pub period: f64,
    pub samples_per_cell: usize,
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

fn smoothstep_prime(s: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    30.0 * s * s * (s - 1.0) * (s - 1.0)
}

impl PeriodicMedium {
    pub fn constant(d: f64, period: f64) -> Self {
        Self {
            shape: MediumShape::Constant { d },
            period,
            samples_per_cell: 256,
        }
    }

    pub fn cosine(mean: f64, eps: f64, period: f64) -> Self {
        Self {
            shape: MediumShape::Cosine { mean, eps },
            period,
            samples_per_cell: 256,
        }
    }

    pub fn with_samples(mut self, samples_per_cell: usize) -> Self {
        self.samples_per_cell = samples_per_cell;
        self
    }

    pub fn constant_value(&self) -> Option<f64> {
        match &self.shape {
            MediumShape::Constant { d } => Some(*d),
            MediumShape::Cosine { mean, eps } if *eps == 0.0 => Some(*mean),
            _ => None,
        }
    }

    /// Even profile `c` on `[-1, 1]` of the doubled-cell construction.
    fn fusco_hale_c(l: f64, w: f64, floor: f64, x: f64) -> (f64, f64) {
        let s = (x.abs() - (l - 0.5 * w)) / w;
        let v = floor + (1.0 - floor) * smoothstep(s);
        let dv = (1.0 - floor) * smoothstep_prime(s) / w * x.signum();
        (v, dv)
    }

    /// `(d(x), d'(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let r = self.period;
        match &self.shape {
            MediumShape::Constant { d } => (*d, 0.0),
            MediumShape::Cosine { mean, eps } => {
                let k = TWO_PI / r;
                (mean + eps * (k * x).cos(), -eps * k * (k * x).sin())
            }
            MediumShape::FuscoHale { l, smooth, floor } => {
                // d(x) = c(x) on [-1, 1], c(2 - x) on (1, 3); c is even, so
                // the reflected medium repeats c with period 2.
                let y = (x + 1.0).rem_euclid(2.0) - 1.0;
                Self::fusco_hale_c(*l, *smooth, *floor, y)
            }
            MediumShape::Tabulated { values } => {
                let n = values.len();
                let h = r / n as f64;
                let s = x.rem_euclid(r) / h;
                let i = (s.floor() as usize).min(n - 1);
                let frac = s - i as f64;
                let (a, b) = (values[i], values[(i + 1) % n]);
                (a + frac * (b - a), (b - a) / h)
            }
        }
    }

    pub fn d(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return invalid(format!("medium period must be positive, got {}", self.period));
        }
        if self.samples_per_cell < 4 {
            return invalid("medium needs at least 4 samples per cell");
        }
        match &self.shape {
            MediumShape::FuscoHale { l, smooth, floor } => {
                if !(*l > 0.0 && *l < 1.0) {
                    return invalid(format!("band half-width l must lie in (0, 1), got {l}"));
                }
                if !(*smooth > 0.0) || l - 0.5 * smooth <= 0.0 || l + 0.5 * smooth >= 1.0 {
                    return invalid(format!(
                        "smoothing width {smooth} does not fit inside (0, 1) around l = {l}"
                    ));
                }
                if !(*floor > 0.0 && *floor < 1.0) {
                    return invalid(format!("floor must lie in (0, 1), got {floor}"));
                }
                if (self.period - 4.0).abs() > 1e-12 {
                    return invalid("the reflected step medium has period 4");
                }
            }
            MediumShape::Tabulated { values } if values.len() < 2 => {
                return invalid("tabulated medium needs at least two samples");
            }
            _ => {}
        }
        let n = 4096;
        for i in 0..n {
            let x = self.period * i as f64 / n as f64;
            let d = self.d(x);
            if !(d > 0.0) || !d.is_finite() {
                return invalid(format!("diffusivity must be positive, d({x}) = {d}"));
            }
            if (self.d(x + self.period) - d).abs() > 1e-12 {
                return invalid(format!("diffusivity is not {}-periodic at x = {x}", self.period));
            }
        }
        Ok(())
    }
}

/// Smoothed step medium of the stable non-constant steady state
/// construction: low diffusivity `floor` on `(-l, l)`, one outside, quintic
/// blends of width `smooth`, flat at `x = +-1`, period 4.
pub fn fusco_hale_medium(l: f64, smooth: f64, floor: f64) -> Result<PeriodicMedium> {
    let m = PeriodicMedium {
        shape: MediumShape::FuscoHale { l, smooth, floor },
        period: 4.0,
        samples_per_cell: 256,
    };
    m.validate()?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// Principal periodic eigenvalue

/// Symmetric flux-form operator `(d u')'` on `n` periodic nodes `x_i = i h`,
/// `h = r / n`, with `d` taken at the half nodes.
fn flux_laplacian(medium: &PeriodicMedium, n: usize) -> DMatrix<f64> {
    let h = medium.period / n as f64;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let dp = medium.d((i as f64 + 0.5) * h) / (h * h);
        let j = (i + 1) % n;
        m[(i, i)] -= dp;
        m[(j, j)] -= dp;
        m[(i, j)] += dp;
        m[(j, i)] += dp;
    }
    m
}

/// Principal pair of `(d phi')' + f'(u_bar) phi = lambda phi`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lambda1 {
    pub lambda: f64,
    /// Positive, max-norm one, on `samples` nodes of the cell.
    pub eigenfunction: Vec<f64>,
    pub samples: usize,
    /// `|(d phi')' + f'(u_bar) phi - lambda phi|_inf` of the discrete pair.
    pub residual: f64,
    /// True when the first attempt produced a sign change and the cell was
    /// resampled at twice the resolution.
    pub refined: bool,
}

/// Periodic linear resampling of cell data to `m` nodes.
pub fn resample_cell(u: &[f64], m: usize) -> Vec<f64> {
    let n = u.len();
    (0..m)
        .map(|k| {
            let s = k as f64 * n as f64 / m as f64;
            let i = s.floor() as usize % n;
            let t = s - s.floor();
            (1.0 - t) * u[i] + t * u[(i + 1) % n]
        })
        .collect()
}

fn lambda1_once(u_bar: &[f64], medium: &PeriodicMedium, f_prime: &dyn Fn(f64) -> f64) -> Result<Lambda1> {
    let n = u_bar.len();
    let mut l = flux_laplacian(medium, n);
    for (i, u) in u_bar.iter().enumerate() {
        l[(i, i)] += f_prime(*u);
    }
    let eig = SymmetricEigen::new(l.clone());
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    let mut lambda = eig.eigenvalues[imax];
    let mut phi: DVector<f64> = eig.eigenvectors.column(imax).into_owned();
    // Shifted inverse iteration polishes the pair to near machine precision.
    let scale = l.amax().max(1.0);
    let sigma = lambda + 1e-9 * scale;
    let shifted = DMatrix::from_diagonal_element(n, n, sigma) - &l;
    let lu = shifted.lu();
    for _ in 0..2 {
        if let Some(x) = lu.solve(&phi) {
            let norm = x.amax();
            if norm > 0.0 && norm.is_finite() {
                phi = x / norm;
            }
        }
    }
    lambda = phi.dot(&(&l * &phi)) / phi.dot(&phi);
    let sum: f64 = phi.iter().sum();
    if sum < 0.0 {
        phi = -phi;
    }
    phi /= phi.amax();
    let residual = (&l * &phi - lambda * &phi).amax();
    if phi.iter().any(|v| *v <= 0.0) {
        return Err(Error::Convergence(format!(
            "principal eigenvector changes sign at {n} samples"
        )));
    }
    Ok(Lambda1 {
        lambda,
        eigenfunction: phi.iter().copied().collect(),
        samples: n,
        residual,
        refined: false,
    })
}

/// Principal periodic eigenvalue for cell data `u_bar` sampled at
/// `x_i = i r / n`. A sign change in the eigenvector triggers one retry at
/// twice the resolution.
pub fn lambda1(u_bar: &[f64], medium: &PeriodicMedium, f_prime: impl Fn(f64) -> f64) -> Result<Lambda1> {
    medium.validate()?;
    if u_bar.len() < 4 {
        return invalid("lambda1 needs at least 4 cell samples");
    }
    if u_bar.iter().any(|v| !v.is_finite()) {
        return invalid("cell data must be finite");
    }
    match lambda1_once(u_bar, medium, &f_prime) {
        Ok(p) => Ok(p),
        Err(_) => {
            let fine = resample_cell(u_bar, 2 * u_bar.len());
            let mut p = lambda1_once(&fine, medium, &f_prime)?;
            p.refined = true;
            Ok(p)
        }
    }
}

// ---------------------------------------------------------------------------
// Periodic steady states

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicSteadyState {
    /// Samples over one cell at `x_i = i r / n`.
    pub u: Vec<f64>,
    /// Initial point of the shooting orbit, `(u(0), d(0) u'(0))`.
    pub u0: f64,
    pub v0: f64,
    pub lambda1: f64,
    pub eigenfunction: Vec<f64>,
    pub classification: Stability,
    pub constant: bool,
    /// Sup-norm of the discrete `(d u')' + f(u)`.
    pub residual: f64,
    /// `max - min` of `v^2 / (2 d) + F(u)` along the shooting orbit; only
    /// meaningful for constant media.
    pub energy_drift: f64,
}

impl PeriodicSteadyState {
    pub fn range(&self) -> (f64, f64) {
        self.u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)))
    }
}

/// Scalar autonomous reaction of a periodic-diffusion kinetics.
struct Scalar<'a> {
    k: &'a Kinetics,
}

impl Scalar<'_> {
    fn f(&self, u: f64) -> f64 {
        let mut out = [0.0];
        self.k.field(0.0, &[u], &mut out);
        out[0]
    }

    fn fp(&self, u: f64) -> f64 {
        self.k.jacobian(0.0, &[u])[(0, 0)]
    }

    /// Antiderivative by Simpson's rule from the bottom state.
    fn big_f(&self, u: f64) -> f64 {
        let a = self.k.bottom[0];
        let m = 64;
        let h = (u - a) / m as f64;
        let mut s = self.f(a) + self.f(u);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.f(a + i as f64 * h);
        }
        s * h / 3.0
    }
}

/// Zeros of the scalar reaction on the order box, found by sign changes on a
/// fine lattice and bisection.
pub fn constant_states(k: &Kinetics) -> Vec<f64> {
    let sc = Scalar { k };
    let (lo, hi) = (k.bottom[0], k.top[0]);
    let m = 4000;
    let xs: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
    let mut zeros = Vec::new();
    for w in xs.windows(2) {
        let (fa, fb) = (sc.f(w[0]), sc.f(w[1]));
        if fa == 0.0 {
            zeros.push(w[0]);
        } else if fa * fb < 0.0 {
            let (mut a, mut b, mut fa) = (w[0], w[1], fa);
            for _ in 0..200 {
                let c = 0.5 * (a + b);
                let fc = sc.f(c);
                if fc == 0.0 || b - a < 1e-15 {
                    a = c;
                    b = c;
                    break;
                }
                if fa * fc < 0.0 {
                    b = c;
                } else {
                    a = c;
                    fa = fc;
                }
            }
            zeros.push(0.5 * (a + b));
        }
    }
    if sc.f(hi) == 0.0 {
        zeros.push(hi);
    }
    zeros.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    zeros
}

struct Segment {
    end: [f64; 2],
    /// Derivative of the end point with respect to the start point.
    jac: Matrix2<f64>,
    /// `u` at the cell nodes covered by the segment (start included).
    nodes: Vec<f64>,
    energy: (f64, f64),
}

/// RK4 for `u' = v / d, v' = -f(u)` with the variational equation over
/// cell nodes `[i0, i1)`, `sub` substeps per node spacing.
fn shoot_segment(sc: &Scalar, medium: &PeriodicMedium, n: usize, sub: usize, i0: usize, i1: usize, z0: [f64; 2]) -> Option<Segment> {
    let h = medium.period / (n * sub) as f64;
    let rhs = |x: f64, s: &[f64; 6]| -> [f64; 6] {
        let d = medium.d(x);
        let fp = sc.fp(s[0]);
        [s[1] / d, -sc.f(s[0]), s[3] / d, -fp * s[2], s[5] / d, -fp * s[4]]
    };
    let track = medium.constant_value().is_some();
    let energy = |x: f64, s: &[f64; 6]| s[1] * s[1] / (2.0 * medium.d(x)) + sc.big_f(s[0]);
    let add = |a: &[f64; 6], b: &[f64; 6], c: f64| -> [f64; 6] {
        let mut o = *a;
        for i in 0..6 {
            o[i] += c * b[i];
        }
        o
    };
    let mut s = [z0[0], z0[1], 1.0, 0.0, 0.0, 1.0];
    let mut nodes = Vec::with_capacity(i1 - i0);
    let mut e = (f64::INFINITY, f64::NEG_INFINITY);
    for k in i0 * sub..i1 * sub {
        let x = k as f64 * h;
        if k % sub == 0 {
            nodes.push(s[0]);
            if track {
                let v = energy(x, &s);
                e = (e.0.min(v), e.1.max(v));
            }
        }
        let k1 = rhs(x, &s);
        let k2 = rhs(x + 0.5 * h, &add(&s, &k1, 0.5 * h));
        let k3 = rhs(x + 0.5 * h, &add(&s, &k2, 0.5 * h));
        let k4 = rhs(x + h, &add(&s, &k3, h));
        for i in 0..6 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !s.iter().all(|v| v.is_finite()) || s[0].abs() > 1e3 {
            return None;
        }
    }
    if track {
        let v = energy((i1 * sub) as f64 * h, &s);
        e = (e.0.min(v), e.1.max(v));
    }
    Some(Segment {
        end: [s[0], s[1]],
        jac: Matrix2::new(s[2], s[4], s[3], s[5]),
        nodes,
        energy: e,
    })
}

/// Segment boundaries (node indices) for multiple shooting.
fn segment_bounds(n: usize, m: usize) -> Vec<usize> {
    (0..=m).map(|k| k * n / m).collect()
}

fn shoot_all(sc: &Scalar, medium: &PeriodicMedium, n: usize, sub: usize, z: &[[f64; 2]]) -> Option<Vec<Segment>> {
    let b = segment_bounds(n, z.len());
    (0..z.len())
        .map(|k| shoot_segment(sc, medium, n, sub, b[k], b[k + 1], z[k]))
        .collect()
}

fn mismatch(segs: &[Segment], z: &[[f64; 2]]) -> DVector<f64> {
    let m = z.len();
    DVector::from_iterator(
        2 * m,
        (0..m).flat_map(|k| {
            let nxt = z[(k + 1) % m];
            [segs[k].end[0] - nxt[0], segs[k].end[1] - nxt[1]]
        }),
    )
}

/// Initial multiple-shooting nodes from a seed: integrate segment by
/// segment, clamping each restart into the search box.
fn initial_nodes(sc: &Scalar, medium: &PeriodicMedium, n: usize, sub: usize, m: usize, seed: [f64; 2], bx: [f64; 3]) -> Vec<[f64; 2]> {
    let b = segment_bounds(n, m);
    let mut z = vec![seed; m];
    for k in 1..m {
        let prev = z[k - 1];
        z[k] = match shoot_segment(sc, medium, n, sub, b[k - 1], b[k], prev) {
            Some(seg) => [seg.end[0].clamp(bx[0], bx[1]), seg.end[1].clamp(-bx[2], bx[2])],
            None => prev,
        };
    }
    z
}

/// Newton on the multiple-shooting continuity conditions with minimum-norm
/// steps (tolerating the translation degeneracy of homogeneous media) and
/// backtracking.
fn newton_multiple(sc: &Scalar, medium: &PeriodicMedium, n: usize, sub: usize, mut z: Vec<[f64; 2]>) -> Option<(Vec<[f64; 2]>, Vec<Segment>)> {
    let m = z.len();
    let mut segs = shoot_all(sc, medium, n, sub, &z)?;
    let mut g = mismatch(&segs, &z);
    for _ in 0..80 {
        if g.amax() < 1e-11 {
            return Some((z, segs));
        }
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        for k in 0..m {
            let nk = (k + 1) % m;
            for a in 0..2 {
                for b in 0..2 {
                    j[(2 * k + a, 2 * k + b)] += segs[k].jac[(a, b)];
                }
                j[(2 * k + a, 2 * nk + a)] -= 1.0;
            }
        }
        let svd = j.svd(true, true);
        let smax = svd.singular_values.max();
        let step = svd.solve(&g, 1e-10 * smax.max(1e-300)).ok()?;
        let mut lam = 1.0;
        let mut accepted = false;
        while lam > 1e-4 {
            let trial: Vec<[f64; 2]> = (0..m)
                .map(|k| [z[k][0] - lam * step[2 * k], z[k][1] - lam * step[2 * k + 1]])
                .collect();
            if let Some(ts) = shoot_all(sc, medium, n, sub, &trial) {
                let tg = mismatch(&ts, &trial);
                if tg.norm() < (1.0 - 1e-4 * lam) * g.norm() {
                    z = trial;
                    segs = ts;
                    g = tg;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    (g.amax() < 1e-9).then_some((z, segs))
}

/// Single-harmonic cell profile whose amplitude and phase are the polar
/// coordinates of the seed around `(center, 0)`.
fn harmonic_profile(medium: &PeriodicMedium, n: usize, center: f64, seed: [f64; 2], bx: [f64; 3]) -> Vec<f64> {
    let ru = (center - bx[0]).max(bx[1] - center);
    let (pu, pv) = ((seed[0] - center) / ru, seed[1] / bx[2].max(1e-300));
    let amp = pu.hypot(pv).min(1.0) * ru;
    let phase = pv.atan2(pu);
    (0..n)
        .map(|i| {
            let x = medium.period * i as f64 / n as f64;
            (center + amp * (TWO_PI * x / medium.period - phase).cos()).clamp(bx[0], bx[1])
        })
        .collect()
}

/// Multiple-shooting nodes `(u, d u')` read off cell samples.
fn nodes_from_profile(medium: &PeriodicMedium, u: &[f64], m: usize) -> Vec<[f64; 2]> {
    let n = u.len();
    let h = medium.period / n as f64;
    segment_bounds(n, m)[..m]
        .iter()
        .map(|&i| {
            let x = i as f64 * h;
            let du = (u[(i + 1) % n] - u[(i + n - 1) % n]) / (2.0 * h);
            [u[i], medium.d(x) * du]
        })
        .collect()
}

/// Cyclic tridiagonal solve (Sherman-Morrison on the Thomas algorithm).
fn cyclic_thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    // A = T + u v^T with u = (g, 0.., sup[n-1]) and v = (1, 0.., sub[0] / g).
    let alpha = sup[n - 1];
    let beta = sub[0];
    let g = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= g;
    d[n - 1] -= alpha * beta / g;
    let mut lo = sub.to_vec();
    lo[0] = 0.0;
    let mut up = sup.to_vec();
    up[n - 1] = 0.0;
    let x = thomas(&lo, &d, &up, rhs);
    let mut uvec = vec![0.0; n];
    uvec[0] = g;
    uvec[n - 1] = alpha;
    let z = thomas(&lo, &d, &up, &uvec);
    let fact = (x[0] + beta * x[n - 1] / g) / (1.0 + z[0] + beta * z[n - 1] / g);
    x.iter().zip(&z).map(|(a, b)| a - fact * b).collect()
}

/// Pseudo-transient continuation of `u_t = (d u')' + f(u)` on the cell:
/// linearly implicit steps whose length doubles until they become Newton
/// steps. Converges to attracting states from their basins.
fn relax(sc: &Scalar, medium: &PeriodicMedium, mut u: Vec<f64>) -> Option<Vec<f64>> {
    let n = u.len();
    let h = medium.period / n as f64;
    let dh: Vec<f64> = (0..n).map(|i| medium.d((i as f64 + 0.5) * h) / (h * h)).collect();
    let resid = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (l, r) = ((i + n - 1) % n, (i + 1) % n);
                dh[i] * (u[r] - u[i]) - dh[l] * (u[i] - u[l]) + sc.f(u[i])
            })
            .collect()
    };
    let mut tau = 0.1;
    for _ in 0..400 {
        let r = resid(&u);
        let rmax = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if rmax < 1e-10 {
            return Some(u);
        }
        let sub: Vec<f64> = (0..n).map(|i| -dh[(i + n - 1) % n]).collect();
        let sup: Vec<f64> = (0..n).map(|i| -dh[i]).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| 1.0 / tau + dh[i] + dh[(i + n - 1) % n] - sc.fp(u[i]))
            .collect();
        let du = cyclic_thomas(&sub, &diag, &sup, &r);
        if !du.iter().all(|v| v.is_finite()) {
            return None;
        }
        for (a, b) in u.iter_mut().zip(&du) {
            *a += b;
        }
        tau = (tau * 2.0).min(1e8);
    }
    None
}

/// Discrete periodic steady state `(d u')' + f(u) = 0` by Newton with
/// minimum-norm steps, starting from shooting samples.
fn refine_discrete(sc: &Scalar, medium: &PeriodicMedium, mut u: Vec<f64>) -> (Vec<f64>, f64) {
    let n = u.len();
    let lap = flux_laplacian(medium, n);
    let resid = |u: &[f64]| -> DVector<f64> {
        let uv = DVector::from_column_slice(u);
        let mut r = &lap * &uv;
        for i in 0..n {
            r[i] += sc.f(u[i]);
        }
        r
    };
    let mut r = resid(&u);
    for _ in 0..30 {
        if r.amax() <= 1e-12 {
            break;
        }
        let mut j = lap.clone();
        for i in 0..n {
            j[(i, i)] += sc.fp(u[i]);
        }
        let svd = j.svd(true, true);
        let smax = svd.singular_values.max();
        let Ok(step) = svd.solve(&r, 1e-10 * smax) else {
            break;
        };
        let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
        let rt = resid(&trial);
        if rt.amax() >= r.amax() {
            break;
        }
        u = trial;
        r = rt;
    }
    let res = r.amax();
    (u, res)
}

/// Largest node shift `s` (in samples) group under which the medium is
/// invariant, as the list of admissible shifts.
fn admissible_shifts(medium: &PeriodicMedium, n: usize) -> Vec<usize> {
    let h = medium.period / n as f64;
    (0..n)
        .filter(|&s| {
            (0..2 * n).all(|i| {
                let x = 0.5 * i as f64 * h;
                (medium.d(x + s as f64 * h) - medium.d(x)).abs() <= 1e-12
            })
        })
        .collect()
}

fn phase_distance(a: &[f64], b: &[f64], shifts: &[usize]) -> f64 {
    let n = a.len();
    shifts
        .iter()
        .map(|&s| (0..n).map(|i| (a[i] - b[(i + s) % n]).abs()).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

fn classify(lambda: f64) -> Stability {
    if lambda > MARGINAL_THRESHOLD {
        Stability::Unstable
    } else if lambda < -MARGINAL_THRESHOLD {
        Stability::Stable
    } else {
        Stability::Marginal
    }
}

fn check_periodic_kinetics(k: &Kinetics) -> Result<&PeriodicMedium> {
    if k.family != Family::PeriodicDiffusion || k.n_species() != 1 || k.period().is_some() {
        return precondition("periodic steady states need scalar autonomous periodic-diffusion kinetics");
    }
    k.medium
        .as_ref()
        .ok_or_else(|| Error::Precondition("kinetics carry no periodic medium".into()))
}

/// Seeds on an energy-scaled elliptic lattice around the intermediate
/// constants: `u` spans the order box, `v` the flux range allowed by the
/// potential difference.
fn seeds(sc: &Scalar, medium: &PeriodicMedium, centers: &[f64], n_seeds: usize) -> (Vec<[f64; 2]>, f64) {
    let (lo, hi) = (sc.k.bottom[0], sc.k.top[0]);
    let dmax = (0..256).map(|i| medium.d(medium.period * i as f64 / 256.0)).fold(0.0, f64::max);
    let fs: Vec<f64> = (0..=64).map(|i| sc.big_f(lo + (hi - lo) * i as f64 / 64.0)).collect();
    let df = fs.iter().fold(f64::NEG_INFINITY, |a: f64, b| a.max(*b)) - fs.iter().fold(f64::INFINITY, |a: f64, b| a.min(*b));
    let vmax = (2.0 * dmax * df.max(1e-12)).sqrt();
    let centers: Vec<f64> = if centers.is_empty() { vec![0.5 * (lo + hi)] } else { centers.to_vec() };
    let per = (n_seeds / centers.len()).max(1);
    let n_rad = ((per as f64 / 2.0).sqrt().ceil() as usize).max(1);
    let n_ang = (per / n_rad).max(1);
    let mut out = Vec::with_capacity(n_seeds);
    for &a in &centers {
        let ru = (a - lo).max(hi - a);
        for i in 1..=n_rad {
            let rho = i as f64 / (n_rad as f64 + 1.0);
            for j in 0..n_ang {
                let th = TWO_PI * (j as f64 + 0.5 * (i % 2) as f64) / n_ang as f64;
                let u = (a + rho * ru * th.cos()).clamp(lo, hi);
                out.push([u, rho * vmax * th.sin()]);
            }
        }
    }
    (out, vmax)
}

/// Periodic steady states on one cell: the constants plus non-constant
/// orbits found by shooting from `n_seeds` seeds, deduplicated up to the
/// symmetries of the medium, refined on the cell grid and classified by the
/// principal eigenvalue. Output is sorted by `u0`.
pub fn periodic_steady_states(k: &Kinetics, n_seeds: usize) -> Result<Vec<PeriodicSteadyState>> {
    let medium = check_periodic_kinetics(k)?;
    medium.validate()?;
    let sc = Scalar { k };
    let n = medium.samples_per_cell;
    let sub = 4;
    let (lo, hi) = (k.bottom[0], k.top[0]);
    let span = hi - lo;
    let consts = constant_states(k);
    let inner: Vec<f64> = consts.iter().copied().filter(|c| *c > lo + 1e-9 && *c < hi - 1e-9).collect();
    let (seed_list, vmax) = seeds(&sc, medium, &inner, n_seeds);

    let mut found: Vec<(f64, f64, Vec<f64>, f64)> = seed_list
        .par_iter()
        .flat_map_iter(|z| {
            let sc = Scalar { k };
            let bx = [lo, hi, vmax];
            let center = inner.first().copied().unwrap_or(0.5 * (lo + hi));
            let harmonic = harmonic_profile(medium, n, center, *z, bx);
            let mut starts = vec![
                initial_nodes(&sc, medium, n, sub, SEGMENTS, *z, bx),
                nodes_from_profile(medium, &harmonic, SEGMENTS),
            ];
            if let Some(relaxed) = relax(&sc, medium, harmonic) {
                starts.push(nodes_from_profile(medium, &relaxed, SEGMENTS));
            }
            starts
                .into_iter()
                .filter_map(|init| {
                    let (z, segs) = newton_multiple(&sc, medium, n, sub, init)?;
                    let nodes: Vec<f64> = segs.iter().flat_map(|s| s.nodes.iter().copied()).collect();
                    let (mn, mx) = nodes
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
                    if mx - mn < 1e-6 || mn < lo - 1e-6 || mx > hi + 1e-6 {
                        return None;
                    }
                    let e = segs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, s| {
                        (a.0.min(s.energy.0), a.1.max(s.energy.1))
                    });
                    let drift = if medium.constant_value().is_some() { e.1 - e.0 } else { 0.0 };
                    Some((z[0][0], z[0][1], nodes, drift))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let shifts = admissible_shifts(medium, n);
    let h = medium.period / n as f64;
    let mut unique: Vec<(f64, f64, Vec<f64>, f64)> = Vec::new();
    for cand in found {
        let slope = cand
            .2
            .iter()
            .zip(cand.2.iter().cycle().skip(1))
            .map(|(a, b)| (b - a).abs())
            .fold(0.0, f64::max);
        let tol = 1e-3 * span + slope * if shifts.len() == n { 1.0 } else { 0.0 } + 1e-9 * h;
        if unique.iter().all(|u| phase_distance(&u.2, &cand.2, &shifts) > tol) {
            unique.push(cand);
        }
    }

    let mut states: Vec<PeriodicSteadyState> = unique
        .into_par_iter()
        .map(|(u0, v0, nodes, drift)| -> Result<PeriodicSteadyState> {
            let sc = Scalar { k };
            let (u, residual) = refine_discrete(&sc, medium, nodes);
            let l1 = lambda1(&u, medium, |x| sc.fp(x))?;
            Ok(PeriodicSteadyState {
                u,
                u0,
                v0,
                lambda1: l1.lambda,
                eigenfunction: l1.eigenfunction,
                classification: classify(l1.lambda),
                constant: false,
                residual,
                energy_drift: drift,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for c in consts {
        let u = vec![c; n];
        let l1 = lambda1(&u, medium, |x| sc.fp(x))?;
        states.push(PeriodicSteadyState {
            u,
            u0: c,
            v0: 0.0,
            lambda1: l1.lambda,
            eigenfunction: l1.eigenfunction,
            classification: classify(l1.lambda),
            constant: true,
            residual: sc.f(c).abs(),
            energy_drift: 0.0,
        });
    }
    states.sort_by(|a, b| a.u0.total_cmp(&b.u0).then(a.v0.total_cmp(&b.v0)));
    Ok(states)
}

/// Outcome of the one-sided search for stable non-constant periodic states.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropertyP {
    /// No non-constant state with `lambda1 <= margin` was found at this
    /// search resolution. This is not a proof.
    pub in_y: bool,
    pub witnesses: Vec<PeriodicSteadyState>,
    pub states: Vec<PeriodicSteadyState>,
    pub n_seeds: usize,
}

pub fn property_p_check(k: &Kinetics, n_seeds: usize, margin: f64) -> Result<PropertyP> {
    let states = periodic_steady_states(k, n_seeds)?;
    let witnesses: Vec<PeriodicSteadyState> = states
        .iter()
        .filter(|s| !s.constant && s.lambda1 <= margin)
        .cloned()
        .collect();
    Ok(PropertyP {
        in_y: witnesses.is_empty(),
        witnesses,
        states,
        n_seeds,
    })
}

/// Cell data shifted by `s` samples: `w(x) = u(x + s h)`.
pub fn cell_translate(u: &[f64], s: usize) -> Vec<f64> {
    let n = u.len();
    (0..n).map(|i| u[(i + s) % n]).collect()
}



// ---------------------------------------------------------------------------
// Pulsating waves

/// Cell-indexed form of a line profile: row `i` holds `phi(r i + y)` for the
/// nodes `y` of `[0, r]` (both ends), so `F(i)(r) = F(i + 1)(0)`.
pub fn cell_representation(p: &Profile, period: f64) -> Result<Vec<Vec<f64>>> {
    let g = p.grid();
    let q = period / g.dx();
    if (q - q.round()).abs() > 1e-9 {
        return precondition("the period must be a multiple of the grid spacing");
    }
    let q = q.round() as usize;
    let first = (g.x_min() / period).ceil() as i64;
    let last = ((g.x_max() - period) / period).floor() as i64;
    let mut rows = Vec::new();
    for i in first..=last {
        let x0 = i as f64 * period;
        let Some(j0) = g.node_index(x0) else { continue };
        if j0 + q >= p.len() {
            break;
        }
        rows.push((0..=q).map(|j| p.value(j0 + j)[0]).collect());
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct PulsatingOptions {
    pub horizon: f64,
    /// Half-width of the sampled `xi` window around the front.
    pub window: f64,
    /// Acceptance tolerance on the wave-relation residual.
    pub tol: f64,
    pub periodicity_tol: f64,
    /// Relative spread of late cell-crossing intervals tolerated.
    pub stationarity_tol: f64,
}

impl PulsatingOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            window: 16.0,
            tol: 1e-2,
            periodicity_tol: 1e-3,
            stationarity_tol: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PulsatingWave {
    /// `xi` lattice relative to the mid-level front.
    pub xi: Vec<f64>,
    /// Positions within one cell, `[0, r)`.
    pub cell_x: Vec<f64>,
    /// `v[j][i] = V(xi[j], cell_x[i])`.
    pub v: Vec<Vec<f64>>,
    /// Speed per unit time; positive when the upper state invades leftward.
    pub speed: f64,
    /// Times at which the mid-level front entered successive cells.
    pub crossing_times: Vec<f64>,
    /// Relative spread of the late crossing intervals.
    pub speed_spread: f64,
    pub wave_residual: f64,
    pub periodicity_residual: f64,
    /// Largest decrease of `V` in `xi` at any sampled `x`.
    pub monotonicity_defect: f64,
    /// `max over xi of (max_x V - min_x V)`.
    pub x_variation: f64,
    pub zero_speed: bool,
    pub converged: bool,
    pub accepted: bool,
    pub cells: Vec<Vec<f64>>,
}

impl PulsatingWave {
    /// Bilinear-in-`xi` evaluation at a cell node.
    fn eval(&self, xi: f64, i: usize) -> f64 {
        let n = self.xi.len();
        let d = self.xi[1] - self.xi[0];
        let s = ((xi - self.xi[0]) / d).clamp(0.0, (n - 1) as f64);
        let j = (s.floor() as usize).min(n - 2);
        let t = s - j as f64;
        (1.0 - t) * self.v[j][i] + t * self.v[j + 1][i]
    }
}

/// Evolves a connecting step under the periodic-diffusion semiflow, times
/// the mid-level front through successive cells to estimate `c`, and builds
/// `V(xi, x)` from point histories of two adjacent cells through
/// `u(t, x) = V(x + c t, x)`. The defining relation is then rechecked by
/// evolving the line profile `V(x, x)` over one cell-crossing time.
pub fn pulsating_wave(s: &Semiflow, opts: &PulsatingOptions) -> Result<PulsatingWave> {
    let k = s.kinetics();
    let medium = check_periodic_kinetics(k)?;
    let r = medium.period;
    let g = s.grid().clone();
    let dx = g.dx();
    let q = r / dx;
    if (q - q.round()).abs() > 1e-9 {
        return precondition("the medium period must be a multiple of the grid spacing");
    }
    let q = q.round() as usize;
    let (lo, hi) = (k.bottom[0], k.top[0]);
    let mid = LevelBox::lower_scalar(0.5 * (lo + hi));
    let start = (0.5 * (g.x_min() + g.x_max()) / r).round() * r;
    let init = heaviside_profile(&g, &[lo], &[hi], start, 1.0)?;

    // Phase 1: cell-crossing chronometry.
    let every = ((0.05 / s.dt()).round() as usize).max(1);
    let (state, obs) = s.evolve_state(
        s.initial_state(&init)?,
        0.0,
        s.dt() * s.steps_for_approx(opts.horizon) as f64,
        &[Observer::FrontPosition { level: mid.clone(), every }],
    )?;
    let t1 = obs.fronts.last().map(|f| f.0).unwrap_or(0.0);
    let edge = 10.0 * dx + 2.0;
    if obs.fronts.iter().any(|(_, x)| !x.is_finite() || *x < g.x_min() + edge || *x > g.x_max() - edge) {
        return Err(Error::DomainTooSmall {
            suggested_min: g.x_min() - (g.x_max() - g.x_min()),
            suggested_max: g.x_max() + (g.x_max() - g.x_min()),
        });
    }
    let (x_start, x_end) = (obs.fronts[0].1, obs.fronts.last().expect("samples").1);
    let late: Vec<(f64, f64)> = obs.fronts.iter().copied().filter(|(t, _)| *t >= 0.5 * t1).collect();
    let moved = late.last().expect("samples").1 - late[0].1;

    if moved.abs() < r {
        return zero_speed_wave(s, state.into_current(), &g, q, opts, x_end);
    }
    let dir = -moved.signum();
    let mut crossing_times = Vec::new();
    let mut cell = ((x_start / r).floor() + if dir > 0.0 { 0.0 } else { 1.0 }) as i64;
    for w in obs.fronts.windows(2) {
        let ((ta, xa), (tb, xb)) = (w[0], w[1]);
        loop {
            let target = cell as f64 * r;
            let crossed = if dir > 0.0 { xa > target && xb <= target } else { xa < target && xb >= target };
            if !crossed {
                break;
            }
            crossing_times.push(ta + (tb - ta) * (xa - target) / (xa - xb));
            cell += if dir > 0.0 { -1 } else { 1 };
        }
    }
    let half = crossing_times.len() / 2;
    let intervals: Vec<f64> = crossing_times[half..].windows(2).map(|w| w[1] - w[0]).collect();
    if intervals.len() < 2 {
        return Err(Error::Convergence(format!(
            "only {} late cell crossings; extend the horizon",
            intervals.len()
        )));
    }
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let spread = intervals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean;
    // Least-squares crossing period over the late cells.
    let pts: Vec<(f64, f64)> = crossing_times[half..].iter().enumerate().map(|(i, t)| (i as f64, *t)).collect();
    let period = linear_fit(&pts).map_or(mean, |f| f.0);
    let c = dir * r / period;
    let converged = spread <= opts.stationarity_tol;
    // Front line x + c t = Xi through the late crossings.
    let xi_front = late.iter().map(|(t, x)| x + c * t).sum::<f64>() / late.len() as f64;

    // Phase 2: point histories of two adjacent cells ahead of the front.
    let w = opts.window;
    let margin = 2.0 * r;
    let x_a = if dir > 0.0 {
        ((x_end - w - 2.0 * r - margin) / r).floor() * r
    } else {
        ((x_end + w + margin) / r).ceil() * r
    };
    let ia = g
        .node_index(x_a)
        .filter(|&i| i + 2 * q < g.n_points())
        .ok_or_else(|| Error::DomainTooSmall {
            suggested_min: g.x_min() - 2.0 * w,
            suggested_max: g.x_max() + 2.0 * w,
        })?;
    let xs: Vec<f64> = (0..2 * q).map(|j| g.x(ia + j)).collect();
    let times = |xi: f64, x: f64| (xi - x) / c;
    let bounds = [
        times(xi_front - w, xs[0]),
        times(xi_front - w, xs[2 * q - 1]),
        times(xi_front + w, xs[0]),
        times(xi_front + w, xs[2 * q - 1]),
    ];
    let t_lo = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    let t_hi = bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t_lo < t1 {
        return Err(Error::DomainTooSmall {
            suggested_min: g.x_min() - 2.0 * w,
            suggested_max: g.x_max() + 2.0 * w,
        });
    }
    let steps = ((t_hi - t1) / s.dt()).ceil() as usize + 2;
    let mut st = state;
    let mut hist: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let record = |p: &Profile| (0..2 * q).map(|j| p.value(ia + j)[0]).collect::<Vec<f64>>();
    hist.push(record(st.current()));
    for m in 0..steps {
        s.step_state(&mut st, t1 + m as f64 * s.dt())?;
        let cur = st.current();
        let fx = level_crossing(cur, &mid)?;
        if !fx.is_finite() || fx < g.x_min() + edge || fx > g.x_max() - edge {
            return Err(Error::DomainTooSmall {
                suggested_min: g.x_min() - 2.0 * w,
                suggested_max: g.x_max() + 2.0 * w,
            });
        }
        hist.push(record(cur));
    }
    let sample = |j: usize, t: f64| -> f64 {
        let s_ = ((t - t1) / s.dt()).clamp(0.0, (hist.len() - 1) as f64);
        let m = (s_.floor() as usize).min(hist.len() - 2);
        let a = s_ - m as f64;
        (1.0 - a) * hist[m][j] + a * hist[m + 1][j]
    };
    let nxi = (w / dx).round() as usize;
    let xi: Vec<f64> = (0..=2 * nxi).map(|j| (j as f64 - nxi as f64) * dx).collect();
    let build = |offset: usize| -> Vec<Vec<f64>> {
        xi.iter()
            .map(|e| (0..q).map(|i| sample(offset + i, times(xi_front + e, xs[offset + i]))).collect())
            .collect()
    };
    let v_a = build(0);
    let v_b = build(q);
    let periodicity_residual = v_a
        .iter()
        .zip(&v_b)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let cell_x: Vec<f64> = (0..q).map(|i| xs[i] - x_a).collect();
    let mut wave = PulsatingWave {
        xi,
        cell_x,
        v: v_a,
        speed: c,
        crossing_times,
        speed_spread: spread,
        wave_residual: f64::NAN,
        periodicity_residual,
        monotonicity_defect: 0.0,
        x_variation: 0.0,
        zero_speed: false,
        converged,
        accepted: false,
        cells: vec![],
    };
    finish_wave(s, &mut wave, &g, q, opts)?;
    Ok(wave)
}

/// Line profile `phi(x) = V(x, x)` on the semiflow grid (cells aligned with
/// the medium), limits outside the window.
fn line_profile(wave: &PulsatingWave, g: &Grid, q: usize, lo: f64, hi: f64) -> Profile {
    let w = *wave.xi.last().expect("nonempty");
    let r = wave.cell_x[1] - wave.cell_x[0];
    let r = r * q as f64;
    let mut vals = Vec::with_capacity(g.n_points());
    for j in 0..g.n_points() {
        let x = g.x(j);
        let i = (((x / r).rem_euclid(1.0) * q as f64).round() as usize) % q;
        let v = if x < -w {
            if wave.speed >= 0.0 { lo } else { hi }
        } else if x > w {
            if wave.speed >= 0.0 { hi } else { lo }
        } else {
            wave.eval(x, i)
        };
        vals.push(v);
    }
    Profile::new(g.clone(), 1, vals, vec![lo], vec![hi]).expect("line profile")
}

fn finish_wave(s: &Semiflow, wave: &mut PulsatingWave, g: &Grid, q: usize, opts: &PulsatingOptions) -> Result<()> {
    let k = s.kinetics();
    let (lo, hi) = (k.bottom[0], k.top[0]);
    let mut defect: f64 = 0.0;
    for j in 1..wave.xi.len() {
        for i in 0..q {
            defect = defect.max(wave.v[j - 1][i] - wave.v[j][i]);
        }
    }
    wave.monotonicity_defect = defect;
    wave.x_variation = wave
        .v
        .iter()
        .map(|row| {
            let (a, b) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            b - a
        })
        .fold(0.0, f64::max);

    // Re-centre the grid so the window fits, evolve V(x, x) and compare.
    let r = wave.cell_x[1] * q as f64;
    let w = *wave.xi.last().expect("nonempty");
    let span = ((w + 2.0 * r) / r).ceil() * r;
    let lg = Grid::with_spacing(-span - 2.0 * r, span + 2.0 * r, g.dx())?;
    let ls = s.with_grid(lg.clone())?;
    let phi = line_profile(wave, &lg, q, lo, hi);
    wave.cells = cell_representation(&phi, r)?;
    let t = if wave.zero_speed {
        1.0
    } else {
        let m = ((r / wave.speed.abs()) / ls.dt()).round().max(1.0);
        m * ls.dt()
    };
    let steps = ls.steps_for_approx(t);
    let t = steps as f64 * ls.dt();
    let (out, _) = ls.evolve(&phi, 0.0, t, &[])?;
    let mut res: f64 = 0.0;
    for j in 0..lg.n_points() {
        let x = lg.x(j);
        let target_xi = x + wave.speed * t;
        if target_xi.abs() > w || x.abs() > w {
            continue;
        }
        let i = (((x / r).rem_euclid(1.0) * q as f64).round() as usize) % q;
        let expect = if wave.zero_speed { phi.value(j)[0] } else { wave.eval(target_xi, i) };
        res = res.max((out.value(j)[0] - expect).abs());
    }
    wave.wave_residual = res;
    wave.accepted = wave.converged
        && res <= opts.tol
        && wave.periodicity_residual <= opts.periodicity_tol
        && defect <= 1e-8;
    Ok(())
}

/// Pinned front: the late profile should be a steady connecting orbit.
/// `V(xi, x)` is the steady profile sampled at `xi` (independent of `x`).
fn zero_speed_wave(s: &Semiflow, last: Profile, g: &Grid, q: usize, opts: &PulsatingOptions, x_front: f64) -> Result<PulsatingWave> {
    let r = q as f64 * g.dx();
    let w = opts.window;
    let nxi = (w / g.dx()).round() as usize;
    let centre = (x_front / r).round() * r;
    let xi: Vec<f64> = (0..=2 * nxi).map(|j| (j as f64 - nxi as f64) * g.dx()).collect();
    let v: Vec<Vec<f64>> = xi.iter().map(|e| vec![last.eval(centre + e)[0]; q]).collect();
    let cell_x: Vec<f64> = (0..q).map(|i| i as f64 * g.dx()).collect();
    let mut wave = PulsatingWave {
        xi,
        cell_x,
        v,
        speed: 0.0,
        crossing_times: vec![],
        speed_spread: 0.0,
        wave_residual: f64::NAN,
        periodicity_residual: 0.0,
        monotonicity_defect: 0.0,
        x_variation: 0.0,
        zero_speed: true,
        converged: true,
        accepted: false,
        cells: vec![],
    };
    // The steady residual is measured on the original grid.
    let t = s.dt() * s.steps_for_approx(1.0) as f64;
    let (next, _) = s.evolve(&last, 0.0, t, &[])?;
    let steady = next.sup_distance_nodes(&last)?;
    finish_wave(s, &mut wave, g, q, opts)?;
    wave.wave_residual = steady;
    wave.accepted = steady <= opts.periodicity_tol.max(1e-3) && wave.monotonicity_defect <= 1e-8;
    Ok(wave)
}
