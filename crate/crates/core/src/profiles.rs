//! Sampled state-valued profiles on one-dimensional habitats.
//!
//! A [`Profile`] stores one state vector per grid node plus the two far-field
//! limits it takes outside the sampled window. Between nodes the profile is
//! piecewise linear; beyond the window it is extended by its limits. Every
//! operator here (translation, rescaling, level crossing) is built on that
//! representation so that order and monotonicity survive exactly.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default tolerance for order comparisons.
pub const ORDER_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HabitatKind {
    ContinuousSampled,
    Lattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    kind: HabitatKind,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return invalid("grid bounds must be finite");
        }
        if n_points < 2 {
            return invalid("grid needs at least two points");
        }
        if x_max <= x_min {
            return invalid(format!("x_max ({x_max}) must exceed x_min ({x_min})"));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
            kind: HabitatKind::ContinuousSampled,
        })
    }

    /// Grid on `[x_min, x_max]` with spacing `dx`; the span must be an integer
    /// number of cells.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if dx <= 0.0 || !dx.is_finite() {
            return invalid(format!("spacing must be positive, got {dx}"));
        }
        let cells = (x_max - x_min) / dx;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return invalid(format!(
                "span {} is not a multiple of dx = {dx}",
                x_max - x_min
            ));
        }
        Self::new(x_min, x_min + rounded * dx, rounded as usize + 1)
    }

    /// Integer lattice `x_min, x_min + 1, ...` with `n_points` sites.
    pub fn lattice(x_min: i64, n_points: usize) -> Result<Self> {
        let mut g = Self::new(x_min as f64, (x_min + n_points as i64 - 1) as f64, n_points)?;
        g.kind = HabitatKind::Lattice;
        Ok(g)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn kind(&self) -> HabitatKind {
        self.kind
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Fractional node index of position `x`.
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x - self.x_min) / self.dx()
    }

    /// Index of the node at `x`, if `x` is a node up to `1e-9` cells.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let s = self.fractional_index(x);
        let r = s.round();
        if (s - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.n_points {
            Some(r as usize)
        } else {
            None
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n_points == other.n_points
            && self.kind == other.kind
            && (self.x_min - other.x_min).abs() <= 1e-12 * (1.0 + self.x_min.abs())
            && (self.x_max - other.x_max).abs() <= 1e-12 * (1.0 + self.x_max.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderVerdict {
    Leq,
    Geq,
    Equal,
    Unordered,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRelation {
    pub verdict: OrderVerdict,
    /// Largest violation of the reported verdict (zero for `Equal`); for
    /// `Unordered`, the smaller of the two one-sided violations.
    pub max_violation: f64,
    /// Largest componentwise `|p - q|`, limits included.
    pub max_difference: f64,
}

/// Order box used by [`level_crossing`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bound")]
pub enum LevelBox {
    /// `[0, bound]`; the crossing is the supremum of positions inside.
    Lower(Vec<f64>),
    /// `[bound, top]`; the crossing is the infimum of positions inside.
    Upper(Vec<f64>),
}

impl LevelBox {
    pub fn lower_scalar(b: f64) -> Self {
        Self::Lower(vec![b])
    }

    pub fn upper_scalar(b: f64) -> Self {
        Self::Upper(vec![b])
    }

    fn bound(&self) -> &[f64] {
        match self {
            Self::Lower(b) | Self::Upper(b) => b,
        }
    }

    fn contains(&self, u: &[f64]) -> bool {
        match self {
            Self::Lower(b) => u.iter().zip(b).all(|(v, b)| v <= b),
            Self::Upper(b) => u.iter().zip(b).all(|(v, b)| v >= b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
    left_limit: Vec<f64>,
    right_limit: Vec<f64>,
    monotone: Option<bool>,
}

impl Profile {
    pub fn new(
        grid: Grid,
        dim: usize,
        values: Vec<f64>,
        left_limit: Vec<f64>,
        right_limit: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return invalid("state dimension must be positive");
        }
        if values.len() != grid.n_points() * dim {
            return invalid(format!(
                "expected {} values ({} points x {dim}), got {}",
                grid.n_points() * dim,
                grid.n_points(),
                values.len()
            ));
        }
        if left_limit.len() != dim || right_limit.len() != dim {
            return invalid("limit dimension does not match state dimension");
        }
        Ok(Self {
            grid,
            dim,
            values,
            left_limit,
            right_limit,
            monotone: None,
        })
    }

    /// Build from a closure; the limits are the first and last samples.
    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let n = grid.n_points();
        let mut values = vec![0.0; n * dim];
        for i in 0..n {
            f(grid.x(i), &mut values[i * dim..(i + 1) * dim]);
        }
        let left_limit = values[..dim].to_vec();
        let right_limit = values[(n - 1) * dim..].to_vec();
        Self {
            grid,
            dim,
            values,
            left_limit,
            right_limit,
            monotone: None,
        }
    }

    pub fn constant(grid: Grid, state: &[f64]) -> Self {
        let dim = state.len();
        let mut p = Self::from_fn(grid, dim, |_, out| out.copy_from_slice(state));
        p.monotone = Some(true);
        p
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.n_points()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.monotone = None;
        &mut self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn left_limit(&self) -> &[f64] {
        &self.left_limit
    }

    pub fn right_limit(&self) -> &[f64] {
        &self.right_limit
    }

    pub fn set_limits(&mut self, left: Vec<f64>, right: Vec<f64>) {
        assert_eq!(left.len(), self.dim);
        assert_eq!(right.len(), self.dim);
        self.left_limit = left;
        self.right_limit = right;
        self.monotone = None;
    }

    pub fn monotone_flag(&self) -> Option<bool> {
        self.monotone
    }

    pub fn with_monotone_flag(mut self, flag: Option<bool>) -> Self {
        self.monotone = flag;
        self
    }

    /// Component `c` at every node.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }

    /// Whether the profile is componentwise nondecreasing, limits included,
    /// up to `tol`.
    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.monotonicity_defect() <= tol
    }

    /// Largest decrease between consecutive samples (limits included).
    pub fn monotonicity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for c in 0..d {
            worst = worst.max(self.left_limit[c] - self.values[c]);
            worst = worst.max(self.values[self.values.len() - d + c] - self.right_limit[c]);
        }
        for i in 0..self.len() - 1 {
            for c in 0..d {
                worst = worst.max(self.values[i * d + c] - self.values[(i + 1) * d + c]);
            }
        }
        worst
    }

    /// Value at fractional node index `s`, written into `out`.
    ///
    /// Nodes outside `[0, n-1]` take the corresponding limit.
    pub fn sample_index_into(&self, s: f64, out: &mut [f64]) {
        let n = self.len();
        let d = self.dim;
        if s.is_nan() {
            out.fill(f64::NAN);
        } else if s < 0.0 {
            out.copy_from_slice(&self.left_limit);
        } else if s > (n - 1) as f64 {
            out.copy_from_slice(&self.right_limit);
        } else {
            let i = (s.floor() as usize).min(n - 1);
            let frac = s - i as f64;
            if frac == 0.0 || i == n - 1 {
                out.copy_from_slice(self.value(i));
            } else {
                for c in 0..d {
                    let a = self.values[i * d + c];
                    let b = self.values[(i + 1) * d + c];
                    out[c] = a + frac * (b - a);
                }
            }
        }
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        if x == f64::NEG_INFINITY {
            out.copy_from_slice(&self.left_limit);
        } else if x == f64::INFINITY {
            out.copy_from_slice(&self.right_limit);
        } else {
            self.sample_index_into(self.grid.fractional_index(x), out);
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Sup-norm distance over nodes and limits.
    pub fn sup_distance(&self, other: &Profile) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut d = max_abs_diff(&self.values, &other.values);
        d = d.max(max_abs_diff(&self.left_limit, &other.left_limit));
        d = d.max(max_abs_diff(&self.right_limit, &other.right_limit));
        Ok(d)
    }

    /// Sup-norm distance over nodes only.
    pub fn sup_distance_nodes(&self, other: &Profile) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(max_abs_diff(&self.values, &other.values))
    }

    fn check_same_shape(&self, other: &Profile) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "[{}, {}]x{} vs [{}, {}]x{}",
                self.grid.x_min,
                self.grid.x_max,
                self.grid.n_points,
                other.grid.x_min,
                other.grid.x_max,
                other.grid.n_points
            )));
        }
        if self.dim != other.dim {
            return Err(Error::GridMismatch(format!(
                "state dimension {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    /// Resample onto another grid by interpolation; limits are kept.
    pub fn resample(&self, grid: &Grid) -> Profile {
        let mut out = Profile::from_fn(grid.clone(), self.dim, |x, o| self.eval_into(x, o));
        out.left_limit = self.left_limit.clone();
        out.right_limit = self.right_limit.clone();
        out.monotone = self.monotone;
        out
    }

    /// Extreme values of each component over nodes and limits.
    pub fn component_range(&self, c: usize) -> (f64, f64) {
        let mut lo = self.left_limit[c].min(self.right_limit[c]);
        let mut hi = self.left_limit[c].max(self.right_limit[c]);
        for v in self.values.iter().skip(c).step_by(self.dim) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (lo, hi)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self.left_limit.iter().all(|v| v.is_finite())
            && self.right_limit.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Nondecreasing ramp from `lower` (for `x <= interface - ramp_width`) to
/// `upper` (for `x >= interface`).
pub fn heaviside_profile(
    grid: &Grid,
    lower: &[f64],
    upper: &[f64],
    interface: f64,
    ramp_width: f64,
) -> Result<Profile> {
    if lower.len() != upper.len() || lower.is_empty() {
        return invalid("lower and upper states must have the same positive dimension");
    }
    if let Some(c) = (0..lower.len()).find(|&c| lower[c] > upper[c]) {
        return invalid(format!(
            "connecting data is ill-posed: lower[{c}] = {} exceeds upper[{c}] = {}",
            lower[c], upper[c]
        ));
    }
    if !(ramp_width >= 0.0) {
        return invalid(format!("ramp width must be nonnegative, got {ramp_width}"));
    }
    if interface < grid.x_min() || interface > grid.x_max() {
        return invalid(format!(
            "interface {interface} outside [{}, {}]",
            grid.x_min(),
            grid.x_max()
        ));
    }
    let start = interface - ramp_width;
    let mut p = Profile::from_fn(grid.clone(), lower.len(), |x, out| {
        let theta = if x >= interface {
            1.0
        } else if x <= start {
            0.0
        } else {
            (x - start) / ramp_width
        };
        for c in 0..out.len() {
            out[c] = lower[c] + theta * (upper[c] - lower[c]);
        }
    });
    p.left_limit = lower.to_vec();
    p.right_limit = upper.to_vec();
    p.monotone = Some(true);
    Ok(p)
}

/// `T_y[p](x) = p(x - y)`.
pub fn translate(p: &Profile, y: f64) -> Profile {
    if y == 0.0 {
        return p.clone();
    }
    let shift = y / p.grid.dx();
    let mut values = vec![0.0; p.values.len()];
    for (i, chunk) in values.chunks_mut(p.dim).enumerate() {
        p.sample_index_into(i as f64 - shift, chunk);
    }
    Profile {
        grid: p.grid.clone(),
        dim: p.dim,
        values,
        left_limit: p.left_limit.clone(),
        right_limit: p.right_limit.clone(),
        monotone: p.monotone,
    }
}

/// `A_xi[p](x) = p(xi * x)` for `xi >= 1`.
pub fn rescale(p: &Profile, xi: f64) -> Result<Profile> {
    if !(xi >= 1.0) || !xi.is_finite() {
        return invalid(format!("rescaling factor must be >= 1, got {xi}"));
    }
    if xi == 1.0 {
        return Ok(p.clone());
    }
    let mut values = vec![0.0; p.values.len()];
    for (i, chunk) in values.chunks_mut(p.dim).enumerate() {
        let x = p.grid.x(i);
        p.eval_into(xi * x, chunk);
    }
    Ok(Profile {
        grid: p.grid.clone(),
        dim: p.dim,
        values,
        left_limit: p.left_limit.clone(),
        right_limit: p.right_limit.clone(),
        monotone: p.monotone,
    })
}

/// Componentwise order comparison with tolerance `tol`; limits included.
pub fn compare(p: &Profile, q: &Profile, tol: f64) -> Result<OrderRelation> {
    p.check_same_shape(q)?;
    let mut above: f64 = 0.0; // max(p - q)
    let mut below: f64 = 0.0; // max(q - p)
    let pairs = p
        .values
        .iter()
        .zip(&q.values)
        .chain(p.left_limit.iter().zip(&q.left_limit))
        .chain(p.right_limit.iter().zip(&q.right_limit));
    for (a, b) in pairs {
        above = above.max(a - b);
        below = below.max(b - a);
    }
    let leq = above <= tol;
    let geq = below <= tol;
    let (verdict, max_violation) = match (leq, geq) {
        (true, true) => (OrderVerdict::Equal, 0.0),
        (true, false) => (OrderVerdict::Leq, above),
        (false, true) => (OrderVerdict::Geq, below),
        (false, false) => (OrderVerdict::Unordered, above.min(below)),
    };
    Ok(OrderRelation {
        verdict,
        max_violation,
        max_difference: above.max(below),
    })
}

/// Position where a monotone profile leaves (`Lower`) or enters (`Upper`) the
/// box, refined by linear interpolation between the bracketing nodes.
///
/// Returns `-inf` when the box is never occupied and `+inf` when it is
/// occupied everywhere (for `Lower`); the roles swap for `Upper`.
pub fn level_crossing(p: &Profile, probe: &LevelBox) -> Result<f64> {
    if probe.bound().len() != p.dim {
        return invalid("level box dimension does not match the profile");
    }
    let defect = p.monotonicity_defect();
    if defect > ORDER_TOL {
        return Err(Error::NonMonotone(format!(
            "decrease of {defect:e} between samples; crossing is not well defined"
        )));
    }
    let n = p.len();
    let dx = p.grid.dx();
    let inside: Vec<bool> = (0..n).map(|i| probe.contains(p.value(i))).collect();
    match probe {
        LevelBox::Lower(bound) => {
            let Some(last) = inside.iter().rposition(|&b| b) else {
                return Ok(if probe.contains(&p.left_limit) {
                    p.grid.x_min()
                } else {
                    f64::NEG_INFINITY
                });
            };
            if last == n - 1 {
                return Ok(if probe.contains(&p.right_limit) {
                    f64::INFINITY
                } else {
                    p.grid.x_max()
                });
            }
            let (a, b) = (p.value(last), p.value(last + 1));
            let mut t: f64 = 1.0;
            for c in 0..p.dim {
                if b[c] > bound[c] {
                    let denom = b[c] - a[c];
                    let tc = if denom > 0.0 { (bound[c] - a[c]) / denom } else { 0.0 };
                    t = t.min(tc.clamp(0.0, 1.0));
                }
            }
            Ok(p.grid.x(last) + t * dx)
        }
        LevelBox::Upper(bound) => {
            let Some(first) = inside.iter().position(|&b| b) else {
                return Ok(if probe.contains(&p.right_limit) {
                    p.grid.x_max()
                } else {
                    f64::INFINITY
                });
            };
            if first == 0 {
                return Ok(if probe.contains(&p.left_limit) {
                    f64::NEG_INFINITY
                } else {
                    p.grid.x_min()
                });
            }
            let (a, b) = (p.value(first - 1), p.value(first));
            let mut t: f64 = 0.0;
            for c in 0..p.dim {
                if a[c] < bound[c] {
                    let denom = b[c] - a[c];
                    let tc = if denom > 0.0 { (bound[c] - a[c]) / denom } else { 1.0 };
                    t = t.max(tc.clamp(0.0, 1.0));
                }
            }
            Ok(p.grid.x(first - 1) + t * dx)
        }
    }
}

#[derive(Clone, Debug)]
pub struct HellyLimit {
    /// Limit function on the samples' grid.
    pub limit: Profile,
    /// Limit values at each dense position (NaN where not converged).
    pub position_values: Vec<Vec<f64>>,
    /// `true` where the tail oscillation fell below the tolerance.
    pub converged_mask: Vec<bool>,
}

/// Fraction of the sequence used as the Cauchy tail.
pub const HELLY_TAIL_FRACTION: f64 = 0.25;
/// Tail oscillation below which a position counts as converged.
pub const HELLY_TOL: f64 = 1e-6;

/// Pointwise limit of a bounded sequence of monotone profiles.
pub fn helly_extract(samples: &[Profile], dense_positions: &[f64]) -> Result<HellyLimit> {
    helly_extract_with(samples, dense_positions, HELLY_TAIL_FRACTION, HELLY_TOL)
}

pub fn helly_extract_with(
    samples: &[Profile],
    dense_positions: &[f64],
    tail_fraction: f64,
    tol: f64,
) -> Result<HellyLimit> {
    let Some(first) = samples.first() else {
        return invalid("empty sequence");
    };
    for (k, s) in samples.iter().enumerate() {
        first.check_same_shape(s)?;
        if !s.is_nondecreasing(ORDER_TOL) {
            return Err(Error::NonMonotone(format!("sequence member {k}")));
        }
    }
    if dense_positions.windows(2).any(|w| w[0] > w[1]) {
        return invalid("dense positions must be sorted");
    }
    let dim = first.dim;
    let m = samples.len();
    let tail_len = ((m as f64 * tail_fraction).ceil() as usize).clamp(1, m);
    let tail = &samples[m - tail_len..];

    let mut position_values = Vec::with_capacity(dense_positions.len());
    let mut converged_mask = Vec::with_capacity(dense_positions.len());
    let mut buf = vec![0.0; dim];
    for &x in dense_positions {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for s in tail {
            s.eval_into(x, &mut buf);
            for c in 0..dim {
                lo[c] = lo[c].min(buf[c]);
                hi[c] = hi[c].max(buf[c]);
            }
        }
        let osc = (0..dim).map(|c| hi[c] - lo[c]).fold(0.0, f64::max);
        if osc <= tol {
            samples[m - 1].eval_into(x, &mut buf);
            position_values.push(buf.clone());
            converged_mask.push(true);
        } else {
            position_values.push(vec![f64::NAN; dim]);
            converged_mask.push(false);
        }
    }

    // Fill grid nodes with the left limit of the limit function: the running
    // supremum of converged values at positions <= x.
    let last = &samples[m - 1];
    let grid = first.grid.clone();
    let mut values = vec![0.0; grid.n_points() * dim];
    let mut running = last.left_limit.clone();
    let mut j = 0;
    for i in 0..grid.n_points() {
        let x = grid.x(i);
        while j < dense_positions.len() && dense_positions[j] <= x + 1e-12 {
            if converged_mask[j] {
                for c in 0..dim {
                    running[c] = running[c].max(position_values[j][c]);
                }
            }
            j += 1;
        }
        values[i * dim..(i + 1) * dim].copy_from_slice(&running);
    }
    let limit = Profile {
        grid,
        dim,
        values,
        left_limit: last.left_limit.clone(),
        right_limit: last.right_limit.clone(),
        monotone: Some(true),
    };
    Ok(HellyLimit {
        limit,
        position_values,
        converged_mask,
    })
}

// ---------------------------------------------------------------------------
// Serialization

const MAGIC: &[u8; 4] = b"MWPF";
const FORMAT_VERSION: u16 = 1;

impl Profile {
    /// CSV with columns `x, component_0, ...`; the first and last rows double
    /// as the limits when read back.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "x")?;
        for c in 0..self.dim {
            write!(w, ",component_{c}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{}", self.grid.x(i))?;
            for v in self.value(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Profile> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSV".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"x") || cols.len() < 2 {
            return Err(Error::Format(format!("bad header `{header}`")));
        }
        let dim = cols.len() - 1;
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("row {}: {e}", ln + 2)))?;
            if fields.len() != dim + 1 {
                return Err(Error::Format(format!("row {} has {} fields", ln + 2, fields.len())));
            }
            xs.push(fields[0]);
            values.extend_from_slice(&fields[1..]);
        }
        if xs.len() < 2 {
            return Err(Error::Format("need at least two rows".into()));
        }
        let grid = Grid::new(xs[0], *xs.last().unwrap(), xs.len())?;
        let left = values[..dim].to_vec();
        let right = values[values.len() - dim..].to_vec();
        Profile::new(grid, dim, values, left, right)
    }

    /// Versioned little-endian binary snapshot; round-trips bit-exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 8 * (self.values.len() + 2 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match self.grid.kind {
            HabitatKind::ContinuousSampled => 0,
            HabitatKind::Lattice => 1,
        });
        out.push(match self.monotone {
            None => 0,
            Some(false) => 1,
            Some(true) => 2,
        });
        out.extend_from_slice(&(self.grid.n_points as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.x_min.to_le_bytes());
        out.extend_from_slice(&self.grid.x_max.to_le_bytes());
        for v in self
            .left_limit
            .iter()
            .chain(&self.right_limit)
            .chain(&self.values)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Profile> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a profile snapshot".into()));
        }
        let version = u16::from_le_bytes(take::<2>(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let [kind, mono] = take::<2>(&mut r)?;
        let n_points = u64::from_le_bytes(take::<8>(&mut r)?) as usize;
        let dim = u32::from_le_bytes(take::<4>(&mut r)?) as usize;
        let x_min = f64::from_le_bytes(take::<8>(&mut r)?);
        let x_max = f64::from_le_bytes(take::<8>(&mut r)?);
        let expected = (2 * dim + n_points * dim) * 8;
        if r.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {expected}",
                r.len()
            )));
        }
        let mut floats = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let left: Vec<f64> = floats.by_ref().take(dim).collect();
        let right: Vec<f64> = floats.by_ref().take(dim).collect();
        let values: Vec<f64> = floats.collect();
        let mut grid = Grid::new(x_min, x_max, n_points)?;
        grid.kind = match kind {
            0 => HabitatKind::ContinuousSampled,
            1 => HabitatKind::Lattice,
            k => return Err(Error::Format(format!("unknown habitat kind {k}"))),
        };
        let mut p = Profile::new(grid, dim, values, left, right)?;
        p.monotone = match mono {
            0 => None,
            1 => Some(false),
            2 => Some(true),
            m => return Err(Error::Format(format!("bad monotone flag {m}"))),
        };
        Ok(p)
    }
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(buf)
}
