//! Adaptive quadrature on finite intervals and classification of improper
//! integrals.
//!
//! Finite panels use the 7/15-point Gauss–Kronrod pair: the Kronrod value is
//! reported and `|K − G|` is the panel error. The panel with the largest
//! error is bisected first.
//!
//! Improper integrals are split into geometric shells that approach the
//! singular end. A sequence of shell contributions is declared
//! - convergent when the shells decay geometrically and the extrapolated
//!   tail is pinned down within tolerance,
//! - divergent when the shells stop decaying over a whole window,
//! - inconclusive otherwise.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Mixed absolute/relative tolerance: the accepted error for a value `v`
/// is `max(abs, rel·|v|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Tolerance {
        Tolerance { abs, rel }
    }

    pub fn bound(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }

    pub fn scaled(&self, factor: f64) -> Tolerance {
        Tolerance {
            abs: self.abs * factor,
            rel: self.rel * factor,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-10, 1e-8)
    }
}

impl From<f64> for Tolerance {
    fn from(tol: f64) -> Self {
        Tolerance::new(tol, tol)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand is not finite at s = {at}")]
    Domain { at: f64 },
    #[error("invalid interval [{a}, {b}]")]
    Interval { a: f64, b: f64 },
}

/// Result of a finite-interval integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// False when the panel budget ran out before the tolerance was met;
    /// `value` is then the best available estimate.
    pub converged: bool,
    pub evaluations: usize,
    /// Smallest and largest integrand samples seen.
    pub sample_min: f64,
    pub sample_max: f64,
}

impl Integral {
    fn changes_sign(&self) -> bool {
        self.sample_min < 0.0 && self.sample_max > 0.0
    }
}

pub const DEFAULT_MAX_PANELS: usize = 2000;

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

struct Sampler<'f, F> {
    f: &'f F,
    evaluations: usize,
    min: f64,
    max: f64,
}

impl<F: Fn(f64) -> f64> Sampler<'_, F> {
    fn call(&mut self, s: f64) -> Result<f64, QuadError> {
        let v = (self.f)(s);
        self.evaluations += 1;
        if !v.is_finite() {
            return Err(QuadError::Domain { at: s });
        }
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        Ok(v)
    }

    fn kronrod(&mut self, a: f64, b: f64) -> Result<Panel, QuadError> {
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let fc = self.call(center)?;
        let mut kronrod = fc * WGK[7];
        let mut gauss = fc * WG[3];
        for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
            let dx = half * x;
            let pair = self.call(center - dx)? + self.call(center + dx)?;
            kronrod += w * pair;
            if j % 2 == 1 {
                gauss += WG[j / 2] * pair;
            }
        }
        Ok(Panel {
            a,
            b,
            value: kronrod * half,
            error: ((kronrod - gauss) * half).abs(),
        })
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Integrate `f` over `[a, b]` to `max(tol.abs, tol.rel·|value|)`.
pub fn integrate<F>(f: &F, a: f64, b: f64, tol: impl Into<Tolerance>) -> Result<Integral, QuadError>
where
    F: Fn(f64) -> f64,
{
    integrate_with_budget(f, a, b, tol.into(), DEFAULT_MAX_PANELS)
}

pub fn integrate_with_budget<F>(
    f: &F,
    a: f64,
    b: f64,
    tol: Tolerance,
    max_panels: usize,
) -> Result<Integral, QuadError>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadError::Interval { a, b });
    }
    let mut sampler = Sampler {
        f,
        evaluations: 0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            converged: true,
            evaluations: 0,
            sample_min: 0.0,
            sample_max: 0.0,
        });
    }

    let first = sampler.kronrod(a, b)?;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut converged = true;

    while error > tol.bound(value) {
        if heap.len() >= max_panels {
            converged = false;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot split any further in floating point
            heap.push(worst);
            converged = false;
            break;
        }
        let left = sampler.kronrod(worst.a, mid)?;
        let right = sampler.kronrod(mid, worst.b)?;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    let panels = heap.into_vec();
    let value = compensated_sum(panels.iter().map(|p| p.value));
    let error = compensated_sum(panels.iter().map(|p| p.error));
    Ok(Integral {
        value,
        error,
        converged: converged && error <= tol.bound(value),
        evaluations: sampler.evaluations,
        sample_min: sampler.min,
        sample_max: sampler.max,
    })
}

/// Three-valued outcome of an improper-integral classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum IntegralVerdict {
    Convergent {
        value: f64,
        error_estimate: f64,
    },
    Divergent {
        levels_used: usize,
        last_shell_contribution: f64,
    },
    Inconclusive {
        levels_used: usize,
        last_shell_contribution: f64,
        diagnostic: String,
        /// Point where the integrand failed, when that was the cause.
        #[serde(skip_serializing_if = "Option::is_none")]
        failed_at: Option<f64>,
    },
}

impl IntegralVerdict {
    pub fn value(&self) -> Option<f64> {
        match self {
            IntegralVerdict::Convergent { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn is_convergent(&self) -> bool {
        matches!(self, IntegralVerdict::Convergent { .. })
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, IntegralVerdict::Divergent { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, IntegralVerdict::Inconclusive { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            IntegralVerdict::Convergent { .. } => "Convergent",
            IntegralVerdict::Divergent { .. } => "Divergent",
            IntegralVerdict::Inconclusive { .. } => "Inconclusive",
        }
    }

    pub(crate) fn inconclusive(levels_used: usize, last: f64, diagnostic: impl Into<String>) -> Self {
        IntegralVerdict::Inconclusive {
            levels_used,
            last_shell_contribution: last,
            diagnostic: diagnostic.into(),
            failed_at: None,
        }
    }

    /// Negate a convergent value (used when flipping orientation).
    fn negated(self) -> Self {
        match self {
            IntegralVerdict::Convergent {
                value,
                error_estimate,
            } => IntegralVerdict::Convergent {
                value: -value,
                error_estimate,
            },
            other => other,
        }
    }

    fn plus(self, finite: &Integral) -> Self {
        match self {
            IntegralVerdict::Convergent {
                value,
                error_estimate,
            } => IntegralVerdict::Convergent {
                value: value + finite.value,
                error_estimate: error_estimate + finite.error,
            },
            other => other,
        }
    }
}

/// Settings for shell-based classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellConfig {
    pub tol: Tolerance,
    pub max_levels: usize,
    /// Number of consecutive shell ratios examined for a decision.
    pub window: usize,
    /// Shells whose consecutive ratios all reach this value are not decaying.
    pub divergence_ratio: f64,
    /// Largest rise of the shell ratio across the window that still counts
    /// as geometric decay.
    pub ratio_drift: f64,
}

impl Default for ShellConfig {
    fn default() -> Self {
        ShellConfig {
            tol: Tolerance::default(),
            max_levels: 60,
            window: 10,
            divergence_ratio: 0.99,
            ratio_drift: 1e-3,
        }
    }
}

impl ShellConfig {
    pub fn with_tol(tol: impl Into<Tolerance>) -> ShellConfig {
        ShellConfig {
            tol: tol.into(),
            ..ShellConfig::default()
        }
    }
}

/// Shells shrinking at least twofold with non-increasing ratios over the
/// last three steps: the geometric bound already certifies the tail, which
/// matters when the integrand overflows a few shells further out.
fn settled_early(contributions: &[f64], quad_error: f64, cfg: &ShellConfig) -> Option<IntegralVerdict> {
    const SPAN: usize = 3;
    let n = contributions.len();
    if n <= SPAN {
        return None;
    }
    let mags: Vec<f64> = contributions[n - SPAN - 1..].iter().map(|c| c.abs()).collect();
    if mags[..SPAN].contains(&0.0) {
        return None;
    }
    let ratios: Vec<f64> = mags.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios.iter().any(|&r| r > 0.5) || ratios.windows(2).any(|w| w[1] > w[0]) {
        return None;
    }
    let rho = ratios[SPAN - 1];
    let tail = mags[SPAN] * rho / (1.0 - rho);
    let value = compensated_sum(contributions.iter().copied());
    let error = quad_error + tail;
    (error <= cfg.tol.bound(value)).then_some(IntegralVerdict::Convergent {
        value,
        error_estimate: error,
    })
}

fn classify_shells<F, S>(f: &F, shell: S, cfg: &ShellConfig) -> IntegralVerdict
where
    F: Fn(f64) -> f64,
    S: Fn(usize) -> (f64, f64),
{
    let shell_tol = Tolerance::new(cfg.tol.abs * 1e-3, cfg.tol.rel * 1e-3);
    let window = cfg.window.max(2);
    let mut contributions: Vec<f64> = Vec::with_capacity(cfg.max_levels + 1);
    let mut quad_error = 0.0;
    let mut sign = 0.0f64;

    for k in 0..=cfg.max_levels {
        let (a, b) = shell(k);
        let last = contributions.last().copied().unwrap_or(0.0);
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return IntegralVerdict::inconclusive(k, last, "shell left the floating-point range");
        }
        let piece = match integrate_with_budget(f, a, b, shell_tol, DEFAULT_MAX_PANELS) {
            Ok(piece) => piece,
            Err(QuadError::Domain { at }) => {
                return IntegralVerdict::Inconclusive {
                    levels_used: k,
                    last_shell_contribution: last,
                    diagnostic: format!("integrand not finite at s = {at}"),
                    failed_at: Some(at),
                }
            }
            Err(e) => return IntegralVerdict::inconclusive(k, last, e.to_string()),
        };
        if piece.changes_sign() {
            return IntegralVerdict::inconclusive(
                k,
                piece.value,
                format!("integrand changes sign on [{a}, {b}]"),
            );
        }
        let s = if piece.sample_max > 0.0 {
            1.0
        } else if piece.sample_min < 0.0 {
            -1.0
        } else {
            0.0
        };
        if s != 0.0 {
            if sign != 0.0 && s != sign {
                return IntegralVerdict::inconclusive(
                    k,
                    piece.value,
                    "integrand changes sign between shells",
                );
            }
            sign = s;
        }
        quad_error += piece.error;
        contributions.push(piece.value);

        if contributions.len() <= window {
            if let Some(verdict) = settled_early(&contributions, quad_error, cfg) {
                return verdict;
            }
            continue;
        }
        let n = contributions.len();
        let mags: Vec<f64> = contributions[n - window - 1..].iter().map(|c| c.abs()).collect();
        let ratios: Vec<f64> = mags
            .windows(2)
            .map(|w| {
                if w[0] == 0.0 {
                    if w[1] == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    w[1] / w[0]
                }
            })
            .collect();

        if ratios.iter().all(|&r| r >= cfg.divergence_ratio) {
            return IntegralVerdict::Divergent {
                levels_used: k + 1,
                last_shell_contribution: piece.value,
            };
        }

        let head = compensated_sum(contributions.iter().copied());
        let last_mag = mags[window];
        if last_mag == 0.0 {
            let value = head;
            if quad_error <= cfg.tol.bound(value) {
                return IntegralVerdict::Convergent {
                    value,
                    error_estimate: quad_error,
                };
            }
            continue;
        }
        let rho_max = ratios.iter().copied().fold(0.0, f64::max);
        let rho_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let rho_last = ratios[window - 1];
        let drift = rho_last - ratios[0];
        if rho_max >= 1.0 || drift > cfg.ratio_drift {
            continue;
        }
        let geometric = |rho: f64| last_mag * rho / (1.0 - rho);
        let tail = sign * geometric(rho_last);
        let spread = geometric(rho_max) - geometric(rho_min);
        let value = head + tail;
        let error = quad_error + spread + f64::EPSILON * tail.abs();
        if error <= cfg.tol.bound(value) {
            return IntegralVerdict::Convergent {
                value,
                error_estimate: error,
            };
        }
    }
    IntegralVerdict::inconclusive(
        cfg.max_levels + 1,
        contributions.last().copied().unwrap_or(0.0),
        "shell contributions neither settled nor stopped decaying",
    )
}

/// Classify `∫_θ^∞ f(s) ds` over the shells `[θ·2ᵏ, θ·2ᵏ⁺¹]`. Requires `θ > 0`.
pub fn classify_tail<F>(f: &F, theta: f64, cfg: &ShellConfig) -> IntegralVerdict
where
    F: Fn(f64) -> f64,
{
    if !(theta > 0.0 && theta.is_finite()) {
        return IntegralVerdict::inconclusive(0, 0.0, format!("tail start θ = {theta} must be positive"));
    }
    classify_shells(
        f,
        |k| (theta * 2f64.powi(k as i32), theta * 2f64.powi(k as i32 + 1)),
        cfg,
    )
}

/// Classify `∫_ℓ^θ f(s) ds` for an integrand singular at `ℓ⁺`, over the
/// shells `[ℓ + (θ−ℓ)·2^{−k−1}, ℓ + (θ−ℓ)·2^{−k}]`.
pub fn classify_singular_left<F>(f: &F, left: f64, theta: f64, cfg: &ShellConfig) -> IntegralVerdict
where
    F: Fn(f64) -> f64,
{
    if !(left < theta) {
        return IntegralVerdict::inconclusive(0, 0.0, format!("need ℓ < θ, got {left} ≥ {theta}"));
    }
    let h = theta - left;
    classify_shells(
        f,
        |k| {
            (
                left + h * 2f64.powi(-(k as i32) - 1),
                left + h * 2f64.powi(-(k as i32)),
            )
        },
        cfg,
    )
}

/// Classify `∫_θ^r f(s) ds` for an integrand singular at `r⁻`.
pub fn classify_singular_right<F>(f: &F, theta: f64, right: f64, cfg: &ShellConfig) -> IntegralVerdict
where
    F: Fn(f64) -> f64,
{
    if !(theta < right) {
        return IntegralVerdict::inconclusive(0, 0.0, format!("need θ < r, got {theta} ≥ {right}"));
    }
    let h = right - theta;
    classify_shells(
        f,
        |k| {
            (
                right - h * 2f64.powi(-(k as i32)),
                right - h * 2f64.powi(-(k as i32) - 1),
            )
        },
        cfg,
    )
}

/// Classify the oriented integral `∫_from^to f(s) ds` where `to` may be
/// `±∞` or a finite endpoint at which `f` may be singular.
pub fn classify_toward<F>(f: &F, from: f64, to: f64, cfg: &ShellConfig) -> IntegralVerdict
where
    F: Fn(f64) -> f64,
{
    if from == to {
        return IntegralVerdict::Convergent {
            value: 0.0,
            error_estimate: 0.0,
        };
    }
    if to > from {
        if to.is_finite() {
            classify_singular_right(f, from, to, cfg)
        } else {
            classify_to_infinity(f, from, cfg)
        }
    } else if to.is_finite() {
        classify_singular_left(f, to, from, cfg).negated()
    } else {
        let mirrored = |s: f64| f(-s);
        classify_to_infinity(&mirrored, -from, cfg).negated()
    }
}

fn classify_to_infinity<F>(f: &F, from: f64, cfg: &ShellConfig) -> IntegralVerdict
where
    F: Fn(f64) -> f64,
{
    if from > 0.0 {
        return classify_tail(f, from, cfg);
    }
    // shift onto a positive start: ∫_from^1 is finite
    let start = 1.0;
    match integrate_with_budget(f, from, start, cfg.tol.scaled(1e-3), DEFAULT_MAX_PANELS) {
        Ok(piece) => classify_tail(f, start, cfg).plus(&piece),
        Err(e) => IntegralVerdict::inconclusive(0, 0.0, e.to_string()),
    }
}

/// Tabulated `∫_ζ^{node} f` at increasing nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeTable {
    pub anchor: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub panel_errors: Vec<f64>,
}

/// Cumulative integrals of `f` from `anchor` to each node; nodes below the
/// anchor get negative orientation.
pub fn cumulative<F>(
    f: &F,
    anchor: f64,
    nodes: &[f64],
    tol: impl Into<Tolerance>,
) -> Result<CumulativeTable, QuadError>
where
    F: Fn(f64) -> f64,
{
    let tol = tol.into();
    if let Some(w) = nodes.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(QuadError::Interval { a: w[0], b: w[1] });
    }
    let mut values = vec![0.0; nodes.len()];
    let mut errors = vec![0.0; nodes.len()];
    let split = nodes.partition_point(|&n| n < anchor);

    let mut prev = anchor;
    let mut acc = 0.0;
    for i in split..nodes.len() {
        let piece = integrate(f, prev, nodes[i], tol)?;
        acc += piece.value;
        values[i] = acc;
        errors[i] = piece.error;
        prev = nodes[i];
    }
    let mut prev = anchor;
    let mut acc = 0.0;
    for i in (0..split).rev() {
        let piece = integrate(f, nodes[i], prev, tol)?;
        acc -= piece.value;
        values[i] = acc;
        errors[i] = piece.error;
        prev = nodes[i];
    }
    Ok(CumulativeTable {
        anchor,
        nodes: nodes.to_vec(),
        values,
        panel_errors: errors,
    })
}

/// k-th checkpoint from `anchor` toward `upper` (`up`) or `lower`: dyadic
/// approach to a finite end, doubling strides toward an infinite one.
pub(crate) fn checkpoint(anchor: f64, lower: f64, upper: f64, k: usize, up: bool) -> f64 {
    let scale = anchor.abs().max(1.0);
    let k = k as i32;
    match (up, upper.is_finite(), lower.is_finite()) {
        (true, true, _) => upper - (upper - anchor) * 2f64.powi(-k),
        (true, false, _) => anchor + scale * (2f64.powi(k) - 1.0),
        (false, _, true) => lower + (anchor - lower) * 2f64.powi(-k),
        (false, _, false) => anchor - scale * (2f64.powi(k) - 1.0),
    }
}

/// Lazily tabulated antiderivative `x ↦ ∫_anchor^x f` on `(lower, upper)`.
///
/// Checkpoints are placed geometrically toward each end and cached, so a
/// query only integrates from the nearest checkpoint.
pub struct Antiderivative<F> {
    f: F,
    anchor: f64,
    lower: f64,
    upper: f64,
    tol: Tolerance,
    above: Mutex<Vec<(f64, f64)>>,
    below: Mutex<Vec<(f64, f64)>>,
}

impl<F: Fn(f64) -> f64> Antiderivative<F> {
    pub fn new(f: F, anchor: f64, lower: f64, upper: f64, tol: Tolerance) -> Self {
        Antiderivative {
            f,
            anchor,
            lower,
            upper,
            tol,
            above: Mutex::new(vec![(anchor, 0.0)]),
            below: Mutex::new(vec![(anchor, 0.0)]),
        }
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    fn checkpoint(&self, k: usize, up: bool) -> f64 {
        checkpoint(self.anchor, self.lower, self.upper, k, up)
    }

    /// `∫_anchor^x f`, or `Err` when the integrand fails on the way.
    pub fn eval(&self, x: f64) -> Result<f64, QuadError> {
        if x == self.anchor {
            return Ok(0.0);
        }
        let up = x > self.anchor;
        let cache = if up { &self.above } else { &self.below };
        let mut table = cache.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            let k = table.len();
            let next = self.checkpoint(k, up);
            let beyond = if up { next > x } else { next < x };
            if beyond || !next.is_finite() {
                break;
            }
            let (prev, acc) = *table.last().expect("anchor entry");
            let piece = if up {
                integrate(&self.f, prev, next, self.tol)?.value
            } else {
                -integrate(&self.f, next, prev, self.tol)?.value
            };
            table.push((next, acc + piece));
        }
        // nearest checkpoint between the anchor and x
        let idx = if up {
            table.partition_point(|&(n, _)| n <= x) - 1
        } else {
            table.partition_point(|&(n, _)| n >= x) - 1
        };
        let (node, acc) = table[idx];
        drop(table);
        if node == x {
            return Ok(acc);
        }
        let rest = if up {
            integrate(&self.f, node, x, self.tol)?.value
        } else {
            -integrate(&self.f, x, node, self.tol)?.value
        };
        Ok(acc + rest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_rational() {
        let r = integrate(&|s: f64| s * s, 0.0, 1.0, 1e-10).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() <= 1e-10);
        assert!(r.converged);
        let r = integrate(&|s: f64| 1.0 / (s * s), 1.0, 2.0, 1e-10).unwrap();
        assert!((r.value - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn exponential_scale_density() {
        // ∫_1^3 e^{1-s} ds = 1 - e^{-2}
        let r = integrate(&|s: f64| (1.0 - s).exp(), 1.0, 3.0, 1e-10).unwrap();
        assert!((r.value - (1.0 - (-2.0f64).exp())).abs() <= 1e-10);
        assert!((r.value - 0.864_664_7).abs() < 1e-7);
    }

    #[test]
    fn domain_error_reports_point() {
        let r = integrate(&|s: f64| if s > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-10);
        assert!(matches!(r, Err(QuadError::Domain { at }) if at > 0.5));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let r = integrate_with_budget(
            &|s: f64| (1.0 / s).sin(),
            1e-9,
            1.0,
            Tolerance::new(1e-14, 1e-14),
            20,
        )
        .unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn tail_examples() {
        let cfg = ShellConfig::with_tol(1e-10);
        let v = classify_tail(&|s: f64| 1.0 / (s * s), 1.0, &cfg);
        assert!((v.value().unwrap() - 1.0).abs() < 1e-8, "{v:?}");
        assert!(classify_tail(&|s: f64| 1.0 / s, 1.0, &cfg).is_divergent());
        let v = classify_tail(&|s: f64| 1.0 / (2.0 * s * s - s), 1.0, &cfg);
        assert!(
            (v.value().unwrap() - std::f64::consts::LN_2).abs() < 1e-8,
            "{v:?}"
        );
    }

    #[test]
    fn power_law_frontier() {
        let cfg = ShellConfig::default();
        for q in [0.5, 0.9, 1.0, 1.1, 2.0, 3.0] {
            let v = classify_tail(&|s: f64| s.powf(-q), 1.0, &cfg);
            if q > 1.0 {
                let got = v.value().unwrap_or_else(|| panic!("q = {q}: {v:?}"));
                assert!((got - 1.0 / (q - 1.0)).abs() < 1e-6, "q = {q}: {got}");
            } else {
                assert!(v.is_divergent(), "q = {q}: {v:?}");
            }
        }
    }

    #[test]
    fn slowly_varying_tail_is_not_called_convergent() {
        // ∫ ds/(s log² s) converges, ∫ ds/(s log s) does not; neither decays
        // geometrically over shells, so neither may be reported Convergent
        let cfg = ShellConfig::default();
        let v = classify_tail(&|s: f64| 1.0 / (s * s.ln()), 2.0, &cfg);
        assert!(!v.is_convergent(), "{v:?}");
    }

    #[test]
    fn singular_left_examples() {
        let cfg = ShellConfig::with_tol(1e-10);
        assert!(classify_singular_left(&|z: f64| 1.0 / z, 0.0, 1.0, &cfg).is_divergent());
        let v = classify_singular_left(&|z: f64| 1.0 / z.sqrt(), 0.0, 1.0, &cfg);
        assert!((v.value().unwrap() - 2.0).abs() < 1e-8, "{v:?}");
        let v = classify_singular_left(&|s: f64| (1.0 - s).exp(), 0.0, 1.0, &cfg);
        let e = std::f64::consts::E;
        assert!((v.value().unwrap() - (e - 1.0)).abs() < 1e-8, "{v:?}");
    }

    #[test]
    fn sign_change_is_inconclusive() {
        let cfg = ShellConfig::default();
        let v = classify_tail(&|s: f64| (s - 3.0) / (s * s * s), 1.0, &cfg);
        assert!(v.is_inconclusive());
    }

    #[test]
    fn domain_failure_is_inconclusive() {
        let cfg = ShellConfig::default();
        let v = classify_tail(
            &|s: f64| if s > 100.0 { f64::NAN } else { 1.0 / (s * s) },
            1.0,
            &cfg,
        );
        match v {
            IntegralVerdict::Inconclusive { failed_at, .. } => assert!(failed_at.unwrap() > 100.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_integrand_converges_to_zero() {
        let v = classify_tail(&|_s: f64| 0.0, 1.0, &ShellConfig::default());
        assert_eq!(v.value(), Some(0.0));
    }

    #[test]
    fn oriented_classification() {
        let cfg = ShellConfig::with_tol(1e-10);
        // ∫_1^0 e^{1-s} ds = -(e - 1)
        let v = classify_toward(&|s: f64| (1.0 - s).exp(), 1.0, 0.0, &cfg);
        assert!((v.value().unwrap() + std::f64::consts::E - 1.0).abs() < 1e-8);
        // ∫_{-1}^{∞} e^{-s} ds = e
        let v = classify_toward(&|s: f64| (-s).exp(), -1.0, f64::INFINITY, &cfg);
        assert!((v.value().unwrap() - std::f64::consts::E).abs() < 1e-8, "{v:?}");
        // ∫_0^{-∞} e^{s} ds = -1
        let v = classify_toward(&|s: f64| s.exp(), 0.0, f64::NEG_INFINITY, &cfg);
        assert!((v.value().unwrap() + 1.0).abs() < 1e-8, "{v:?}");
        // ∫_0^1 (1-s)^{-1/2} ds = 2
        let v = classify_toward(&|s: f64| 1.0 / (1.0 - s).sqrt(), 0.0, 1.0, &cfg);
        assert!((v.value().unwrap() - 2.0).abs() < 1e-8, "{v:?}");
    }

    #[test]
    fn cumulative_examples() {
        let t = cumulative(&|_s: f64| 1.0, 0.0, &[1.0, 2.0, 3.0], 1e-12).unwrap();
        for (v, want) in t.values.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - want).abs() < 1e-12);
        }
        let t = cumulative(&|s: f64| 1.0 / (s * s), 1.0, &[2.0, 4.0], 1e-12).unwrap();
        assert!((t.values[0] - 0.5).abs() < 1e-12);
        assert!((t.values[1] - 0.75).abs() < 1e-12);
        let t = cumulative(&|_s: f64| 1.0, 1.0, &[0.0, 0.5, 2.0], 1e-12).unwrap();
        assert!((t.values[0] + 1.0).abs() < 1e-12);
        assert!((t.values[1] + 0.5).abs() < 1e-12);
        assert!((t.values[2] - 1.0).abs() < 1e-12);
        assert!(cumulative(&|_s: f64| 1.0, 0.0, &[2.0, 1.0], 1e-12).is_err());
    }

    #[test]
    fn inner_feller_cumulative() {
        // b(r) = r²/2, σ(r) = r: b/σ² ≡ 1/2, so 2∫_1^s b/σ² = s - 1
        let t = cumulative(
            &|r: f64| 2.0 * (r * r / 2.0) / (r * r),
            1.0,
            &[0.25, 0.5, 2.0, 3.0],
            1e-12,
        )
        .unwrap();
        for (node, v) in t.nodes.iter().zip(&t.values) {
            assert!((v - (node - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn antiderivative_matches_closed_form() {
        let anti = Antiderivative::new(|s: f64| 1.0 / (s * s), 1.0, 0.0, f64::INFINITY, 1e-13.into());
        for x in [0.01, 0.3, 1.0, 1.7, 5.0, 1e4] {
            let want = 1.0 - 1.0 / x;
            assert!(
                (anti.eval(x).unwrap() - want).abs() < 1e-9 * want.abs().max(1.0),
                "x = {x}"
            );
        }
    }

    #[test]
    fn fast_decay_settles_before_overflow() {
        // the integrand is unusable past s = 60, well inside a full window
        let f = |s: f64| if s < 60.0 { (-s).exp() } else { f64::NAN };
        let v = classify_tail(&f, 1.0, &ShellConfig::default());
        assert!(
            (v.value().expect("convergent") - (-1f64).exp()).abs() < 1e-9,
            "{v:?}"
        );
    }
}
