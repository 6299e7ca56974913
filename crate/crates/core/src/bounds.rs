//! Closed-form capacities and bounds, tabulated reference values, MAC rate
//! regions and a Blahut-Arimoto solver for discretized channels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::math;
use crate::reference;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    Exact,
    Lower,
    Upper,
    ReferenceTable,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Exact => "exact",
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
            BoundKind::ReferenceTable => "reference_table",
        }
    }
}

/// A capacity value in nats with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    pub kind: BoundKind,
    pub source: String,
}

impl BoundValue {
    fn new(value: f64, kind: BoundKind, source: impl Into<String>) -> Self {
        Self {
            value,
            kind,
            source: source.into(),
        }
    }
}

fn nonneg(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite and >= 0"))
    }
}

/// `½ ln(1 + P)`.
pub fn awgn_capacity(p: f64) -> Result<BoundValue> {
    nonneg("P", p)?;
    Ok(BoundValue::new(0.5 * math::ln1p(p), BoundKind::Exact, "awgn: 0.5 ln(1+P)"))
}

/// `½ ln(1 + A²/(2πe σ²))`, valid for a mean-to-peak ratio in `[½, 1]`.
pub fn oi_lower(a: f64, sigma: f64) -> Result<BoundValue> {
    if !(a > 0.0) || !(sigma > 0.0) {
        return Err(Error::invalid("A", "peak and noise level must be > 0"));
    }
    let v = 0.5 * math::ln1p(a * a / (2.0 * PI * E * sigma * sigma));
    Ok(BoundValue::new(v, BoundKind::Lower, "oi: 0.5 ln(1 + A^2/(2 pi e sigma^2))"))
}

fn table_source(id: &str, key: f64) -> String {
    format!("{id} v{} @ {key} dB", reference::TABLES_VERSION)
}

/// Tabulated `(lower, upper)` pair for the optical-intensity channel.
pub fn oi_reference_bounds(snr_db: f64) -> Result<(BoundValue, BoundValue)> {
    let row = reference::OI_BOUNDS
        .iter()
        .find(|r| (r.0 - snr_db).abs() < 1e-9)
        .ok_or_else(|| Error::Untabulated(format!("oi at {snr_db} dB (tabulated: 3, 5, 8, 10, 15, 20 dB)")))?;
    let src = table_source(reference::OI_TABLE_ID, snr_db);
    Ok((
        BoundValue::new(row.1, BoundKind::ReferenceTable, src.clone()),
        BoundValue::new(row.2, BoundKind::ReferenceTable, src),
    ))
}

/// Tabulated `(lower, upper)` pair for the peak-constrained AWGN channel.
pub fn ppc_reference_bounds(snr_db: f64) -> Result<(BoundValue, BoundValue)> {
    let row = reference::PPC_BOUNDS
        .iter()
        .find(|r| (r.0 - snr_db).abs() < 1e-9)
        .ok_or_else(|| Error::Untabulated(format!("ppc at {snr_db} dB")))?;
    let src = table_source(reference::PPC_TABLE_ID, snr_db);
    Ok((
        BoundValue::new(row.1, BoundKind::ReferenceTable, src.clone()),
        BoundValue::new(row.2, BoundKind::ReferenceTable, src),
    ))
}

/// `min{ln(1 + √(2P/(πe))), ½ ln(1 + P)}` with `A = √P`.
pub fn ppc_upper(p: f64) -> Result<BoundValue> {
    nonneg("P", p)?;
    let a = math::ln1p(math::sqrt(2.0 * p / (PI * E)));
    let b = 0.5 * math::ln1p(p);
    Ok(BoundValue::new(
        a.min(b),
        BoundKind::Upper,
        "ppc: min{ln(1+sqrt(2P/(pi e))), 0.5 ln(1+P)}",
    ))
}

/// `β ln(2P/(πe)) + H₂(β)` with `β = ½ − Q(2√P)`, valid for `P` in `[2, 6]` dB.
pub fn kramer_upper(p: f64) -> Result<BoundValue> {
    nonneg("P", p)?;
    let db = math::linear_to_db(p);
    if !(2.0 - 1e-9..=6.0 + 1e-9).contains(&db) {
        return Err(Error::OutOfRange {
            what: "P_dB",
            value: db,
            lo: 2.0,
            hi: 6.0,
        });
    }
    let beta = 0.5 - math::normal_tail(2.0 * math::sqrt(p));
    let v = beta * math::ln(2.0 * p / (PI * E)) + math::binary_entropy(beta);
    Ok(BoundValue::new(v, BoundKind::Upper, "ppc: beta ln(2P/(pi e)) + H2(beta)"))
}

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
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive 7/15-point Gauss-Kronrod integration to absolute tolerance `tol`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(b > a) {
        return Err(Error::invalid("interval", "need a < b"));
    }
    let width = b - a;
    let mut stack = alloc::vec![(a, b, 0u32)];
    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut failed = false;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&mut f, lo, hi);
        let budget = tol * (hi - lo) / width;
        if err <= budget || depth >= 48 {
            failed |= err > budget;
            total += v;
            err_total += err;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    if failed && err_total > tol {
        return Err(Error::Quadrature {
            achieved: err_total,
            tol,
        });
    }
    Ok(total)
}

/// `h(Y) − ½ ln(2πe)` for `Y = X + Z`, `X` uniform on `m` equispaced points of
/// `[−A, A]` and `Z` standard normal.
pub fn ppc_lower_m(p: f64, m: usize) -> Result<f64> {
    nonneg("P", p)?;
    if m == 0 {
        return Err(Error::invalid("M", "need at least one mass point"));
    }
    if m == 1 || p == 0.0 {
        return Ok(0.0);
    }
    let a = math::sqrt(p);
    let points: Vec<f64> = (0..m).map(|k| -a + 2.0 * a * k as f64 / (m - 1) as f64).collect();
    let inv = 1.0 / m as f64;
    let integrand = |y: f64| {
        let f: f64 = points.iter().map(|&x| math::normal_pdf(y - x)).sum::<f64>() * inv;
        if f > 0.0 {
            -f * math::ln(f)
        } else {
            0.0
        }
    };
    let h = integrate(integrand, -a - 8.0, a + 8.0, 1e-8)?;
    Ok(h - 0.5 * math::ln(2.0 * PI * E))
}

/// Best `ppc_lower_m` over `2..=max_m` mass points.
pub fn ppc_lower(p: f64, max_m: usize) -> Result<BoundValue> {
    if max_m < 2 {
        return Ok(BoundValue::new(ppc_lower_m(p, 1)?, BoundKind::Lower, "ppc: M=1 mixture entropy"));
    }
    let mut best = (f64::NEG_INFINITY, 2);
    for m in 2..=max_m {
        let v = ppc_lower_m(p, m)?;
        if v > best.0 {
            best = (v, m);
        }
    }
    Ok(BoundValue::new(
        best.0,
        BoundKind::Lower,
        format!("ppc: M={} uniform mixture entropy", best.1),
    ))
}

/// Tabulated lower bound for the Poisson channel at peak `A`.
pub fn poisson_reference_bounds(ecal_db: f64, a: f64, dark_current: f64) -> Result<BoundValue> {
    poisson_table(reference::POISSON_LOWER, reference::POISSON_TABLE_ID, ecal_db, a, dark_current)
}

/// Tabulated deterministic-annealing rate for the Poisson channel.
pub fn poisson_annealing_reference(ecal_db: f64, a: f64, dark_current: f64) -> Result<BoundValue> {
    poisson_table(reference::POISSON_DA, reference::POISSON_DA_TABLE_ID, ecal_db, a, dark_current)
}

fn poisson_table(table: [(f64, f64, f64); 8], id: &str, ecal_db: f64, a: f64, dark: f64) -> Result<BoundValue> {
    let untabulated = || Error::Untabulated(format!("poisson at Ecal={ecal_db} dB, A={a}, dark current={dark}"));
    if (a - reference::POISSON_PEAK).abs() > 1e-9 {
        return Err(untabulated());
    }
    let v = reference::lookup3(&table, ecal_db, dark).ok_or_else(untabulated)?;
    Ok(BoundValue::new(
        v,
        BoundKind::ReferenceTable,
        format!("{id} v{} @ {ecal_db} dB, A={a}, dark current={dark}", reference::TABLES_VERSION),
    ))
}

/// Boundary vertices of a two-user rate region, from `(0, R2max)` to
/// `(R1max, 0)`. The origin closes the polygon and is not listed.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRegion {
    pub vertices: Vec<(f64, f64)>,
}

impl RateRegion {
    /// The pentagon `R1 ≤ c1, R2 ≤ c2, R1 + R2 ≤ sum`; negative inputs count as 0.
    pub fn pentagon(c1: f64, c2: f64, sum: f64) -> Self {
        let (c1, c2, sum) = (c1.max(0.0), c2.max(0.0), sum.max(0.0));
        let top = c2.min(sum);
        let right = c1.min(sum);
        let raw = [
            (0.0, top),
            (c1.min(sum - top), top),
            (right, top.min(sum - right)),
            (right, 0.0),
        ];
        let mut vertices: Vec<(f64, f64)> = Vec::with_capacity(4);
        for v in raw {
            if vertices.last() != Some(&v) {
                vertices.push(v);
            }
        }
        Self { vertices }
    }

    pub fn r1_max(&self) -> f64 {
        self.vertices.iter().map(|v| v.0).fold(0.0, f64::max)
    }

    pub fn r2_max(&self) -> f64 {
        self.vertices.iter().map(|v| v.1).fold(0.0, f64::max)
    }

    pub fn sum_rate(&self) -> f64 {
        self.vertices.iter().map(|v| v.0 + v.1).fold(0.0, f64::max)
    }

    /// Whether `(r1, r2)` lies in the region enlarged by `tol` on every constraint.
    pub fn contains(&self, r1: f64, r2: f64, tol: f64) -> bool {
        r1 >= -tol && r2 >= -tol && r1 <= self.r1_max() + tol && r2 <= self.r2_max() + tol && r1 + r2 <= self.sum_rate() + tol
    }

    /// The same region with the users swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            vertices: self.vertices.iter().rev().map(|&(a, b)| (b, a)).collect(),
        }
    }
}

/// Capacity region of the two-user AWGN MAC with unit noise.
pub fn awgn_mac_region(p1: f64, p2: f64) -> Result<RateRegion> {
    nonneg("P1", p1)?;
    nonneg("P2", p2)?;
    Ok(RateRegion::pentagon(
        0.5 * math::ln1p(p1),
        0.5 * math::ln1p(p2),
        0.5 * math::ln1p(p1 + p2),
    ))
}

/// Outer region of the optical-intensity MAC under mean constraints,
/// `½ ln(e/(2π)(Ecal + 2)²)` per user and for the sum.
pub fn oi_mac_region(e1: f64, e2: f64) -> Result<RateRegion> {
    nonneg("E1", e1)?;
    nonneg("E2", e2)?;
    let f = |s: f64| 0.5 * math::ln(E / (2.0 * PI) * (s + 2.0) * (s + 2.0));
    Ok(RateRegion::pentagon(f(e1), f(e2), f(e1 + e2)))
}

/// Rate of the truncated exponential law on `[0, A]` with the given mean.
fn truncated_exp_rate(a: f64, mean: f64) -> Result<f64> {
    if !(a > 0.0) || !(mean > 0.0) || !(mean < a) {
        return Err(Error::invalid("mean", "need 0 < mean < A"));
    }
    if (mean - 0.5 * a).abs() < 1e-12 {
        return Ok(0.0);
    }
    // The mean is decreasing in the rate μ; it equals A/2 at μ = 0.
    let mean_of = |mu: f64| {
        if mu.abs() < 1e-9 {
            0.5 * a
        } else {
            1.0 / mu - a / math::expm1(mu * a)
        }
    };
    let (mut lo, mut hi) = if mean < 0.5 * a { (0.0, 1.0) } else { (-1.0, 0.0) };
    while mean_of(hi) > mean {
        hi *= 2.0;
    }
    while mean_of(lo) < mean {
        lo *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_of(mid) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Density of `X + Z`, `X` truncated exponential with rate `mu` on `[0, a]`
/// and `Z ~ N(0, σ²)`.
fn trunc_exp_plus_noise(y: f64, a: f64, mu: f64, sigma: f64) -> f64 {
    let t = y / sigma;
    let m = mu * sigma;
    let b = a / sigma;
    if mu.abs() < 1e-12 {
        return (math::normal_cdf(t) - math::normal_cdf(t - b)) / a;
    }
    // ∫₀ᵇ m e^{−m u} φ(t − u) du / (1 − e^{−m b}), scaled back by 1/σ.
    let mass = -math::expm1(-m * b);
    let shift = t - m;
    let window = math::normal_cdf(shift) - math::normal_cdf(shift - b);
    if window <= 0.0 {
        return 0.0;
    }
    m * math::exp(-m * t + 0.5 * m * m) * window / mass / sigma
}

fn differential_entropy(density: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    integrate(
        |y| {
            let f = density(y);
            if f > 0.0 {
                -f * math::ln(f)
            } else {
                0.0
            }
        },
        lo,
        hi,
        1e-8,
    )
}

/// Achievable region of the optical-intensity MAC with independent truncated
/// exponential inputs on `[0, A_i]` with means `Ecal_i` and noise `σ`.
pub fn oi_mac_inner_region(a1: f64, e1: f64, a2: f64, e2: f64, sigma: f64) -> Result<RateRegion> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "must be > 0"));
    }
    let mu1 = truncated_exp_rate(a1, e1)?;
    let mu2 = truncated_exp_rate(a2, e2)?;
    let hz = 0.5 * math::ln(2.0 * PI * E * sigma * sigma);
    let pad = 10.0 * sigma;
    let h1 = differential_entropy(|y| trunc_exp_plus_noise(y, a1, mu1, sigma), -pad, a1 + pad)?;
    let h2 = differential_entropy(|y| trunc_exp_plus_noise(y, a2, mu2, sigma), -pad, a2 + pad)?;
    let mass2 = -math::expm1(-mu2 * a2);
    let p2 = |x: f64| {
        if mu2.abs() < 1e-12 {
            1.0 / a2
        } else {
            mu2 * math::exp(-mu2 * x) / mass2
        }
    };
    let sum_density = |y: f64| {
        integrate(|x| p2(x) * trunc_exp_plus_noise(y - x, a1, mu1, sigma), 0.0, a2, 1e-11).unwrap_or(f64::NAN)
    };
    let hs = differential_entropy(sum_density, -pad, a1 + a2 + pad)?;
    if !hs.is_finite() {
        return Err(Error::Quadrature { achieved: f64::NAN, tol: 1e-8 });
    }
    Ok(RateRegion::pentagon(h1 - hz, h2 - hz, hs - hz))
}

/// Row-stochastic channel matrix `W[x][y]` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ChannelMatrix {
    /// Validates that every row is a probability vector to within `1e-9`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "channel matrix",
                expected: alloc::vec![rows, cols],
                found: alloc::vec![data.len()],
            });
        }
        for (r, row) in data.chunks(cols).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotStochastic { row: r, sum });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("rows", "rows must have equal length"));
        }
        Self::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.cols..(x + 1) * self.cols]
    }
}

/// `n` equispaced points covering `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Poisson channel on the input grid, outputs truncated at the first count
/// whose upper tail is below `tail` for every input; the last column
/// collects the remaining mass.
pub fn poisson_channel_matrix(grid: &[f64], dark_current: f64, tail: f64) -> Result<ChannelMatrix> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    if let Some((index, &value)) = grid.iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(Error::NegativeInput { index, value });
    }
    nonneg("dark_current", dark_current)?;
    let lam_max = grid.iter().copied().fold(0.0, f64::max) + dark_current;
    let pmf = |lam: f64, y: usize| {
        if lam == 0.0 {
            if y == 0 { 1.0 } else { 0.0 }
        } else {
            math::exp(y as f64 * math::ln(lam) - lam - math::ln_gamma(y as f64 + 1.0))
        }
    };
    let mut cdf = 0.0;
    let mut y_max = 0;
    loop {
        cdf += pmf(lam_max, y_max);
        if 1.0 - cdf < tail || y_max > 100_000 {
            break;
        }
        y_max += 1;
    }
    let cols = y_max + 2;
    let mut data = Vec::with_capacity(grid.len() * cols);
    for &x in grid {
        let lam = x + dark_current;
        let mut acc = 0.0;
        for y in 0..cols - 1 {
            let p = pmf(lam, y);
            acc += p;
            data.push(p);
        }
        data.push((1.0 - acc).max(0.0));
    }
    // Renormalize away rounding in the tail column.
    for row in data.chunks_mut(cols) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
    }
    ChannelMatrix::new(grid.len(), cols, data)
}

/// Blahut-Arimoto rate of the Poisson channel with inputs restricted to
/// `points` equispaced values in `[0, A]`. Any input on the grid is feasible,
/// so the value is a lower bound on capacity at any iterate; iterations stop
/// once the duality gap falls below `1e-5` nats.
pub fn poisson_grid_capacity(peak: f64, mean_budget: Option<f64>, dark_current: f64, points: usize) -> Result<BoundValue> {
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::invalid("A", "peak must be finite and > 0"));
    }
    if points < 2 {
        return Err(Error::invalid("points", "need at least two grid points"));
    }
    let grid = uniform_grid(0.0, peak, points);
    let w = poisson_channel_matrix(&grid, dark_current, 1e-9)?;
    let constraint = mean_budget.map(|budget| CostConstraint { cost: &grid, budget });
    let r = blahut_arimoto(&w, constraint, 1e-5, 20_000)?;
    Ok(BoundValue::new(
        r.capacity,
        BoundKind::Lower,
        format!("blahut-arimoto on a {points}-point input grid"),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaResult {
    /// Mutual information of the returned input, nats.
    pub capacity: f64,
    pub input: Vec<f64>,
    pub iterations: usize,
    /// Final duality gap of the (Lagrangian) objective.
    pub gap: f64,
    /// Objective value at every iteration.
    pub objective: Vec<f64>,
    /// Lagrange multiplier of the cost constraint (0 when inactive).
    pub multiplier: f64,
    pub mean_cost: Option<f64>,
}

impl BaResult {
    pub fn is_monotone(&self) -> bool {
        self.objective
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0))
    }
}

/// Mean cost constraint `Σ p(x) c(x) ≤ budget`.
#[derive(Clone, Copy, Debug)]
pub struct CostConstraint<'a> {
    pub cost: &'a [f64],
    pub budget: f64,
}

/// `Σ_y W(y|x) ln W(y|x)` for every row.
fn row_neg_entropies(w: &ChannelMatrix) -> Vec<f64> {
    (0..w.rows)
        .map(|x| w.row(x).iter().filter(|&&v| v > 0.0).map(|&v| v * math::ln(v)).sum())
        .collect()
}

fn divergences(w: &ChannelMatrix, neg_h: &[f64], p: &[f64], d: &mut [f64]) {
    let mut q = alloc::vec![0.0; w.cols];
    for (x, &px) in p.iter().enumerate() {
        for (qy, &wxy) in q.iter_mut().zip(w.row(x)) {
            *qy += px * wxy;
        }
    }
    // An output no input reaches gets a finite floor so zero entries stay zero.
    let ln_q: Vec<f64> = q.iter().map(|&v| math::ln(v.max(f64::MIN_POSITIVE))).collect();
    for (x, dx) in d.iter_mut().enumerate() {
        let cross: f64 = w.row(x).iter().zip(&ln_q).map(|(&wxy, &l)| wxy * l).sum();
        *dx = neg_h[x] - cross;
    }
}

/// Blahut-Arimoto iterations for `max I(p) − s Σ p c` from `p`.
fn ba_fixed(w: &ChannelMatrix, cost: &[f64], s: f64, p: &mut [f64], tol: f64, max_iter: usize, history: &mut Vec<f64>) -> (f64, f64, usize) {
    let mut d = alloc::vec![0.0; w.rows];
    let neg_h = row_neg_entropies(w);
    let mut it = 0;
    loop {
        divergences(w, &neg_h, p, &mut d);
        let info: f64 = p.iter().zip(&d).map(|(a, b)| a * b).sum();
        let pen: f64 = p.iter().zip(cost).map(|(a, c)| a * c).sum();
        let objective = info - s * pen;
        let upper = d.iter().zip(cost).map(|(dx, c)| dx - s * c).fold(f64::NEG_INFINITY, f64::max);
        let gap = upper - objective;
        history.push(objective);
        debug_assert!(history.len() < 2 || objective >= history[history.len() - 2] - 1e-12 * objective.abs().max(1.0));
        if gap <= tol || it >= max_iter {
            return (info, gap, it);
        }
        let shift = upper;
        let mut z = 0.0;
        for ((px, dx), c) in p.iter_mut().zip(&d).zip(cost) {
            *px *= math::exp(dx - s * c - shift);
            z += *px;
        }
        p.iter_mut().for_each(|px| *px /= z);
        it += 1;
    }
}

/// Capacity of a discrete memoryless channel, optionally under a mean cost
/// constraint (Lagrange multiplier found by bisection).
pub fn blahut_arimoto(w: &ChannelMatrix, constraint: Option<CostConstraint<'_>>, tol: f64, max_iter: usize) -> Result<BaResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let zero = alloc::vec![0.0; w.rows];
    let (cost, budget) = match constraint {
        Some(c) => {
            if c.cost.len() != w.rows {
                return Err(Error::ShapeMismatch {
                    context: "cost vector",
                    expected: alloc::vec![w.rows],
                    found: alloc::vec![c.cost.len()],
                });
            }
            if c.cost.iter().copied().fold(f64::INFINITY, f64::min) > c.budget {
                return Err(Error::InfeasibleConstraint(format!("budget {} below every cost", c.budget)));
            }
            (c.cost, Some(c.budget))
        }
        None => (&zero[..], None),
    };
    let mean_cost = |p: &[f64]| p.iter().zip(cost).map(|(a, c)| a * c).sum::<f64>();
    let uniform = alloc::vec![1.0 / w.rows as f64; w.rows];

    let mut p = uniform.clone();
    let mut history = Vec::new();
    let (info, gap, iters) = ba_fixed(w, cost, 0.0, &mut p, tol, max_iter, &mut history);
    let budget = match budget {
        Some(b) if mean_cost(&p) > b + 1e-12 => b,
        _ => {
            let mc = budget.map(|_| mean_cost(&p));
            return Ok(BaResult {
                capacity: info,
                input: p,
                iterations: iters,
                gap,
                objective: history,
                multiplier: 0.0,
                mean_cost: mc,
            });
        }
    };

    // Bisection runs at a looser tolerance; the final multiplier is re-solved
    // at the requested one.
    let coarse = tol.max(1e-5);
    let search_iters = max_iter.min(5_000);
    let solve = |s: f64, start: &[f64], tol: f64, iters: usize| {
        let mut p = start.to_vec();
        let mut h = Vec::new();
        let (info, gap, it) = ba_fixed(w, cost, s, &mut p, tol, iters, &mut h);
        (p, info, gap, it, h)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut best = solve(hi, &uniform, coarse, search_iters);
    while mean_cost(&best.0) > budget {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InfeasibleConstraint("multiplier search diverged".into()));
        }
        best = solve(hi, &best.0, coarse, search_iters);
    }
    for _ in 0..60 {
        if hi - lo <= 1e-7 * hi.max(1.0) || (budget - mean_cost(&best.0)) <= 1e-6 * budget.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let trial = solve(mid, &best.0, coarse, search_iters);
        if mean_cost(&trial.0) > budget {
            lo = mid;
        } else {
            hi = mid;
            best = trial;
        }
    }
    if best.2 > tol {
        let refined = solve(hi, &best.0, tol, max_iter);
        if mean_cost(&refined.0) <= budget + 1e-9 {
            best = refined;
        }
    }
    let mc = mean_cost(&best.0);
    Ok(BaResult {
        capacity: best.1,
        input: best.0,
        iterations: best.3,
        gap: best.2,
        objective: best.4,
        multiplier: hi,
        mean_cost: Some(mc),
    })
}
