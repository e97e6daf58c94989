//! Numerical kernels: adaptive quadrature, the upper incomplete gamma
//! function for arbitrary real order, a bracketed 1-D minimizer and a
//! truncated summation of non-negative series.

use crate::error::{Error, Result};

// 15-point Kronrod abscissae (non-negative half) and weights, with the
// embedded 7-point Gauss weights for the odd-indexed abscissae.
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gauss_kronrod_15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod integration of `f` over the finite
/// interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Quadrature {
    const MAX_INTERVALS: usize = 400;
    if a == b {
        return Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        };
    }
    let (v, e) = gauss_kronrod_15(&mut f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    let mut evaluations = 15;
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || pieces.len() >= MAX_INTERVALS {
            return Quadrature {
                value: total,
                error: err,
                evaluations,
            };
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval can no longer be split in floating point
            pieces.push((lo, hi, v, 0.0));
            continue;
        }
        let (v1, e1) = gauss_kronrod_15(&mut f, lo, mid);
        let (v2, e2) = gauss_kronrod_15(&mut f, mid, hi);
        evaluations += 30;
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// `J(a, x) = ∫_0^∞ (1+u)^(a-1) e^(-x u) du`, so that
/// `Γ(a, x) = x^a e^(-x) J(a, x)` (substitution `s = x (1 + u)`).
///
/// Integrated panel by panel: widths start at the local decay length and
/// double, with forced panel edges at `s = 1` and at the integrand's peak.
pub fn scaled_gamma_integral(a: f64, x: f64) -> Result<f64> {
    const PANEL_TOL: f64 = 1e-10;
    const MAX_PANELS: usize = 4000;
    let am1 = a - 1.0;
    let integrand = |u: f64| (am1 * u.ln_1p() - x * u).exp();

    let mut edges: Vec<f64> = Vec::with_capacity(2);
    if x < 1.0 {
        edges.push(1.0 / x - 1.0); // s = 1
    }
    if am1 > 0.0 {
        let peak = am1 / x - 1.0;
        if peak > 0.0 {
            edges.push(peak);
        }
    }
    edges.retain(|e| e.is_finite() && *e > 0.0);
    edges.sort_by(f64::total_cmp);
    let last_edge = edges.last().copied().unwrap_or(0.0);

    let mut width = 1.0 / (x + am1.abs());
    if !width.is_finite() {
        width = 1.0;
    }
    let mut lo = 0.0;
    let mut total = 0.0;
    let mut next_edge = 0;
    for _ in 0..MAX_PANELS {
        let mut hi = lo + width;
        if next_edge < edges.len() && hi >= edges[next_edge] {
            hi = edges[next_edge];
            next_edge += 1;
            if hi <= lo {
                continue;
            }
        }
        let q = integrate(integrand, lo, hi, PANEL_TOL, 0.0);
        total += q.value;
        lo = hi;
        width *= 2.0;
        if lo >= last_edge && (q.value <= 1e-14 * total || total == 0.0 && integrand(lo) == 0.0) {
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Domain(format!(
                    "incomplete gamma integral vanished for a={a}, x={x}"
                )));
            }
            return Ok(total);
        }
    }
    Err(Error::Domain(format!(
        "incomplete gamma integral did not settle for a={a}, x={x}"
    )))
}

/// Natural log of the upper incomplete gamma function `Γ(a, x)`, `x > 0`,
/// any real `a`.
pub fn ln_upper_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("upper incomplete gamma needs x > 0, got {x}")));
    }
    if !a.is_finite() {
        return Err(Error::Domain(format!("non-finite order {a}")));
    }
    let j = scaled_gamma_integral(a, x)?;
    Ok(a * x.ln() - x + j.ln())
}

/// `Γ(a, x) = ∫_x^∞ s^(a-1) e^(-s) ds` for `x > 0` and any real `a`.
/// Overflows to `inf` when the value exceeds `f64` range.
pub fn upper_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    ln_upper_incomplete_gamma(a, x).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpacing {
    Linear,
    /// Uniform in `ln t`; requires a strictly positive bracket.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub spacing: GridSpacing,
}

impl Bracket {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Bracket {
            lo,
            hi,
            spacing: GridSpacing::Linear,
        }
    }

    pub fn logarithmic(lo: f64, hi: f64) -> Self {
        Bracket {
            lo,
            hi,
            spacing: GridSpacing::Logarithmic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerOptions {
    pub grid_points: usize,
    /// Final bracket width: absolute in `t` for linear spacing, in `ln t`
    /// (i.e. relative) for logarithmic spacing.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        MinimizerOptions {
            grid_points: 100,
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerResult {
    pub argmin: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The minimum sits against a bracket edge; the true minimizer may lie
    /// outside the bracket.
    pub at_boundary: bool,
}

/// Minimizes `objective` over the open bracket: a grid scan over interior
/// points followed by golden-section refinement around the best grid
/// point. The returned value never exceeds any grid value.
pub fn minimize_over_t<F: FnMut(f64) -> f64>(
    mut objective: F,
    bracket: Bracket,
    opts: &MinimizerOptions,
) -> Result<MinimizerResult> {
    let Bracket { lo, hi, spacing } = bracket;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || lo < 0.0 {
        return Err(Error::invalid(format!("bad bracket [{lo}, {hi}]")));
    }
    if spacing == GridSpacing::Logarithmic && lo <= 0.0 {
        return Err(Error::invalid("logarithmic bracket needs lo > 0"));
    }
    if opts.grid_points < 3 {
        return Err(Error::invalid("minimizer needs at least 3 grid points"));
    }
    let (to_t, y_lo, y_hi): (fn(f64) -> f64, f64, f64) = match spacing {
        GridSpacing::Linear => (|y| y, lo, hi),
        GridSpacing::Logarithmic => (f64::exp, lo.ln(), hi.ln()),
    };
    let mut eval = |y: f64| {
        let v = objective(to_t(y));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let n = opts.grid_points;
    let step = (y_hi - y_lo) / n as f64;
    let grid_y = |i: usize| y_lo + step * (i as f64 + 0.5);
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..n {
        let v = eval(grid_y(i));
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    if !best_v.is_finite() && best_v > 0.0 {
        return Err(Error::NonFiniteObjective { lo, hi });
    }

    let mut a = if best_i == 0 { y_lo } else { grid_y(best_i - 1) };
    let mut b = if best_i + 1 == n { y_hi } else { grid_y(best_i + 1) };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    let mut best_y = grid_y(best_i);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        if (b - a).abs() <= opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    let mut ends = vec![(y_hi, eval(y_hi))];
    if lo > 0.0 {
        ends.push((y_lo, eval(y_lo)));
    }
    for (y, v) in [(c, fc), (d, fd)].into_iter().chain(ends) {
        if v < best_v {
            best_v = v;
            best_y = y;
        }
    }
    let edge_tol = opts.tolerance.max(1e-12 * (y_hi - y_lo));
    let at_boundary = (best_y - y_lo) <= step + edge_tol || (y_hi - best_y) <= step + edge_tol;
    Ok(MinimizerResult {
        argmin: to_t(best_y),
        value: best_v,
        iterations,
        converged,
        at_boundary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub rel_tol: f64,
    pub max_terms: u64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            rel_tol: 1e-6,
            max_terms: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    /// Index of the last term added.
    pub terms: u64,
}

/// Sums `term(1) + term(2) + ...` of a non-negative series, stopping after
/// the first term with `term(n) <= rel_tol * partial_sum`.
pub fn truncated_series_sum<F: FnMut(u64) -> f64>(mut term: F, opts: &SeriesOptions) -> Result<SeriesSum> {
    let mut sum = 0.0;
    for n in 1..=opts.max_terms {
        let t = term(n);
        if t.is_nan() || t < 0.0 {
            return Err(Error::Domain(format!(
                "series term {n} is {t}; terms must be non-negative"
            )));
        }
        sum += t;
        if t <= opts.rel_tol * sum {
            return Ok(SeriesSum { value: sum, terms: n });
        }
    }
    Err(Error::NonConvergence {
        partial: sum,
        terms: opts.max_terms,
    })
}
