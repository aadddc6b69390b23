//! Adaptive quadrature over panel decompositions.
//!
//! Integrands here are piecewise smooth with known breakpoints (distortion
//! jumps and kinks mapped into the integration variable). Every breakpoint
//! must be a panel boundary; adaptive Simpson then converges on each panel.

pub const ABS_TOL: f64 = 1e-9;
pub const REL_TOL: f64 = 1e-8;

const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy, Default)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
}

impl Integral {
    pub fn add(self, other: Integral) -> Integral {
        Integral {
            value: self.value + other.value,
            abs_error: self.abs_error + other.abs_error,
        }
    }
}

/// Integrates `f` over `[a, b]` split at the interior points of `breaks`.
///
/// `breaks` need not be sorted or in range; they are filtered and deduped.
/// Panel tolerances share the global budget evenly.
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Integral {
    if !(b > a) {
        return Integral::default();
    }
    let mut edges: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    edges.push(a);
    for &p in breaks {
        if p > a && p < b && p.is_finite() {
            edges.push(p);
        }
    }
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|x, y| (*x - *y).abs() <= f64::EPSILON * x.abs().max(y.abs()).max(1.0));

    // Coarse pass fixes the relative-tolerance scale before refinement.
    let mut coarse = 0.0;
    for w in edges.windows(2) {
        coarse += simpson_coarse(f, w[0], w[1]).abs();
    }
    let panels = (edges.len() - 1) as f64;
    let tol = abs_tol.max(rel_tol * coarse) / panels;

    let mut total = Integral::default();
    for w in edges.windows(2) {
        total = total.add(adaptive_panel(f, w[0], w[1], tol));
    }
    total
}

fn simpson_coarse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn adaptive_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Integral {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, fa, m, fm, b, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Integral {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 || (b - a) < f64::EPSILON * (a.abs() + b.abs()) {
        return Integral {
            value: left + right + delta / 15.0,
            abs_error: delta.abs() / 15.0,
        };
    }
    let half = 0.5 * tol;
    recurse(f, a, fa, lm, flm, m, fm, left, half, depth - 1).add(recurse(
        f,
        m,
        fm,
        rm,
        frm,
        b,
        fb,
        right,
        half,
        depth - 1,
    ))
}
