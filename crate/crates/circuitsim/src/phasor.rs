//! Sinusoidal steady state by complex nodal analysis.
//!
//! Phasors use the sine convention: a phasor `P` at angular frequency w
//! stands for `Im(P e^{jwt})`, so a source `A sin(wt + phi)` has phasor
//! `A e^{j phi}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netlist::{Element, ElementKind, Netlist, NodeId, GROUND};

/// Index layout of the nodal unknowns: node voltages (ground eliminated)
/// followed by one current per voltage source and ideal transformer.
#[derive(Debug, Clone)]
pub struct Layout {
    pub nodes: usize,
    pub branch_of: Vec<Option<usize>>,
    pub dim: usize,
}

impl Layout {
    pub fn new(net: &Netlist) -> Self {
        let nodes = net.node_count() - 1;
        let mut next = nodes;
        let branch_of = net
            .elements()
            .iter()
            .map(|e| {
                e.is_branch_variable().then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self {
            nodes,
            branch_of,
            dim: next,
        }
    }

    #[inline]
    pub fn idx(&self, n: NodeId) -> Option<usize> {
        (n != GROUND).then(|| n - 1)
    }

    pub fn label(&self, net: &Netlist, k: usize) -> String {
        if k < self.nodes {
            format!("v({})", net.node_name(k + 1))
        } else {
            let e = self.branch_of.iter().position(|b| *b == Some(k)).unwrap_or(0);
            format!("i({})", net.element(e).name)
        }
    }
}

/// Values of the time-varying element parameters at time `t`.
pub fn rl_at(kind: &ElementKind, t: f64) -> Option<(f64, f64)> {
    match kind {
        ElementKind::Rl { r, l, r_step, l_step } => {
            let r = r_step.filter(|s| t >= s.time).map_or(*r, |s| s.value);
            let l = l_step.filter(|s| t >= s.time).map_or(*l, |s| s.value);
            Some((r, l))
        }
        _ => None,
    }
}

pub fn ratio_at(kind: &ElementKind, t: f64) -> Option<f64> {
    match kind {
        ElementKind::IdealTransformer { ratio, ramp } => Some(match ramp {
            None => *ratio,
            Some((s, end)) => {
                if t < s.time {
                    *ratio
                } else if t >= *end {
                    s.value
                } else {
                    ratio + (s.value - ratio) * (t - s.time) / (end - s.time)
                }
            }
        }),
        _ => None,
    }
}

pub fn switch_closed_at(kind: &ElementKind, t: f64) -> Option<f64> {
    match kind {
        ElementKind::Switch { close_time, r_closed } => (t >= *close_time).then_some(*r_closed),
        _ => None,
    }
}

/// Impedance of a series RL branch. With `dt` given, the inductive part is
/// the one the trapezoidal rule realizes, so the phasor solution is also the
/// exact periodic steady state of the discretized circuit.
pub fn rl_impedance(r: f64, l: f64, omega: f64, dt: Option<f64>) -> Complex64 {
    let x = match dt {
        Some(dt) => 2.0 / dt * (omega * dt / 2.0).tan() * l,
        None => omega * l,
    };
    Complex64::new(r, x)
}

#[derive(Debug, Clone)]
pub struct PhasorSolution {
    pub frequency: f64,
    /// Indexed by node id; ground is zero.
    pub node_voltages: Vec<Complex64>,
    /// Current through each element from `a` to `b` (into `a` for branch
    /// variables); zero for open switches.
    pub element_currents: Vec<Complex64>,
}

impl PhasorSolution {
    pub fn voltage(&self, a: NodeId, b: NodeId) -> Complex64 {
        self.node_voltages[a] - self.node_voltages[b]
    }
}

fn source_phasor(e: &Element, frequency: f64) -> Complex64 {
    match &e.kind {
        ElementKind::VoltageSource { wave } => wave
            .sinusoids
            .iter()
            .filter(|s| (s.frequency - frequency).abs() <= 1e-9 * frequency.max(1.0))
            .map(|s| Complex64::from_polar(s.amplitude, s.phase))
            .sum(),
        _ => Complex64::new(0.0, 0.0),
    }
}

/// Solves the circuit at one frequency with element states frozen at time `t`.
pub fn solve_phasor(net: &Netlist, frequency: f64, t: f64, dt: Option<f64>) -> Result<PhasorSolution> {
    if !(frequency > 0.0) {
        return Err(Error::Config("phasor analysis needs a positive frequency".into()));
    }
    let lay = Layout::new(net);
    let n = lay.dim;
    let omega = 2.0 * PI * frequency;
    let zero = Complex64::new(0.0, 0.0);
    let mut a = vec![zero; n * n];
    let mut b = vec![zero; n];
    let add = |a: &mut Vec<Complex64>, r: Option<usize>, c: Option<usize>, v: Complex64| {
        if let (Some(r), Some(c)) = (r, c) {
            a[r * n + c] += v;
        }
    };
    let mut admittances = vec![None; net.elements().len()];
    for (k, e) in net.elements().iter().enumerate() {
        let (ia, ib) = (lay.idx(e.a), lay.idx(e.b));
        let y = if let Some((r, l)) = rl_at(&e.kind, t) {
            Some(rl_impedance(r, l, omega, dt).inv())
        } else {
            switch_closed_at(&e.kind, t).map(|r| Complex64::new(1.0 / r, 0.0))
        };
        if let Some(y) = y {
            add(&mut a, ia, ia, y);
            add(&mut a, ib, ib, y);
            add(&mut a, ia, ib, -y);
            add(&mut a, ib, ia, -y);
            admittances[k] = Some(y);
            continue;
        }
        let Some(br) = lay.branch_of[k] else { continue };
        let one = Complex64::new(1.0, 0.0);
        add(&mut a, ia, Some(br), one);
        add(&mut a, ib, Some(br), -one);
        add(&mut a, Some(br), ia, one);
        add(&mut a, Some(br), ib, -one);
        if let Some(ratio) = ratio_at(&e.kind, t) {
            let (ic, id) = (lay.idx(e.c), lay.idx(e.d));
            let m = Complex64::new(ratio, 0.0);
            add(&mut a, ic, Some(br), -m);
            add(&mut a, id, Some(br), m);
            add(&mut a, Some(br), ic, -m);
            add(&mut a, Some(br), id, m);
        } else {
            b[br] = source_phasor(e, frequency);
        }
    }
    let x = complex_solve(a, b, n).map_err(|k| {
        Error::Topology(format!("singular phasor matrix at {}", lay.label(net, k)))
    })?;
    let mut node_voltages = vec![zero; net.node_count()];
    node_voltages[1..].copy_from_slice(&x[..lay.nodes]);
    let element_currents = net
        .elements()
        .iter()
        .enumerate()
        .map(|(k, e)| match (admittances[k], lay.branch_of[k]) {
            (Some(y), _) => y * (node_voltages[e.a] - node_voltages[e.b]),
            (None, Some(br)) => x[br],
            _ => zero,
        })
        .collect();
    Ok(PhasorSolution {
        frequency,
        node_voltages,
        element_currents,
    })
}

/// Gaussian elimination with partial pivoting; on failure returns the
/// index of the unknown without a usable pivot.
pub fn complex_solve(mut a: Vec<Complex64>, mut b: Vec<Complex64>, n: usize) -> std::result::Result<Vec<Complex64>, usize> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    for k in 0..n {
        let p = (k..n)
            .max_by(|&r, &s| a[r * n + k].norm().total_cmp(&a[s * n + k].norm()))
            .unwrap_or(k);
        if a[p * n + k].norm() <= scale * 1e-18 {
            return Err(k);
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let d = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / d;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in k..n {
                let u = a[k * n + c];
                a[r * n + c] -= f * u;
            }
            let bk = b[k];
            b[r] -= f * bk;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r * n + c] * x[c];
        }
        x[r] = s / a[r * n + r];
    }
    Ok(x)
}

/// Distinct positive source frequencies, ascending.
pub fn source_frequencies(net: &Netlist) -> Vec<f64> {
    let mut f: Vec<f64> = net
        .elements()
        .iter()
        .filter_map(|e| match &e.kind {
            ElementKind::VoltageSource { wave } => Some(wave.sinusoids.iter().map(|s| s.frequency)),
            _ => None,
        })
        .flatten()
        .filter(|f| *f > 0.0)
        .collect();
    f.sort_by(f64::total_cmp);
    f.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.max(1.0));
    f
}
