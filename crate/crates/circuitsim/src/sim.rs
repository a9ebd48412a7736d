//! Fixed-step transient analysis with trapezoidal companion models.
//!
//! Every RL branch becomes a conductance `G` in parallel with a history
//! current source. After a discontinuity (switch closing, R/L step, ratio
//! jump) the step is taken as two backward-Euler half steps, which damps the
//! spurious two-step oscillation the trapezoidal rule would otherwise keep.
//! For a series RL branch the backward-Euler half step has the same `G` as
//! the trapezoidal step, so the nodal matrix needs no extra factorization.

use num_complex::Complex64;

use mvtwin_core::SampledWaveform;

use crate::error::{Error, Result};
use crate::lu::SparseLu;
use crate::netlist::{ElementId, ElementKind, Netlist, NodeId, Probe, SourceWave};
use crate::phasor::{ratio_at, rl_at, solve_phasor, source_frequencies, switch_closed_at, Layout};

/// Default internal step (1 MHz).
pub const DEFAULT_DT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// All inductor currents and node voltages start at zero.
    Zero,
    /// Periodic steady state of the circuit as it is at t = 0.
    SteadyState,
}

#[derive(Debug, Clone, Copy)]
struct RlState {
    r: f64,
    l: f64,
    g: f64,
    i: f64,
    v: f64,
}

impl RlState {
    fn new(r: f64, l: f64, dt: f64) -> Self {
        let g = if l == 0.0 { 1.0 / r } else { 0.5 * dt / (l + 0.5 * r * dt) };
        Self { r, l, g, i: 0.0, v: 0.0 }
    }

    /// History current for a trapezoidal step of length `dt`.
    fn hist_trap(&self, dt: f64) -> f64 {
        if self.l == 0.0 {
            return 0.0;
        }
        let h = 0.5 * self.r * dt;
        self.g * self.v + self.i * (self.l - h) / (self.l + h)
    }

    /// History current for a backward-Euler step of length `dt / 2`.
    fn hist_be_half(&self, dt: f64) -> f64 {
        if self.l == 0.0 {
            return 0.0;
        }
        self.l * self.i / (self.l + 0.5 * self.r * dt)
    }
}

/// Incremental evaluation of a sum of sinusoids on the step grid.
#[derive(Debug, Clone)]
struct Rotors {
    amps: Vec<f64>,
    z: Vec<Complex64>,
    rot: Vec<Complex64>,
    wave: SourceWave,
}

impl Rotors {
    fn new(wave: &SourceWave, t0: f64, dt: f64) -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        Self {
            amps: wave.sinusoids.iter().map(|s| s.amplitude).collect(),
            z: wave
                .sinusoids
                .iter()
                .map(|s| Complex64::from_polar(1.0, tau * s.frequency * t0 + s.phase))
                .collect(),
            rot: wave
                .sinusoids
                .iter()
                .map(|s| Complex64::from_polar(1.0, tau * s.frequency * dt))
                .collect(),
            wave: wave.clone(),
        }
    }

    /// Moves one step forward and returns the value there.
    fn advance(&mut self, t: f64, renormalize: bool) -> f64 {
        let mut v = 0.0;
        for k in 0..self.z.len() {
            let mut z = self.z[k] * self.rot[k];
            if renormalize {
                z /= z.norm();
            }
            self.z[k] = z;
            v += self.amps[k] * z.im;
        }
        if let Some((a, t_on)) = self.wave.step {
            if t >= t_on {
                v += a;
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy)]
enum Stamp {
    Rl { ia: Option<usize>, ib: Option<usize> },
    Branch { row: usize },
    None,
}

/// A transient simulation in progress.
#[derive(Debug, Clone)]
pub struct Simulator {
    net: Netlist,
    lay: Layout,
    dt: f64,
    step: u64,
    x: Vec<f64>,
    rhs: Vec<f64>,
    rl: Vec<Option<RlState>>,
    stamps: Vec<Stamp>,
    rotors: Vec<Option<Rotors>>,
    /// Values at the current step of each voltage source.
    source_now: Vec<f64>,
    switch_closed: Vec<bool>,
    ratios: Vec<f64>,
    lu: SparseLu,
    /// (step index, needs damping) of pending discrete events.
    events: Vec<(u64, bool)>,
    next_event: usize,
    ramp_steps: Vec<(u64, u64)>,
}

fn event_step(t: f64, dt: f64) -> u64 {
    if t <= 0.0 {
        0
    } else {
        (t / dt).round() as u64
    }
}

impl Simulator {
    pub fn new(net: Netlist, dt: f64, init: Init) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        net.validate()?;
        let lay = Layout::new(&net);
        let ne = net.elements().len();
        let mut rl = vec![None; ne];
        let mut stamps = vec![Stamp::None; ne];
        let mut rotors = vec![None; ne];
        let mut switch_closed = vec![false; ne];
        let mut ratios = vec![0.0; ne];
        let mut events = Vec::new();
        let mut ramp_steps = Vec::new();
        for (k, e) in net.elements().iter().enumerate() {
            let (ia, ib) = (lay.idx(e.a), lay.idx(e.b));
            match &e.kind {
                ElementKind::Rl { r_step, l_step, .. } => {
                    let (r, l) = rl_at(&e.kind, 0.0).unwrap_or_default();
                    rl[k] = Some(RlState::new(r, l, dt));
                    stamps[k] = Stamp::Rl { ia, ib };
                    for s in [r_step, l_step].into_iter().flatten() {
                        if s.time > 0.0 {
                            events.push((event_step(s.time, dt), true));
                        }
                    }
                }
                ElementKind::Switch { close_time, .. } => {
                    stamps[k] = Stamp::Rl { ia, ib };
                    switch_closed[k] = *close_time <= 0.0;
                    if *close_time > 0.0 {
                        events.push((event_step(*close_time, dt), true));
                    }
                }
                ElementKind::VoltageSource { wave } => {
                    stamps[k] = Stamp::Branch {
                        row: lay.branch_of[k].expect("source has a branch"),
                    };
                    rotors[k] = Some(Rotors::new(wave, 0.0, dt));
                    if let Some((amp, t_on)) = wave.step {
                        if amp != 0.0 {
                            events.push((event_step(t_on, dt), true));
                        }
                    }
                }
                ElementKind::IdealTransformer { ramp, .. } => {
                    stamps[k] = Stamp::Branch {
                        row: lay.branch_of[k].expect("transformer has a branch"),
                    };
                    ratios[k] = ratio_at(&e.kind, 0.0).unwrap_or(1.0);
                    if let Some((s, end)) = ramp {
                        let (a, b) = (event_step(s.time, dt), event_step(*end, dt));
                        if b <= a {
                            events.push((a, true));
                        } else {
                            ramp_steps.push((a, b));
                        }
                    }
                }
            }
        }
        events.sort();
        events.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 |= a.1;
                true
            } else {
                false
            }
        });
        let dim = lay.dim;
        let mut sim = Self {
            lu: SparseLu::factor(vec![1.0], 1, &|_| String::new())?,
            net,
            lay,
            dt,
            step: 0,
            x: vec![0.0; dim],
            rhs: vec![0.0; dim],
            rl,
            stamps,
            rotors,
            source_now: vec![0.0; ne],
            switch_closed,
            ratios,
            events,
            next_event: 0,
            ramp_steps,
        };
        sim.refactor()?;
        for (k, e) in sim.net.elements().iter().enumerate() {
            if let ElementKind::VoltageSource { wave } = &e.kind {
                sim.source_now[k] = wave.value(0.0);
            }
        }
        match init {
            Init::Zero => {}
            Init::SteadyState => sim.init_steady_state()?,
        }
        Ok(sim)
    }

    fn init_steady_state(&mut self) -> Result<()> {
        for e in self.net.elements() {
            if let ElementKind::VoltageSource { wave } = &e.kind {
                if wave.step.is_some_and(|(a, t_on)| t_on <= 0.0 && a != 0.0) {
                    return Err(Error::Config(format!(
                        "source {} has a DC part at t = 0; steady-state start unsupported",
                        e.name
                    )));
                }
            }
        }
        self.x.iter_mut().for_each(|v| *v = 0.0);
        for st in self.rl.iter_mut().flatten() {
            st.i = 0.0;
            st.v = 0.0;
        }
        for f in source_frequencies(&self.net) {
            let sol = solve_phasor(&self.net, f, 0.0, Some(self.dt))?;
            // value at t = 0 of Im(P e^{jwt})
            for n in 1..self.net.node_count() {
                self.x[n - 1] += sol.node_voltages[n].im;
            }
            for (k, e) in self.net.elements().iter().enumerate() {
                if let Some(br) = self.lay.branch_of[k] {
                    self.x[br] += sol.element_currents[k].im;
                }
                if let Some(st) = self.rl[k].as_mut() {
                    st.i += sol.element_currents[k].im;
                    st.v += sol.voltage(e.a, e.b).im;
                }
            }
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.lay.dim;
        let mut a = vec![0.0; n * n];
        for (k, e) in self.net.elements().iter().enumerate() {
            match self.stamps[k] {
                Stamp::Rl { ia, ib } => {
                    let g = match &self.rl[k] {
                        Some(st) => st.g,
                        None if self.switch_closed[k] => match e.kind {
                            ElementKind::Switch { r_closed, .. } => 1.0 / r_closed,
                            _ => 0.0,
                        },
                        None => continue,
                    };
                    if let Some(i) = ia {
                        a[i * n + i] += g;
                    }
                    if let Some(j) = ib {
                        a[j * n + j] += g;
                    }
                    if let (Some(i), Some(j)) = (ia, ib) {
                        a[i * n + j] -= g;
                        a[j * n + i] -= g;
                    }
                }
                Stamp::Branch { row } => {
                    let mut put = |node: NodeId, v: f64| {
                        if let Some(i) = self.lay.idx(node) {
                            a[i * n + row] += v;
                            a[row * n + i] += v;
                        }
                    };
                    put(e.a, 1.0);
                    put(e.b, -1.0);
                    if let ElementKind::IdealTransformer { .. } = e.kind {
                        let m = self.ratios[k];
                        put(e.c, -m);
                        put(e.d, m);
                    }
                }
                Stamp::None => {}
            }
        }
        let net = &self.net;
        let lay = &self.lay;
        self.lu = SparseLu::factor(a, n, &|k| lay.label(net, k))?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn netlist(&self) -> &Netlist {
        &self.net
    }

    pub fn node_voltage(&self, n: NodeId) -> f64 {
        self.lay.idx(n).map_or(0.0, |i| self.x[i])
    }

    pub fn voltage(&self, a: NodeId, b: NodeId) -> f64 {
        self.node_voltage(a) - self.node_voltage(b)
    }

    /// Current from `a` to `b` through RL branches and switches, into `a`
    /// for sources and transformers (primary side).
    pub fn element_current(&self, id: ElementId) -> f64 {
        let e = self.net.element(id);
        if let Some(st) = &self.rl[id] {
            return st.i;
        }
        if let Some(br) = self.lay.branch_of[id] {
            return self.x[br];
        }
        match e.kind {
            ElementKind::Switch { r_closed, .. } if self.switch_closed[id] => {
                self.voltage(e.a, e.b) / r_closed
            }
            _ => 0.0,
        }
    }

    pub fn ratio(&self, id: ElementId) -> f64 {
        self.ratios[id]
    }

    pub fn probe(&self, p: &Probe) -> f64 {
        match p {
            Probe::Voltage(a, b) => self.voltage(*a, *b),
            Probe::Current(terms) => terms.iter().map(|(id, s)| s * self.element_current(*id)).sum(),
        }
    }

    /// Applies events scheduled for the current step; returns whether any
    /// calls for damping.
    fn apply_events(&mut self) -> Result<bool> {
        let mut damp = false;
        let mut changed = false;
        while self.next_event < self.events.len() && self.events[self.next_event].0 <= self.step {
            damp |= self.events[self.next_event].1;
            self.next_event += 1;
            changed = true;
        }
        if !changed {
            return Ok(false);
        }
        // evaluate parameters just after the event time
        let t = (self.step as f64 + 0.5) * self.dt;
        for (k, e) in self.net.elements().iter().enumerate() {
            if let (Some(st), Some((r, l))) = (self.rl[k].as_mut(), rl_at(&e.kind, t)) {
                if r != st.r || l != st.l {
                    let mut fresh = RlState::new(r, l, self.dt);
                    fresh.i = st.i;
                    fresh.v = st.v;
                    *st = fresh;
                }
            }
            if switch_closed_at(&e.kind, t).is_some() {
                self.switch_closed[k] = true;
            }
            if let Some(m) = ratio_at(&e.kind, t) {
                self.ratios[k] = m;
            }
        }
        self.refactor()?;
        Ok(damp)
    }

    fn ramp_active(&self, next: u64) -> bool {
        self.ramp_steps.iter().any(|&(a, b)| next > a && next <= b)
    }

    fn solve_at(&mut self, source_vals: &[f64], be_half: bool) {
        self.rhs.iter_mut().for_each(|v| *v = 0.0);
        for (k, e) in self.net.elements().iter().enumerate() {
            match self.stamps[k] {
                Stamp::Rl { ia, ib } => {
                    if let Some(st) = &self.rl[k] {
                        let h = if be_half {
                            st.hist_be_half(self.dt)
                        } else {
                            st.hist_trap(self.dt)
                        };
                        if let Some(i) = ia {
                            self.rhs[i] -= h;
                        }
                        if let Some(j) = ib {
                            self.rhs[j] += h;
                        }
                    }
                }
                Stamp::Branch { row } => {
                    if let ElementKind::VoltageSource { .. } = e.kind {
                        self.rhs[row] = source_vals[k];
                    }
                }
                Stamp::None => {}
            }
        }
        let mut x = std::mem::take(&mut self.x);
        self.lu.solve(&self.rhs, &mut x);
        self.x = x;
        for (k, e) in self.net.elements().iter().enumerate() {
            if let Some(st) = self.rl[k].as_mut() {
                let v = self.lay.idx(e.a).map_or(0.0, |i| self.x[i])
                    - self.lay.idx(e.b).map_or(0.0, |i| self.x[i]);
                let h = if be_half {
                    st.hist_be_half(self.dt)
                } else {
                    st.hist_trap(self.dt)
                };
                st.i = st.g * v + h;
                st.v = v;
            }
        }
    }

    /// Advances one step of `dt`.
    pub fn step(&mut self) -> Result<()> {
        let damp = self.apply_events()?;
        let next = self.step + 1;
        let t_next = next as f64 * self.dt;
        if self.ramp_active(next) {
            for (k, e) in self.net.elements().iter().enumerate() {
                if let Some(m) = ratio_at(&e.kind, t_next) {
                    self.ratios[k] = m;
                }
            }
            self.refactor()?;
        }
        let renorm = next.is_multiple_of(4096);
        let mut vals = std::mem::take(&mut self.source_now);
        if damp {
            let t_half = (self.step as f64 + 0.5) * self.dt;
            for (k, e) in self.net.elements().iter().enumerate() {
                if let ElementKind::VoltageSource { wave } = &e.kind {
                    vals[k] = wave.value(t_half);
                }
            }
            self.solve_at(&vals, true);
        }
        for (k, r) in self.rotors.iter_mut().enumerate() {
            if let Some(r) = r {
                vals[k] = r.advance(t_next, renorm);
            }
        }
        self.solve_at(&vals, damp);
        self.source_now = vals;
        self.step = next;
        Ok(())
    }

    /// Largest KCL residual over non-ground nodes, relative to the largest
    /// element current.
    pub fn kcl_residual(&self) -> f64 {
        let mut sum = vec![0.0; self.net.node_count()];
        let mut largest = 0.0f64;
        for (k, e) in self.net.elements().iter().enumerate() {
            let i = self.element_current(k);
            largest = largest.max(i.abs());
            sum[e.a] += i;
            sum[e.b] -= i;
            if let ElementKind::IdealTransformer { .. } = e.kind {
                let j = -self.ratios[k] * i;
                largest = largest.max(j.abs());
                sum[e.c] += j;
                sum[e.d] -= j;
            }
        }
        let worst = sum[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if largest == 0.0 {
            worst
        } else {
            worst / largest
        }
    }
}

/// Recorded probe waveforms at the internal step, starting at t = 0.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub dt: f64,
    pub probes: Vec<SampledWaveform>,
}

/// Runs `net` for `duration` seconds and records the probes at every step
/// (including t = 0).
pub fn simulate(net: &Netlist, dt: f64, duration: f64, init: Init, probes: &[Probe]) -> Result<SimResult> {
    let steps = (duration / dt).round() as usize;
    if steps == 0 {
        return Err(Error::Config("duration shorter than one step".into()));
    }
    let mut sim = Simulator::new(net.clone(), dt, init)?;
    let mut rec: Vec<Vec<f64>> = probes.iter().map(|_| Vec::with_capacity(steps + 1)).collect();
    for (r, p) in rec.iter_mut().zip(probes) {
        r.push(sim.probe(p));
    }
    for _ in 0..steps {
        sim.step()?;
        for (r, p) in rec.iter_mut().zip(probes) {
            r.push(sim.probe(p));
        }
    }
    let fs = 1.0 / dt;
    let probes = rec
        .into_iter()
        .map(|v| SampledWaveform::new(fs, 0.0, v))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SimResult { dt, probes })
}
