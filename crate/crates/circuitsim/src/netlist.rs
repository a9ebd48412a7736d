//! Circuit description: nodes, lumped elements and time-varying sources.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// The reference node.
pub const GROUND: NodeId = 0;

/// Lowest impedance a closed switch may have.
pub const SWITCH_FLOOR: f64 = 1e-3;

/// Sum of sinusoids `amp * sin(2 pi f t + phase)` plus an optional step
/// that is zero before `t_on`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceWave {
    pub sinusoids: Vec<Sinusoid>,
    pub step: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl SourceWave {
    pub fn sinusoids(sinusoids: Vec<Sinusoid>) -> Self {
        Self {
            sinusoids,
            step: None,
        }
    }

    pub fn sine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self::sinusoids(vec![Sinusoid {
            amplitude,
            frequency,
            phase,
        }])
    }

    /// `amplitude` for `t >= t_on`, zero before.
    pub fn step(amplitude: f64, t_on: f64) -> Self {
        Self {
            sinusoids: Vec::new(),
            step: Some((amplitude, t_on)),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut v: f64 = self
            .sinusoids
            .iter()
            .map(|s| s.amplitude * (2.0 * PI * s.frequency * t + s.phase).sin())
            .sum();
        if let Some((a, t_on)) = self.step {
            if t >= t_on {
                v += a;
            }
        }
        v
    }
}

/// A value that switches once at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    /// Series R-L branch; `l = 0` is a resistor, `r = 0` an inductor.
    /// The optional steps change the values with the current kept continuous.
    Rl {
        r: f64,
        l: f64,
        r_step: Option<Step>,
        l_step: Option<Step>,
    },
    /// Voltage source, positive terminal `a`.
    VoltageSource { wave: SourceWave },
    /// Ideal transformer `v(a) - v(b) = ratio * (v(c) - v(d))`. The branch
    /// current flows into `a`; the current into `c` is `-ratio` times it.
    /// The ratio may ramp linearly to `ramp.value` over `[ramp.time, ramp_end]`.
    IdealTransformer {
        ratio: f64,
        ramp: Option<(Step, f64)>,
    },
    /// Open until `close_time`, then a resistor of `r_closed`.
    Switch { close_time: f64, r_closed: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub a: NodeId,
    pub b: NodeId,
    /// Second port of an ideal transformer; unused otherwise.
    pub c: NodeId,
    pub d: NodeId,
    pub kind: ElementKind,
}

impl Element {
    pub fn is_branch_variable(&self) -> bool {
        matches!(
            self.kind,
            ElementKind::VoltageSource { .. } | ElementKind::IdealTransformer { .. }
        )
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        match self.kind {
            ElementKind::IdealTransformer { .. } => vec![self.a, self.b, self.c, self.d],
            _ => vec![self.a, self.b],
        }
    }
}

pub type ElementId = usize;

/// Linear circuit with node 0 as ground.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Netlist {
    node_names: Vec<String>,
    elements: Vec<Element>,
}

impl Netlist {
    pub fn new() -> Self {
        Self {
            node_names: vec!["gnd".to_string()],
            elements: Vec::new(),
        }
    }

    pub fn node(&mut self, name: impl Into<String>) -> NodeId {
        self.node_names.push(name.into());
        self.node_names.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn node_name(&self, n: NodeId) -> &str {
        &self.node_names[n]
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        self.node_names.iter().position(|n| n == name)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: ElementId) -> &Element {
        &self.elements[id]
    }

    pub fn element_mut(&mut self, id: ElementId) -> &mut Element {
        &mut self.elements[id]
    }

    pub fn find_element(&self, name: &str) -> Option<ElementId> {
        self.elements.iter().position(|e| e.name == name)
    }

    fn push(&mut self, name: impl Into<String>, a: NodeId, b: NodeId, kind: ElementKind) -> ElementId {
        self.elements.push(Element {
            name: name.into(),
            a,
            b,
            c: GROUND,
            d: GROUND,
            kind,
        });
        self.elements.len() - 1
    }

    pub fn rl(&mut self, name: impl Into<String>, a: NodeId, b: NodeId, r: f64, l: f64) -> ElementId {
        self.push(
            name,
            a,
            b,
            ElementKind::Rl {
                r,
                l,
                r_step: None,
                l_step: None,
            },
        )
    }

    pub fn resistor(&mut self, name: impl Into<String>, a: NodeId, b: NodeId, r: f64) -> ElementId {
        self.rl(name, a, b, r, 0.0)
    }

    pub fn inductor(&mut self, name: impl Into<String>, a: NodeId, b: NodeId, l: f64) -> ElementId {
        self.rl(name, a, b, 0.0, l)
    }

    pub fn voltage_source(
        &mut self,
        name: impl Into<String>,
        a: NodeId,
        b: NodeId,
        wave: SourceWave,
    ) -> ElementId {
        self.push(name, a, b, ElementKind::VoltageSource { wave })
    }

    pub fn ideal_transformer(
        &mut self,
        name: impl Into<String>,
        (a, b): (NodeId, NodeId),
        (c, d): (NodeId, NodeId),
        ratio: f64,
    ) -> ElementId {
        let id = self.push(name, a, b, ElementKind::IdealTransformer { ratio, ramp: None });
        self.elements[id].c = c;
        self.elements[id].d = d;
        id
    }

    /// Switch closing at `close_time`; `r_closed` is raised to the floor.
    pub fn switch(
        &mut self,
        name: impl Into<String>,
        a: NodeId,
        b: NodeId,
        close_time: f64,
        r_closed: f64,
    ) -> ElementId {
        self.push(
            name,
            a,
            b,
            ElementKind::Switch {
                close_time,
                r_closed: r_closed.max(SWITCH_FLOOR),
            },
        )
    }

    /// Schedules new R and L values for an RL element.
    pub fn set_rl_step(&mut self, id: ElementId, time: f64, r: f64, l: f64) -> Result<()> {
        match &mut self.elements[id].kind {
            ElementKind::Rl { r_step, l_step, .. } => {
                *r_step = Some(Step { time, value: r });
                *l_step = Some(Step { time, value: l });
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "element {} is not an RL branch",
                self.elements[id].name
            ))),
        }
    }

    /// Ramps an ideal transformer's ratio linearly over `[start, end]`.
    pub fn set_ratio_ramp(&mut self, id: ElementId, start: f64, end: f64, ratio: f64) -> Result<()> {
        if end < start {
            return Err(Error::Config("ratio ramp ends before it starts".into()));
        }
        match &mut self.elements[id].kind {
            ElementKind::IdealTransformer { ramp, .. } => {
                *ramp = Some((Step { time: start, value: ratio }, end));
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "element {} is not an ideal transformer",
                self.elements[id].name
            ))),
        }
    }

    /// Checks element values and that every node has a path to ground.
    pub fn validate(&self) -> Result<()> {
        for e in &self.elements {
            for n in e.nodes() {
                if n >= self.node_count() {
                    return Err(Error::Topology(format!("element {} uses unknown node {n}", e.name)));
                }
            }
            let bad = |what: &str| Error::Config(format!("element {}: {what}", e.name));
            match &e.kind {
                ElementKind::Rl { r, l, r_step, l_step } => {
                    let ok = |r: f64, l: f64| r >= 0.0 && l >= 0.0 && r + l > 0.0 && (r + l).is_finite();
                    if !ok(*r, *l) {
                        return Err(bad("R and L must be >= 0, finite, not both zero"));
                    }
                    let r2 = r_step.map_or(*r, |s| s.value);
                    let l2 = l_step.map_or(*l, |s| s.value);
                    if !ok(r2, l2) || (*l == 0.0) != (l2 == 0.0) {
                        return Err(bad("stepped values invalid or change inductive character"));
                    }
                }
                ElementKind::IdealTransformer { ratio, ramp } => {
                    if !(*ratio > 0.0 && ratio.is_finite()) || ramp.is_some_and(|(s, _)| s.value <= 0.0) {
                        return Err(bad("ratio must be positive"));
                    }
                }
                ElementKind::Switch { r_closed, .. } => {
                    if *r_closed < SWITCH_FLOOR {
                        return Err(bad("closed resistance below floor"));
                    }
                }
                ElementKind::VoltageSource { .. } => {}
            }
        }
        // union-find connectivity over all element terminals
        let mut parent: Vec<usize> = (0..self.node_count()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        let join = |p: &mut Vec<usize>, x: usize, y: usize| {
            let (rx, ry) = (find(p, x), find(p, y));
            p[rx] = ry;
        };
        for e in &self.elements {
            if matches!(e.kind, ElementKind::Switch { .. }) {
                continue;
            }
            join(&mut parent, e.a, e.b);
            if let ElementKind::IdealTransformer { .. } = e.kind {
                join(&mut parent, e.c, e.d);
            }
        }
        let g = find(&mut parent, GROUND);
        for n in 1..self.node_count() {
            if find(&mut parent, n) != g {
                return Err(Error::Topology(format!(
                    "node {} has no path to ground",
                    self.node_names[n]
                )));
            }
        }
        Ok(())
    }
}

/// What to record during a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// `v(a) - v(b)`.
    Voltage(NodeId, NodeId),
    /// Signed sum of element currents (current flows from `a` to `b`
    /// through RL and switch elements, into `a` for branch variables).
    Current(Vec<(ElementId, f64)>),
}

impl Probe {
    pub fn current(id: ElementId) -> Self {
        Probe::Current(vec![(id, 1.0)])
    }
}
