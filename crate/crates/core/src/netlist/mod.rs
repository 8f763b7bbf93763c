//! Circuit representation, netlist parsing and rendering.
//!
//! ```text
//! * comment
//! .title <text>
//! .substrate er=<f> tand=<f> h=<len> t=<len> sigma=<f>
//! .options k=<int> stub=bessel|cap breakdown=on|off
//! .port P<k> <n+> <n-> z0=<ohms>
//! .model <name> diode is=<A> rs=<ohm> n=<f> cj0=<F> vj=<V> m=<f> [bv=<V>] [ibv=<A>] [fc=<f>]
//! .output <node> <load element>
//! R|L|C<name> <n1> <n2> <value>
//! MLIN <name> <n1> <n2> w=<len> l=<len>
//! MRSTUB <name> <n1> ri=<len> ro=<len> ang=<deg>
//! D<name> <anode> <cathode> model=<name>
//! ```
//!
//! Keywords, parameter keys and unit suffixes are case-insensitive; node and
//! element names are not. A trailing `\` joins a line with the next one.

mod parse;
mod render;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::devices::DiodeModel;
use crate::media::{StubMode, SubstrateSpec};
use crate::{Error, Result};

pub use parse::parse;
pub use render::render;

/// Index into [`Circuit::nodes`]; `0` is ground.
pub type NodeId = usize;
pub const GROUND: NodeId = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor(f64),
    Inductor(f64),
    Capacitor(f64),
    Microstrip { width: f64, length: f64 },
    /// Radial stub from `nodes[0]` to ground; `angle` in radians.
    RadialStub { ri: f64, ro: f64, angle: f64 },
    Diode { model: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    /// Terminals; for a diode `[anode, cathode]`, for a radial stub `[node, GROUND]`.
    pub nodes: [NodeId; 2],
}

impl Element {
    pub fn is_distributed(&self) -> bool {
        matches!(
            self.kind,
            ElementKind::Microstrip { .. } | ElementKind::RadialStub { .. }
        )
    }

    /// Reads a named parameter (`r`, `l`, `c`, `value`, `w`, `l`, `ri`, `ro`, `ang`).
    pub fn param(&self, key: &str) -> Option<f64> {
        let key = key.to_ascii_lowercase();
        match (&self.kind, key.as_str()) {
            (ElementKind::Resistor(v), "r" | "value")
            | (ElementKind::Inductor(v), "l" | "value")
            | (ElementKind::Capacitor(v), "c" | "value") => Some(*v),
            (ElementKind::Microstrip { width, .. }, "w") => Some(*width),
            (ElementKind::Microstrip { length, .. }, "l") => Some(*length),
            (ElementKind::RadialStub { ri, .. }, "ri") => Some(*ri),
            (ElementKind::RadialStub { ro, .. }, "ro") => Some(*ro),
            (ElementKind::RadialStub { angle, .. }, "ang") => Some(*angle),
            _ => None,
        }
    }

    /// Writes a named parameter; returns `false` if the key does not apply.
    pub fn set_param(&mut self, key: &str, value: f64) -> bool {
        let key = key.to_ascii_lowercase();
        let slot = match (&mut self.kind, key.as_str()) {
            (ElementKind::Resistor(v), "r" | "value")
            | (ElementKind::Inductor(v), "l" | "value")
            | (ElementKind::Capacitor(v), "c" | "value") => v,
            (ElementKind::Microstrip { width, .. }, "w") => width,
            (ElementKind::Microstrip { length, .. }, "l") => length,
            (ElementKind::RadialStub { ri, .. }, "ri") => ri,
            (ElementKind::RadialStub { ro, .. }, "ro") => ro,
            (ElementKind::RadialStub { angle, .. }, "ang") => angle,
            _ => return false,
        };
        *slot = value;
        true
    }

    fn check(&self) -> core::result::Result<(), String> {
        let name = &self.name;
        match &self.kind {
            ElementKind::Resistor(v) | ElementKind::Inductor(v) | ElementKind::Capacitor(v) => {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(format!("element `{name}`: value must be > 0"));
                }
            }
            ElementKind::Microstrip { width, length } => {
                if !(*width > 0.0 && *length > 0.0) {
                    return Err(format!("element `{name}`: MLIN w and l must be > 0"));
                }
            }
            ElementKind::RadialStub { ri, ro, angle } => {
                if !(*ri >= 0.0 && *ro > *ri) {
                    return Err(format!("element `{name}`: MRSTUB needs ro > ri >= 0"));
                }
                if !(*angle > 0.0 && *angle <= PI) {
                    return Err(format!("element `{name}`: MRSTUB angle must lie in (0, 180] deg"));
                }
            }
            ElementKind::Diode { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortSpec {
    /// 1-based port number.
    pub index: usize,
    pub pos: NodeId,
    pub neg: NodeId,
    /// Real reference impedance (Ω).
    pub z0: f64,
}

/// DC output designation: the node whose DC voltage is V_Odc and the load
/// element whose resistance enters the efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub node: NodeId,
    pub load: String,
}

/// Solver settings carried by the `.options` directive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOptions {
    pub harmonics: Option<usize>,
    pub stub_mode: Option<StubMode>,
    pub breakdown: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub title: String,
    /// Node names; `nodes[0]` is always `"0"`.
    pub nodes: Vec<String>,
    pub elements: Vec<Element>,
    pub ports: Vec<PortSpec>,
    pub substrate: Option<SubstrateSpec>,
    pub models: BTreeMap<String, DiodeModel>,
    pub outputs: Vec<OutputSpec>,
    pub options: SimOptions,
}

impl Default for Circuit {
    fn default() -> Self {
        Self::new()
    }
}

impl Circuit {
    /// Empty circuit containing only the ground node.
    pub fn new() -> Self {
        Self {
            title: String::new(),
            nodes: vec!["0".to_string()],
            elements: Vec::new(),
            ports: Vec::new(),
            substrate: None,
            models: BTreeMap::new(),
            outputs: Vec::new(),
            options: SimOptions::default(),
        }
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Returns the id of `name`, adding it if new.
    pub fn intern_node(&mut self, name: &str) -> NodeId {
        match self.node_id(name) {
            Some(id) => id,
            None => {
                self.nodes.push(name.to_string());
                self.nodes.len() - 1
            }
        }
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn element_mut(&mut self, name: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.name == name)
    }

    pub fn port(&self, index: usize) -> Option<&PortSpec> {
        self.ports.iter().find(|p| p.index == index)
    }

    pub fn diodes(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .iter()
            .filter(|e| matches!(e.kind, ElementKind::Diode { .. }))
    }

    pub fn has_diodes(&self) -> bool {
        self.diodes().next().is_some()
    }

    pub fn stub_mode(&self) -> StubMode {
        self.options.stub_mode.unwrap_or_default()
    }

    /// Diode model of `element`, with the circuit's breakdown option applied.
    pub fn diode_model(&self, element: &Element) -> Option<DiodeModel> {
        let ElementKind::Diode { model } = &element.kind else {
            return None;
        };
        let mut m = self.models.get(model)?.clone();
        m.breakdown = self.options.breakdown.unwrap_or(false);
        Some(m)
    }

    /// Output designation by load element name, or the first declared one.
    pub fn output(&self, load: Option<&str>) -> Option<&OutputSpec> {
        match load {
            Some(name) => self.outputs.iter().find(|o| o.load == name),
            None => self.outputs.first(),
        }
    }

    /// Sets `element.param` (e.g. `L3.l`); see [`Element::set_param`].
    pub fn set_param(&mut self, reference: &str, value: f64) -> Result<()> {
        let (elem, key) = split_reference(reference)?;
        let e = self
            .element_mut(elem)
            .ok_or_else(|| Error::UnknownTunable(reference.to_string()))?;
        if e.set_param(key, value) {
            Ok(())
        } else {
            Err(Error::UnknownTunable(reference.to_string()))
        }
    }

    pub fn get_param(&self, reference: &str) -> Result<f64> {
        let (elem, key) = split_reference(reference)?;
        self.element(elem)
            .and_then(|e| e.param(key))
            .ok_or_else(|| Error::UnknownTunable(reference.to_string()))
    }

    /// Checks every circuit invariant; the error names the violated rule.
    pub fn validate(&self) -> Result<()> {
        let fail = |rule: String| Err(Error::Invariant(rule));
        if self.nodes.first().map(String::as_str) != Some("0") {
            return fail("node 0 must be ground".into());
        }
        for e in &self.elements {
            e.check().or_else(fail)?;
            if let ElementKind::Diode { model } = &e.kind {
                if !self.models.contains_key(model) {
                    return Err(Error::UnresolvedModel {
                        element: e.name.clone(),
                        model: model.clone(),
                    });
                }
            }
        }
        for (i, e) in self.elements.iter().enumerate() {
            if self.elements[..i].iter().any(|o| o.name == e.name) {
                return fail(format!("duplicate element name `{}`", e.name));
            }
        }
        for (name, m) in &self.models {
            m.check()
                .or_else(|rule| fail(format!("model `{name}`: {rule}")))?;
        }
        if self.elements.iter().any(Element::is_distributed) {
            match &self.substrate {
                None => return fail("substrate required".into()),
                Some(s) => s.check().or_else(|r| fail(r.into()))?,
            }
        } else if let Some(s) = &self.substrate {
            s.check().or_else(|r| fail(r.into()))?;
        }
        self.check_ports()?;
        for o in &self.outputs {
            if o.node >= self.nodes.len() {
                return fail("output node does not exist".into());
            }
            match self.element(&o.load) {
                Some(Element {
                    kind: ElementKind::Resistor(_),
                    ..
                }) => {}
                _ => return fail(format!("output load `{}` must name a resistor", o.load)),
            }
        }
        if let Some(k) = self.options.harmonics {
            if k == 0 {
                return fail("options k must be >= 1".into());
            }
        }
        self.check_connectivity()
    }

    fn check_ports(&self) -> Result<()> {
        let fail = |rule: String| Err(Error::Invariant(rule));
        for p in &self.ports {
            if !(p.z0 > 0.0 && p.z0.is_finite()) {
                return fail(format!("port P{}: z0 must be > 0", p.index));
            }
            if p.pos == p.neg {
                return fail(format!("port P{}: terminals must differ", p.index));
            }
        }
        let mut indices: Vec<usize> = self.ports.iter().map(|p| p.index).collect();
        indices.sort_unstable();
        if indices.iter().enumerate().any(|(i, &k)| k != i + 1) {
            return fail("port indices must be contiguous from 1".into());
        }
        for (i, p) in self.ports.iter().enumerate() {
            let key = (p.pos.min(p.neg), p.pos.max(p.neg));
            if self.ports[..i]
                .iter()
                .any(|q| (q.pos.min(q.neg), q.pos.max(q.neg)) == key)
            {
                return fail(format!("node pair of port P{} used by another port", p.index));
            }
        }
        Ok(())
    }

    fn check_connectivity(&self) -> Result<()> {
        if self.elements.is_empty() && self.ports.is_empty() {
            return Ok(());
        }
        let n = self.nodes.len();
        let mut uf = UnionFind::new(n);
        let mut used = vec![false; n];
        for e in &self.elements {
            uf.union(e.nodes[0], e.nodes[1]);
            used[e.nodes[0]] = true;
            used[e.nodes[1]] = true;
        }
        for p in &self.ports {
            uf.union(p.pos, p.neg);
            used[p.pos] = true;
            used[p.neg] = true;
        }
        if !used[GROUND] {
            return Err(Error::Invariant("ground node 0 is not referenced".into()));
        }
        let g = uf.find(GROUND);
        for id in 1..n {
            if !used[id] || uf.find(id) != g {
                return Err(Error::Invariant(format!(
                    "node `{}` is not connected to ground",
                    self.nodes[id]
                )));
            }
        }
        Ok(())
    }
}

fn split_reference(reference: &str) -> Result<(&str, &str)> {
    reference
        .rsplit_once('.')
        .ok_or_else(|| Error::UnknownTunable(reference.to_string()))
}

/// Disjoint-set forest over node indices.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so ground stays representative
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
