use alloc::format;
use alloc::string::String;
use core::fmt::Write;

use super::{Circuit, ElementKind};
use crate::media::StubMode;
use crate::units::{format_angle, format_value as v};

/// Renders a circuit back to netlist text; `parse(render(c))` reproduces `c`.
pub fn render(circuit: &Circuit) -> String {
    let mut out = String::new();
    let node = |id| circuit.node_name(id);
    if !circuit.title.is_empty() {
        let _ = writeln!(out, ".title {}", circuit.title);
    }
    if let Some(s) = &circuit.substrate {
        let _ = writeln!(
            out,
            ".substrate er={} tand={} h={} t={} sigma={}",
            v(s.eps_r),
            v(s.tan_delta),
            v(s.height),
            v(s.metal_thickness),
            v(s.conductivity)
        );
    }
    let o = &circuit.options;
    if o.harmonics.is_some() || o.stub_mode.is_some() || o.breakdown.is_some() {
        out.push_str(".options");
        if let Some(k) = o.harmonics {
            let _ = write!(out, " k={k}");
        }
        if let Some(mode) = o.stub_mode {
            out.push_str(match mode {
                StubMode::Bessel => " stub=bessel",
                StubMode::Capacitor => " stub=cap",
            });
        }
        if let Some(b) = o.breakdown {
            out.push_str(if b { " breakdown=on" } else { " breakdown=off" });
        }
        out.push('\n');
    }
    for (name, m) in &circuit.models {
        let _ = write!(
            out,
            ".model {name} diode is={} rs={} n={} cj0={} vj={} m={} fc={} ibv={} temp={}",
            v(m.is),
            v(m.rs),
            v(m.n),
            v(m.cj0),
            v(m.vj),
            v(m.m),
            v(m.fc),
            v(m.ibv),
            v(m.temp)
        );
        if let Some(bv) = m.bv {
            let _ = write!(out, " bv={}", v(bv));
        }
        out.push('\n');
    }
    for p in &circuit.ports {
        let _ = writeln!(
            out,
            ".port P{} {} {} z0={}",
            p.index,
            node(p.pos),
            node(p.neg),
            v(p.z0)
        );
    }
    for e in &circuit.elements {
        let (a, b) = (node(e.nodes[0]), node(e.nodes[1]));
        let line = match &e.kind {
            ElementKind::Resistor(x) | ElementKind::Inductor(x) | ElementKind::Capacitor(x) => {
                format!("{} {a} {b} {}", e.name, v(*x))
            }
            ElementKind::Microstrip { width, length } => {
                format!("MLIN {} {a} {b} w={} l={}", e.name, v(*width), v(*length))
            }
            ElementKind::RadialStub { ri, ro, angle } => format!(
                "MRSTUB {} {a} ri={} ro={} ang={}",
                e.name,
                v(*ri),
                v(*ro),
                format_angle(*angle)
            ),
            ElementKind::Diode { model } => format!("{} {a} {b} model={model}", e.name),
        };
        out.push_str(&line);
        out.push('\n');
    }
    for o in &circuit.outputs {
        let _ = writeln!(out, ".output {} {}", node(o.node), o.load);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{parse, Circuit};

    #[test]
    fn empty_circuit_renders_directives_only() {
        let mut c = Circuit::new();
        c.title = "empty".into();
        let text = render(&c);
        assert!(text.lines().all(|l| l.starts_with('.')));
        assert_eq!(parse(&text).unwrap(), c);
    }

    #[test]
    fn load_value_forms_agree() {
        for text in ["R1 out 0 14k\n", "R1 out 0 14000\n"] {
            let c = parse(text).unwrap();
            assert_eq!(render(&c), "R1 out 0 14000\n");
        }
    }
}
