use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Circuit, Element, ElementKind, OutputSpec, PortSpec, SimOptions, GROUND};
use crate::devices::DiodeModel;
use crate::media::{StubMode, SubstrateSpec, DEFAULT_CONDUCTIVITY, DEFAULT_METAL_THICKNESS};
use crate::units::{parse_angle, parse_value};
use crate::{Error, Result};

/// A logical line after joining `\` continuations.
struct Line<'a> {
    number: usize,
    tokens: Vec<&'a str>,
}

fn syntax(line: usize, token: &str, msg: &str) -> Error {
    Error::Syntax {
        line,
        token: token.to_string(),
        msg: msg.to_string(),
    }
}

fn logical_lines(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim_end();
        let (body, continued) = match trimmed.strip_suffix('\\') {
            Some(b) => (b, true),
            None => (trimmed, false),
        };
        match pending.as_mut() {
            Some((_, acc)) => {
                acc.push(' ');
                acc.push_str(body);
            }
            None => pending = Some((i + 1, body.to_string())),
        }
        if !continued {
            out.extend(pending.take());
        }
    }
    out.extend(pending);
    out
}

/// `key=value` pairs after the positional tokens, keys lower-cased.
struct Params<'a> {
    line: usize,
    map: BTreeMap<String, &'a str>,
}

impl<'a> Params<'a> {
    fn new(line: usize, tokens: &[&'a str], allowed: &[&str]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| syntax(line, tok, "expected key=value"))?;
            let key = k.to_ascii_lowercase();
            if !allowed.contains(&key.as_str()) {
                return Err(syntax(line, tok, "unknown parameter"));
            }
            if v.is_empty() {
                return Err(syntax(line, tok, "missing value"));
            }
            if map.insert(key, v).is_some() {
                return Err(syntax(line, tok, "duplicate parameter"));
            }
        }
        Ok(Self { line, map })
    }

    fn value(&self, key: &str) -> Result<Option<f64>> {
        self.map
            .get(key)
            .map(|tok| parse_value(tok).ok_or_else(|| syntax(self.line, tok, "bad numeric value")))
            .transpose()
    }

    fn required(&self, key: &str, card: &str) -> Result<f64> {
        self.value(key)?
            .ok_or_else(|| syntax(self.line, card, &format!("missing `{key}=`")))
    }

    fn angle(&self, key: &str, card: &str) -> Result<f64> {
        let tok = self
            .map
            .get(key)
            .ok_or_else(|| syntax(self.line, card, &format!("missing `{key}=`")))?;
        parse_angle(tok).ok_or_else(|| syntax(self.line, tok, "bad angle"))
    }

    fn text(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).copied()
    }
}

struct PendingElement {
    name: String,
    kind: ElementKind,
    nodes: [String; 2],
}

struct PendingPort {
    index: usize,
    pos: String,
    neg: String,
    z0: f64,
}

fn expect_len(line: &Line, min: usize, max: usize, what: &str) -> Result<()> {
    let n = line.tokens.len();
    if n < min {
        let last = line.tokens.last().copied().unwrap_or("");
        return Err(syntax(line.number, last, &format!("{what}: too few fields")));
    }
    if n > max {
        return Err(syntax(line.number, line.tokens[max], &format!("{what}: unexpected field")));
    }
    Ok(())
}

fn lumped_value(line: &Line, card: &str) -> Result<f64> {
    let tok = line.tokens[3];
    parse_value(tok).ok_or_else(|| syntax(line.number, tok, &format!("{card}: bad value")))
}

fn on_off(line: usize, tok: &str) -> Result<bool> {
    match tok.to_ascii_lowercase().as_str() {
        "on" | "1" | "true" | "yes" => Ok(true),
        "off" | "0" | "false" | "no" => Ok(false),
        _ => Err(syntax(line, tok, "expected on|off")),
    }
}

/// Parses and validates a netlist.
pub fn parse(text: &str) -> Result<Circuit> {
    let owned = logical_lines(text);
    let mut circuit = Circuit::new();
    let mut elements: Vec<PendingElement> = Vec::new();
    let mut ports: Vec<PendingPort> = Vec::new();
    let mut outputs: Vec<(usize, String, String)> = Vec::new();
    let mut substrate_seen = false;

    for (number, body) in &owned {
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let Some(&head) = tokens.first() else {
            continue;
        };
        if head.starts_with('*') {
            continue;
        }
        let line = Line {
            number: *number,
            tokens,
        };
        let upper = head.to_ascii_uppercase();
        if let Some(directive) = upper.strip_prefix('.') {
            match directive {
                "TITLE" => {
                    let rest = body.trim_start();
                    circuit.title = rest[head.len()..].trim().to_string();
                }
                "END" => break,
                "SUBSTRATE" => {
                    if substrate_seen {
                        return Err(syntax(line.number, head, "duplicate .substrate"));
                    }
                    substrate_seen = true;
                    let p = Params::new(
                        line.number,
                        &line.tokens[1..],
                        &["er", "tand", "h", "t", "sigma"],
                    )?;
                    circuit.substrate = Some(SubstrateSpec {
                        eps_r: p.required("er", head)?,
                        tan_delta: p.value("tand")?.unwrap_or(0.0),
                        height: p.required("h", head)?,
                        metal_thickness: p.value("t")?.unwrap_or(DEFAULT_METAL_THICKNESS),
                        conductivity: p.value("sigma")?.unwrap_or(DEFAULT_CONDUCTIVITY),
                    });
                }
                "OPTIONS" => parse_options(&line, &mut circuit.options)?,
                "PORT" => {
                    expect_len(&line, 5, 5, ".port")?;
                    let label = line.tokens[1];
                    let index = label
                        .strip_prefix(['P', 'p'])
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&k| k > 0)
                        .ok_or_else(|| syntax(line.number, label, "expected P<k>"))?;
                    let p = Params::new(line.number, &line.tokens[4..], &["z0"])?;
                    ports.push(PendingPort {
                        index,
                        pos: line.tokens[2].to_string(),
                        neg: line.tokens[3].to_string(),
                        z0: p.required("z0", head)?,
                    });
                }
                "MODEL" => {
                    expect_len(&line, 3, usize::MAX, ".model")?;
                    let name = line.tokens[1].to_string();
                    if !line.tokens[2].eq_ignore_ascii_case("diode") {
                        return Err(syntax(line.number, line.tokens[2], "only diode models are supported"));
                    }
                    if circuit.models.contains_key(&name) {
                        return Err(syntax(line.number, line.tokens[1], "duplicate model"));
                    }
                    let p = Params::new(
                        line.number,
                        &line.tokens[3..],
                        &["is", "rs", "n", "cj0", "vj", "m", "bv", "ibv", "fc", "temp"],
                    )?;
                    let d = DiodeModel::default();
                    let model = DiodeModel {
                        is: p.value("is")?.unwrap_or(d.is),
                        n: p.value("n")?.unwrap_or(d.n),
                        rs: p.value("rs")?.unwrap_or(d.rs),
                        cj0: p.value("cj0")?.unwrap_or(d.cj0),
                        vj: p.value("vj")?.unwrap_or(d.vj),
                        m: p.value("m")?.unwrap_or(d.m),
                        bv: p.value("bv")?,
                        ibv: p.value("ibv")?.unwrap_or(d.ibv),
                        fc: p.value("fc")?.unwrap_or(d.fc),
                        temp: p.value("temp")?.unwrap_or(d.temp),
                        breakdown: false,
                    };
                    circuit.models.insert(name, model);
                }
                "OUTPUT" => {
                    expect_len(&line, 3, 3, ".output")?;
                    outputs.push((
                        line.number,
                        line.tokens[1].to_string(),
                        line.tokens[2].to_string(),
                    ));
                }
                _ => return Err(syntax(line.number, head, "unknown directive")),
            }
            continue;
        }
        elements.push(parse_element(&line, &upper)?);
    }

    // nodes are numbered by first use: elements, then ports
    for e in &elements {
        for n in &e.nodes {
            circuit.intern_node(n);
        }
    }
    for p in &ports {
        circuit.intern_node(&p.pos);
        circuit.intern_node(&p.neg);
    }
    circuit.elements = elements
        .into_iter()
        .map(|e| Element {
            nodes: [
                circuit.node_id(&e.nodes[0]).unwrap_or(GROUND),
                circuit.node_id(&e.nodes[1]).unwrap_or(GROUND),
            ],
            name: e.name,
            kind: e.kind,
        })
        .collect();
    circuit.ports = ports
        .into_iter()
        .map(|p| PortSpec {
            index: p.index,
            pos: circuit.node_id(&p.pos).unwrap_or(GROUND),
            neg: circuit.node_id(&p.neg).unwrap_or(GROUND),
            z0: p.z0,
        })
        .collect();
    for (line, node, load) in outputs {
        let node = circuit
            .node_id(&node)
            .ok_or_else(|| syntax(line, &node, "output node is not used by any element"))?;
        circuit.outputs.push(OutputSpec { node, load });
    }
    circuit.validate()?;
    Ok(circuit)
}

fn parse_options(line: &Line, options: &mut SimOptions) -> Result<()> {
    let p = Params::new(line.number, &line.tokens[1..], &["k", "stub", "breakdown"])?;
    if let Some(tok) = p.text("k") {
        let k = tok
            .parse::<usize>()
            .map_err(|_| syntax(line.number, tok, "k must be an integer"))?;
        options.harmonics = Some(k);
    }
    if let Some(tok) = p.text("stub") {
        options.stub_mode = Some(match tok.to_ascii_lowercase().as_str() {
            "bessel" => StubMode::Bessel,
            "cap" => StubMode::Capacitor,
            _ => return Err(syntax(line.number, tok, "expected bessel|cap")),
        });
    }
    if let Some(tok) = p.text("breakdown") {
        options.breakdown = Some(on_off(line.number, tok)?);
    }
    Ok(())
}

fn parse_element(line: &Line, upper_head: &str) -> Result<PendingElement> {
    let head = line.tokens[0];
    let number = line.number;
    if upper_head == "MLIN" {
        expect_len(line, 6, 6, "MLIN")?;
        let p = Params::new(number, &line.tokens[4..], &["w", "l"])?;
        return Ok(PendingElement {
            name: line.tokens[1].to_string(),
            kind: ElementKind::Microstrip {
                width: p.required("w", head)?,
                length: p.required("l", head)?,
            },
            nodes: [line.tokens[2].to_string(), line.tokens[3].to_string()],
        });
    }
    if upper_head == "MRSTUB" {
        expect_len(line, 6, 6, "MRSTUB")?;
        let p = Params::new(number, &line.tokens[3..], &["ri", "ro", "ang"])?;
        return Ok(PendingElement {
            name: line.tokens[1].to_string(),
            kind: ElementKind::RadialStub {
                ri: p.required("ri", head)?,
                ro: p.required("ro", head)?,
                angle: p.angle("ang", head)?,
            },
            nodes: [line.tokens[2].to_string(), "0".to_string()],
        });
    }
    let kind = match upper_head.as_bytes()[0] {
        b'R' => {
            expect_len(line, 4, 4, "resistor")?;
            ElementKind::Resistor(lumped_value(line, "resistor")?)
        }
        b'L' => {
            expect_len(line, 4, 4, "inductor")?;
            ElementKind::Inductor(lumped_value(line, "inductor")?)
        }
        b'C' => {
            expect_len(line, 4, 4, "capacitor")?;
            ElementKind::Capacitor(lumped_value(line, "capacitor")?)
        }
        b'D' => {
            expect_len(line, 4, 4, "diode")?;
            let p = Params::new(number, &line.tokens[3..], &["model"])?;
            let model = p
                .text("model")
                .ok_or_else(|| syntax(number, head, "missing `model=`"))?;
            ElementKind::Diode {
                model: model.to_string(),
            }
        }
        _ => {
            return Err(Error::UnknownElement {
                line: number,
                kind: head.to_string(),
            })
        }
    };
    Ok(PendingElement {
        name: head.to_string(),
        kind,
        nodes: [line.tokens[1].to_string(), line.tokens[2].to_string()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::ElementKind;

    #[test]
    fn resistor_with_suffix() {
        let c = parse("R1 n1 0 14k\n.port P1 n1 0 z0=50\n").unwrap();
        assert_eq!(c.elements[0].kind, ElementKind::Resistor(14000.0));
        assert_eq!(c.node_name(c.elements[0].nodes[0]), "n1");
        assert_eq!(c.elements[0].nodes[1], GROUND);
    }

    #[test]
    fn diode_model_card() {
        let c = parse(
            ".model HSMS2850 diode is=3e-6 rs=25 cj0=0.18p\nD1 a 0 model=HSMS2850\nR1 a 0 1k\n",
        )
        .unwrap();
        let m = &c.models["HSMS2850"];
        assert_eq!(m.is, 3e-6);
        assert_eq!(m.rs, 25.0);
        assert_eq!(m.cj0, 1.8e-13);
    }

    #[test]
    fn distributed_element_needs_substrate() {
        let err = parse("MLIN TL1 a 0 w=1mm l=5mm\n").unwrap_err();
        assert_eq!(err, Error::Invariant("substrate required".into()));
        assert!(alloc::format!("{err}").contains("substrate required"));
    }

    #[test]
    fn continuation_and_case() {
        let c = parse(
            ".SUBSTRATE er=3.38 \\\n  TAND=0.0027 h=0.8MM\nmlin TL1 a 0 W=1.6mm L=5mm\nmrstub S1 a ri=0.5mm ro=6mm ang=90deg\n",
        )
        .unwrap();
        let s = c.substrate.as_ref().unwrap();
        assert_eq!(s.tan_delta, 0.0027);
        assert_eq!(s.height, 0.8e-3);
        assert_eq!(s.metal_thickness, DEFAULT_METAL_THICKNESS);
        assert_eq!(
            c.elements[1].kind,
            ElementKind::RadialStub {
                ri: 0.5e-3,
                ro: 6e-3,
                angle: core::f64::consts::FRAC_PI_2
            }
        );
    }

    #[test]
    fn syntax_errors_carry_line_and_token() {
        match parse("* hi\nR1 a 0 14q\n").unwrap_err() {
            Error::Syntax { line, token, .. } => {
                assert_eq!(line, 2);
                assert_eq!(token, "14q");
            }
            e => panic!("{e:?}"),
        }
        assert!(matches!(
            parse("X1 a 0 5\n").unwrap_err(),
            Error::UnknownElement { line: 1, .. }
        ));
        assert!(matches!(
            parse("D1 a 0 model=nope\nR1 a 0 1k\n").unwrap_err(),
            Error::UnresolvedModel { .. }
        ));
    }

    #[test]
    fn invariant_violations_are_named() {
        let cases = [
            ("R1 a 0 -5\n", "value must be > 0"),
            ("R1 a 0 0\n", "value must be > 0"),
            ("R1 a 0 1k\nR1 a 0 2k\n", "duplicate element name"),
            ("R1 a 0 1k\nR2 b c 1k\n", "not connected to ground"),
            ("R1 a b 1k\n.port P1 a b z0=50\n", "ground node 0 is not referenced"),
            ("R1 a 0 1k\n.port P2 a 0 z0=50\n", "contiguous"),
            ("R1 a 0 1k\n.port P1 a 0 z0=0\n", "z0 must be > 0"),
            ("R1 a 0 1k\n.port P1 a 0 z0=50\n.port P2 0 a z0=50\n", "used by another port"),
            (
                ".substrate er=3.38 h=0.8mm\nMRSTUB S1 a ri=6mm ro=2mm ang=90\nR1 a 0 1\n",
                "ro > ri",
            ),
            (
                ".substrate er=3.38 h=0.8mm\nMRSTUB S1 a ri=0 ro=2mm ang=190\nR1 a 0 1\n",
                "angle",
            ),
            (".model d diode is=1e-9 m=1.5\nD1 a 0 model=d\n", "m must lie"),
            ("R1 a 0 1k\nC1 a 0 1p\n.output a C1\n", "must name a resistor"),
        ];
        for (text, rule) in cases {
            let err = parse(text).unwrap_err();
            let msg = alloc::format!("{err}");
            assert!(msg.contains(rule), "{text:?}: {msg}");
        }
    }

    #[test]
    fn empty_circuit_is_valid() {
        let c = parse("* nothing\n.title empty\n").unwrap();
        assert!(c.elements.is_empty());
        assert_eq!(c.title, "empty");
    }
}
