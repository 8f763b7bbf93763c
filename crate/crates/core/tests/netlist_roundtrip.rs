use proptest::prelude::*;
use rectiforge_core::netlist::{parse, render, Circuit, ElementKind};

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

/// Structural equality with angles allowed to move by an ulp through the
/// degree conversion.
fn same(a: &Circuit, b: &Circuit) -> bool {
    if a.elements.len() != b.elements.len() {
        return false;
    }
    let kinds = a.elements.iter().zip(&b.elements).all(|(x, y)| {
        x.name == y.name
            && x.nodes.iter().map(|&n| a.node_name(n)).eq(y.nodes.iter().map(|&n| b.node_name(n)))
            && match (&x.kind, &y.kind) {
                (
                    ElementKind::RadialStub { ri, ro, angle },
                    ElementKind::RadialStub {
                        ri: ri2,
                        ro: ro2,
                        angle: angle2,
                    },
                ) => ri == ri2 && ro == ro2 && ulps(*angle, *angle2) <= 1,
                (p, q) => p == q,
            }
    });
    kinds
        && a.nodes == b.nodes
        && a.ports == b.ports
        && a.substrate == b.substrate
        && a.models == b.models
        && a.outputs == b.outputs
        && a.options == b.options
        && a.title == b.title
}

/// Positive value spanning many decades, written with a random suffix.
fn value() -> impl Strategy<Value = String> {
    (1u32..999_999, -3i32..3, prop::sample::select(vec!["f", "p", "n", "u", "m", "", "k", "meg", "g", "e-2"]))
        .prop_map(|(m, e, s)| format!("{}{}", m as f64 * 10f64.powi(e), s))
}

fn length() -> impl Strategy<Value = String> {
    (1u32..5000, prop::sample::select(vec!["mm", "um"])).prop_map(|(m, u)| format!("{}{}", m, u))
}

#[derive(Debug, Clone)]
enum Card {
    Lumped(char, String),
    Line(String, String),
    Stub(String, String, f64),
    Diode(bool),
}

fn card() -> impl Strategy<Value = Card> {
    prop_oneof![
        (prop::sample::select(vec!['R', 'L', 'C']), value()).prop_map(|(k, v)| Card::Lumped(k, v)),
        (length(), length()).prop_map(|(w, l)| Card::Line(w, l)),
        (1u32..3000, 1u32..180).prop_map(|(ro, ang)| Card::Stub(
            format!("{}um", ro),
            format!("{}um", ro * 2 + 100),
            ang as f64 + 0.25
        )),
        any::<bool>().prop_map(Card::Diode),
    ]
}

/// A chain of nodes n0..nk hanging off ground, one card per link, so the
/// graph is always connected.
fn netlist() -> impl Strategy<Value = String> {
    (prop::collection::vec(card(), 1..12), 1usize..4, any::<bool>()).prop_map(|(cards, ports, title)| {
        let mut text = String::new();
        if title {
            text.push_str(".title random chain\n");
        }
        text.push_str(".substrate er=3.38 tand=0.0027 h=0.8mm t=35um\n");
        text.push_str(".model dd diode is=3e-6 n=1.06 rs=25 cj0=0.18p vj=0.35 m=0.5 bv=3.8\n");
        let node = |i: usize| if i == 0 { "0".to_string() } else { format!("n{i}") };
        for (i, c) in cards.iter().enumerate() {
            let (a, b) = (node(i + 1), node(i));
            let line = match c {
                Card::Lumped(k, v) => format!("{k}{i} {a} {b} {v}"),
                Card::Line(w, l) => format!("MLIN TL{i} {a} {b} w={w} l={l}"),
                Card::Stub(ri, ro, ang) => format!("R{i} {a} {b} 50\nMRSTUB S{i} {a} ri={ri} ro={ro} ang={ang}deg"),
                Card::Diode(fwd) if *fwd => format!("D{i} {a} {b} model=dd"),
                Card::Diode(_) => format!("D{i} {b} {a} model=dd"),
            };
            text.push_str(&line);
            text.push('\n');
        }
        let top = cards.len();
        for p in 1..=ports.min(top) {
            text.push_str(&format!(".port P{p} {} 0 z0={}\n", node(p), 25 * p));
        }
        text.push_str(&format!("RL {} 0 14k\n.output {} RL\n", node(top), node(top)));
        text
    })
}

proptest! {
    #[test]
    fn render_then_parse_reproduces_the_circuit(text in netlist()) {
        let c = parse(&text).unwrap();
        let again = parse(&render(&c)).unwrap();
        prop_assert!(same(&c, &again), "{}\n---\n{}", text, render(&c));
        // and the rendered text is a fixed point
        prop_assert_eq!(render(&again), render(&parse(&render(&again)).unwrap()));
    }
}

#[test]
fn ground_only_circuit_round_trips() {
    let c = parse("* nothing here\n").unwrap();
    assert_eq!(parse(&render(&c)).unwrap(), c);
}
