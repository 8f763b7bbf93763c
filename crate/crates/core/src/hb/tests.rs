use super::*;
use crate::linear::ac_node_voltages;
use crate::netlist::parse;

const DOUBLER: &str = "\
.model hsms diode is=3e-6 n=1.06 rs=25 cj0=0.18p vj=0.35 m=0.5 bv=3.8
.port P1 in 0 z0=50
C1 in a 20p
D1 0 a model=hsms
D2 a out model=hsms
C2 out 0 20p
RL out 0 14k
.output out RL
";

fn doubler() -> Circuit {
    parse(DOUBLER).unwrap()
}

#[test]
fn rejects_bad_arguments() {
    let c = doubler();
    assert!(matches!(
        solve_hb(&c, 95e6, -10.0, 2),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        solve_hb(&c, 95e6, 25.0, 8),
        Err(Error::InvalidArgument(_))
    ));
    let no_port = parse("R1 a 0 1k\n").unwrap();
    assert!(matches!(
        solve_hb(&no_port, 95e6, -10.0, 8),
        Err(Error::PortCount { .. })
    ));
}

#[test]
fn linear_circuit_matches_ac_analysis() {
    let c = parse(
        ".substrate er=3.38 tand=0.0027 h=0.8mm\n\
         .port P1 in 0 z0=50\n.port P2 out 0 z0=50\n\
         C1 in a 20p\nL1 a b 120n\nMLIN TL1 b out w=1.8mm l=20mm\nR1 b 0 300\n",
    )
    .unwrap();
    let f0 = 95e6;
    let sol = solve_hb(&c, f0, -10.0, 8).unwrap();
    assert!(sol.converged);
    let ac = ac_node_voltages(&c, f0, Complex64::new(sol.emf, 0.0), None).unwrap();
    for (id, name) in c.nodes.iter().enumerate().skip(1) {
        let s = sol.node(name).unwrap();
        let v = ac[id - 1];
        assert!((s.fundamental() - v).norm() / v.norm() < 1e-9, "{name}");
        for k in 2..=8 {
            assert!(s.harmonic(k).norm() < 1e-12 * v.norm());
        }
    }
    assert!(sol.power.imbalance() < 1e-9);
}

#[test]
fn waveforms_are_real_and_dc_phasor_is_real() {
    let sol = solve_hb(&doubler(), 95e6, -10.0, 8).unwrap();
    for s in sol.nodes.iter().chain(sol.junctions.iter().map(|j| &j.voltage)) {
        assert_eq!(s.phasors.len(), 9);
        assert_eq!(s.phasors[0].im, 0.0);
    }
    // time samples rebuilt from the spectrum equal the synthesis of the
    // real-form state to rounding
    let t = Transform::new(8);
    let m = real_len(8);
    let v = t.to_time(&sol.state.values[..m]);
    let nt = t.samples();
    for (n, x) in v.iter().enumerate() {
        let theta = 2.0 * PI * n as f64 / nt as f64;
        assert!((sol.junctions[0].voltage.at(theta) - x).abs() < 1e-12);
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let c = doubler();
    let engine = HbEngine::new(&c, 95e6, 5).unwrap();
    let n = engine.unknowns();
    // a deterministic but irregular iterate
    let x: Vec<f64> = (0..n)
        .map(|i| 0.15 * ((i as f64 * 1.7).sin() + 0.3 * (i as f64 * 0.37).cos()))
        .collect();
    let emf = source_emf(50.0, -5.0);
    let mut jac = engine.y_lin.clone();
    let f0 = engine.residual(&x, emf, 0.0, Some(&mut jac));
    let scale = jac.max_abs();
    let h = 1e-7;
    for col in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[col] += h;
        xm[col] -= h;
        let fp = engine.residual(&xp, emf, 0.0, None);
        let fm = engine.residual(&xm, emf, 0.0, None);
        for r in 0..n {
            let fd = (fp[r] - fm[r]) / (2.0 * h);
            let err = (fd - jac[(r, col)]).abs();
            assert!(
                err < 1e-4 * jac[(r, col)].abs().max(1e-3 * scale),
                "({r},{col}) fd={fd} jac={} f={}",
                jac[(r, col)],
                f0[r]
            );
        }
    }
}

#[test]
fn doubler_power_ledger_closes() {
    let c = doubler();
    for pin in [-30.0, -20.0, -10.0, 0.0, 5.0] {
        let sol = solve_hb(&c, 95e6, pin, 8).unwrap();
        assert!(sol.converged, "pin {pin}");
        assert!(sol.residual < sol.emf / 50.0 * REL_TOL + ABS_TOL);
        let p = sol.power;
        assert!(p.imbalance() < 1e-6, "pin {pin}: {p:?}");
        assert!(p.input <= p.available * (1.0 + 1e-12));
        assert!(p.dc_load > 0.0 && p.dc_load < p.input);
        let v = sol.node("out").unwrap().dc();
        assert!((v * v / 14e3 - p.dc_load).abs() < 1e-12 * p.dc_load);
    }
}

#[test]
fn strong_drive_reaches_target_by_stepping() {
    let c = doubler();
    let sol = solve_hb(&c, 95e6, 15.0, 8).unwrap();
    assert!(sol.converged);
    assert!(sol.power.imbalance() < 1e-6);
    // the doubler output stays below twice the open-circuit source peak
    assert!(sol.node("out").unwrap().dc() < 2.0 * sol.emf);
}

#[test]
fn warm_start_agrees_with_cold_start() {
    let c = doubler();
    let engine = HbEngine::new(&c, 95e6, 8).unwrap();
    let cold = engine.solve(-4.0, &HbOptions::default()).unwrap();
    let prev = engine.solve(-6.0, &HbOptions::default()).unwrap();
    let opts = HbOptions {
        warm_start: Some(prev.state.clone()),
        ..HbOptions::default()
    };
    let warm = engine.solve(-4.0, &opts).unwrap();
    assert!(warm.converged);
    let (a, b) = (cold.v_dc(3), warm.v_dc(3));
    assert!((a - b).abs() < 1e-9 * a.abs());
}

#[test]
fn trace_records_every_iterate() {
    let c = doubler();
    let opts = HbOptions {
        trace: true,
        ..HbOptions::default()
    };
    let sol = HbEngine::new(&c, 95e6, 8).unwrap().solve(-20.0, &opts).unwrap();
    assert_eq!(sol.trace.len(), sol.iterations + 1);
    assert!(sol.trace.last().unwrap().residual == sol.residual);
}

#[test]
fn truncation_warning_on_coarse_order() {
    let c = doubler();
    let coarse = solve_hb(&c, 95e6, 10.0, 3).unwrap();
    assert!(coarse.warnings.iter().any(|w| w.contains("harmonic order")));
}

#[test]
fn dc_without_sources_is_zero() {
    let sol = solve_dc(&doubler()).unwrap();
    assert!(sol.node_voltages.iter().all(|v| *v == 0.0));
    assert_eq!(sol.iterations, 0);
}

#[test]
fn dc_forward_diode_matches_bisection() {
    // 1 V behind 50 Ω, 1 kΩ series, diode to a 10 kΩ load
    let c = parse(
        ".model d diode is=3e-6 n=1.06 rs=25\n.port P1 in 0 z0=50\n\
         R1 in a 1k\nD1 a out model=d\nRL out 0 10k\n",
    )
    .unwrap();
    let sol = solve_dc_with_source(&c, 1.0).unwrap();
    let model = c.diode_model(c.element("D1").unwrap()).unwrap();
    // current through the series string: 1 = i·(1075 + 10000) + vj(i)
    let f = |i: f64| {
        let nvt = model.n * model.thermal_voltage();
        i * (50.0 + 1000.0 + 25.0 + 10_000.0) + nvt * (i / model.is).ln_1p() - 1.0
    };
    let (mut lo, mut hi) = (0.0, 1e-3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let v = 0.5 * (lo + hi) * 10_000.0;
    assert!((sol.node("out").unwrap() - v).abs() < 1e-9, "{} {v}", sol.node("out").unwrap());
    assert!(sol.residual < ABS_TOL);
}

#[test]
fn dc_reversed_diode_leaks_saturation_current() {
    let c = parse(
        ".model d diode is=3e-6 n=1.06\n.port P1 in 0 z0=50\n\
         D1 in out model=d\nRL out 0 14k\n",
    )
    .unwrap();
    let sol = solve_dc_with_source(&c, -2.0).unwrap();
    let v = sol.node("out").unwrap();
    assert!(v < 0.0);
    assert!((v / (-3e-6 * 14e3) - 1.0).abs() < 0.01, "{v}");
}

#[test]
fn dc_shorts_inductors_and_opens_capacitors() {
    let c = parse(".port P1 in 0 z0=50\nL1 in a 10n\nR1 a 0 50\nC1 a b 1p\nR2 b 0 1k\n").unwrap();
    let sol = solve_dc_with_source(&c, 2.0).unwrap();
    assert!((sol.node("a").unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(sol.node("b").unwrap(), 0.0);
}
