//! Text formats: numbers, CSV tables, Touchstone.

use std::fmt::Write;

use num_complex::Complex64;
use rectiforge_core::analysis::SweepRecord;
use rectiforge_core::hb::TraceRecord;
use rectiforge_core::linear::{DuplexerRow, SParameterMatrix};
use rectiforge_core::optimize::{Evaluation, OptimizeReport, OptSpec};

use crate::CliError;

pub const SWEEP_HEADER: &str = "freq_hz,pin_dbm,rl_ohm,s11_db,vdc_v,pce_pct,iterations,converged";

/// Six significant digits; scientific outside `[1e-3, 1e6]`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    // decide on the rounded value so 999999.7 does not print as 1000000
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let rounded: f64 = sci.parse().unwrap();
    if (1e-3..=1e6).contains(&rounded.abs()) {
        format!("{:.*}", (5 - exp).max(0) as usize, x)
    } else {
        sci
    }
}

pub fn sweep_row(r: &SweepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        num(r.freq),
        num(r.pin),
        num(r.r_load),
        num(r.s11_db),
        num(r.v_odc),
        num(r.pce),
        r.iterations,
        r.converged
    )
}

pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&sweep_row(r));
        out.push('\n');
    }
    out
}

fn phase_deg(z: Complex64) -> f64 {
    z.arg().to_degrees()
}

/// `freq_hz,s11_db,s11_deg,s12_db,...` with entries in row-major order.
pub fn sparams_csv(mats: &[SParameterMatrix]) -> String {
    let n = mats.first().map_or(0, |m| m.n);
    let mut out = String::from("freq_hz");
    for i in 1..=n {
        for j in 1..=n {
            let _ = write!(out, ",s{i}{j}_db,s{i}{j}_deg");
        }
    }
    out.push('\n');
    for m in mats {
        out.push_str(&num(m.freq));
        for i in 0..n {
            for j in 0..n {
                let s = m.get(i, j);
                let _ = write!(out, ",{},{}", num(20.0 * s.norm().log10()), num(phase_deg(s)));
            }
        }
        out.push('\n');
    }
    out
}

/// Touchstone v1, RI format. Two-port data uses the S11 S21 S12 S22
/// order the format prescribes; larger networks write one matrix row per
/// line.
pub fn touchstone(mats: &[SParameterMatrix]) -> Result<String, CliError> {
    let Some(first) = mats.first() else {
        return Err(CliError::Usage("no frequency points".into()));
    };
    let z0 = first.z0[0];
    if first.z0.iter().any(|&z| z != z0) {
        return Err(CliError::Usage(
            "Touchstone v1 needs one reference impedance for all ports; use --format csv".into(),
        ));
    }
    let mut out = format!("! {}-port S-parameters\n# Hz S RI R {}\n", first.n, num(z0));
    let ri = |s: Complex64| format!("{} {}", num(s.re), num(s.im));
    for m in mats {
        out.push_str(&num(m.freq));
        match m.n {
            1 => {
                let _ = write!(out, " {}", ri(m.get(0, 0)));
            }
            2 => {
                for (i, j) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let _ = write!(out, " {}", ri(m.get(i, j)));
                }
            }
            n => {
                for i in 0..n {
                    if i > 0 {
                        out.push_str("\n ");
                    }
                    for j in 0..n {
                        let _ = write!(out, " {}", ri(m.get(i, j)));
                    }
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub const DUPLEXER_HEADER: &str = "freq_hz,s11_db,s21_db,s31_db,s23_db";

pub fn duplexer_row(r: &DuplexerRow) -> String {
    format!(
        "{},{},{},{},{}",
        num(r.freq),
        num(r.s11_db),
        num(r.s21_db),
        num(r.s31_db),
        num(r.s23_db)
    )
}

/// `eval,cost,<param>...` in evaluation order.
pub fn history_csv(spec: &OptSpec, history: &[Evaluation]) -> String {
    let mut out = String::from("eval,cost");
    for t in &spec.tunables {
        let _ = write!(out, ",{}", t.reference);
    }
    out.push('\n');
    for e in history {
        let _ = write!(out, "{},{}", e.index, num(e.cost));
        for x in &e.x {
            let _ = write!(out, ",{}", num(*x));
        }
        out.push('\n');
    }
    out
}

/// Before/after metrics at every target.
pub fn metric_table(spec: &OptSpec, report: &OptimizeReport) -> String {
    let mut out = String::from("target,freq_hz,pin_dbm,metric,goal,before,after,met\n");
    for (t, (b, a)) in spec.targets.iter().zip(report.before.iter().zip(&report.after)) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.target + 1,
            num(t.freq),
            num(t.pin),
            t.metric,
            num(t.goal),
            num(b.value),
            num(a.value),
            a.met
        );
    }
    out
}

/// Newton history: one row per iterate with the real-form junction
/// harmonic vector (`x0` = DC, then Re/Im pairs per harmonic, per junction).
pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let width = trace.first().map_or(0, |t| t.values.len());
    let mut out = String::from("pin_dbm,iteration,residual_a");
    for i in 0..width {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for t in trace {
        let _ = write!(out, "{},{},{}", num(t.pin_dbm), t.iteration, num(t.residual));
        for v in &t.values {
            let _ = write!(out, ",{}", num(*v));
        }
        out.push('\n');
    }
    out
}

/// Reads an `(freq, |S11| dB)` curve from CSV (columns `freq_hz` and
/// `s11_db`, in any position) or from a one-port Touchstone file.
pub fn read_curve(text: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let bad = |line: usize, msg: &str| CliError::Usage(format!("curve line {line}: {msg}"));
    if text.lines().any(|l| l.trim_start().starts_with('#')) {
        return read_touchstone_s11(text);
    }
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Usage(format!("curve has no `{name}` column")))
    };
    let (fc, sc) = (col("freq_hz")?, col("s11_db")?);
    let mut curve = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| -> Result<f64, CliError> {
            fields
                .get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(i + 1, "expected a number"))
        };
        curve.push((get(fc)?, get(sc)?));
    }
    Ok(curve)
}

fn read_touchstone_s11(text: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let mut scale = 1e9;
    let mut fmt = "ma".to_string();
    let mut curve = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            for tok in opts.split_whitespace().map(str::to_ascii_lowercase) {
                match tok.as_str() {
                    "hz" => scale = 1.0,
                    "khz" => scale = 1e3,
                    "mhz" => scale = 1e6,
                    "ghz" => scale = 1e9,
                    "ri" | "ma" | "db" => fmt = tok,
                    "s" | "r" => {}
                    "y" | "z" | "g" | "h" => {
                        return Err(CliError::Usage("only S-parameter Touchstone files are supported".into()))
                    }
                    _ => {}
                }
            }
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("touchstone line {}: expected numbers", i + 1)))?;
        if v.len() != 3 {
            return Err(CliError::Usage(format!("touchstone line {}: expected a one-port record", i + 1)));
        }
        let db = match fmt.as_str() {
            "ri" => 20.0 * v[1].hypot(v[2]).log10(),
            "ma" => 20.0 * v[1].log10(),
            _ => v[1],
        };
        curve.push((v[0] * scale, db));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(num(14000.0), "14000.0");
        assert_eq!(num(0.171), "0.171000");
        assert_eq!(num(95e6), "9.50000e7");
        assert_eq!(num(1e6), "1000000");
        assert_eq!(num(1e-3), "0.00100000");
        assert_eq!(num(2.5e-4), "2.50000e-4");
        assert_eq!(num(-20.0), "-20.0000");
        assert_eq!(num(999999.7), "1000000");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn curve_from_csv_and_touchstone() {
        let csv = "freq_hz,s11_db,s11_deg\n1e8,-12.5,3\n2e8,-4,0\n";
        assert_eq!(read_curve(csv).unwrap(), vec![(1e8, -12.5), (2e8, -4.0)]);
        let ts = "! x\n# MHz S DB R 50\n95 -20 10\n";
        assert_eq!(read_curve(ts).unwrap(), vec![(95e6, -20.0)]);
        let ri = "# Hz S RI R 50\n1 0.1 0\n";
        assert!((read_curve(ri).unwrap()[0].1 + 20.0).abs() < 1e-12);
    }
}
