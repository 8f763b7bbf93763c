//! SPICE-level Schottky junction model.
//!
//! The series resistance `rs` is carried by the model but is never folded
//! into these equations: circuit assemblers stamp it as a separate linear
//! resistor in front of the junction.

#[allow(unused_imports)]
use num_traits::Float;

use crate::{BOLTZMANN, ELEMENTARY_CHARGE};

/// Exponent arguments above this continue linearly.
pub const EXP_ARG_LIMIT: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DiodeModel {
    /// Saturation current (A).
    pub is: f64,
    /// Emission coefficient.
    pub n: f64,
    /// Series resistance (Ω).
    pub rs: f64,
    /// Zero-bias junction capacitance (F).
    pub cj0: f64,
    /// Junction potential (V).
    pub vj: f64,
    /// Grading coefficient.
    pub m: f64,
    /// Reverse breakdown voltage (V), positive.
    pub bv: Option<f64>,
    /// Current at the breakdown knee (A).
    pub ibv: f64,
    /// Forward-bias depletion capacitance switch point, as a fraction of `vj`.
    pub fc: f64,
    /// Device temperature (K).
    pub temp: f64,
    /// Whether the `bv` reverse exponential is evaluated. Set from the
    /// circuit options, never from the `.model` card.
    pub breakdown: bool,
}

impl Default for DiodeModel {
    fn default() -> Self {
        Self {
            is: 1e-14,
            n: 1.0,
            rs: 0.0,
            cj0: 0.0,
            vj: 1.0,
            m: 0.5,
            bv: None,
            ibv: 1e-3,
            fc: 0.5,
            temp: 293.15,
            breakdown: false,
        }
    }
}

/// Junction quantities at one bias point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionEval {
    pub current: f64,
    pub conductance: f64,
    pub charge: f64,
    pub capacitance: f64,
}

/// `exp(x) - 1` continued linearly above [`EXP_ARG_LIMIT`]; returns value and slope.
fn limited_expm1(x: f64) -> (f64, f64) {
    if x > EXP_ARG_LIMIT {
        let e = EXP_ARG_LIMIT.exp();
        (e * (1.0 + x - EXP_ARG_LIMIT) - 1.0, e)
    } else {
        (x.exp_m1(), x.exp())
    }
}

impl DiodeModel {
    /// HSMS-2850 zero-bias detector diode.
    pub fn hsms2850() -> Self {
        Self {
            is: 3e-6,
            n: 1.06,
            rs: 25.0,
            cj0: 0.18e-12,
            vj: 0.35,
            m: 0.5,
            bv: Some(3.8),
            ibv: 3e-4,
            ..Self::default()
        }
    }

    /// Checks the parameter invariants; returns the violated rule.
    pub fn check(&self) -> Result<(), &'static str> {
        let rules = [
            (self.is > 0.0, "diode is must be > 0"),
            (self.n >= 1.0, "diode n must be >= 1"),
            (self.rs >= 0.0, "diode rs must be >= 0"),
            (self.cj0 >= 0.0, "diode cj0 must be >= 0"),
            (self.vj > 0.0, "diode vj must be > 0"),
            (self.m > 0.0 && self.m < 1.0, "diode m must lie in (0, 1)"),
            (self.fc > 0.0 && self.fc < 1.0, "diode fc must lie in (0, 1)"),
            (self.temp > 0.0, "diode temp must be > 0"),
            (self.bv.is_none_or(|b| b > 0.0), "diode bv must be > 0"),
            (self.ibv > 0.0, "diode ibv must be > 0"),
        ];
        match rules.iter().find(|(ok, _)| !ok) {
            Some(&(_, rule)) => Err(rule),
            None => Ok(()),
        }
    }

    /// Thermal voltage kT/q (V).
    pub fn thermal_voltage(&self) -> f64 {
        BOLTZMANN * self.temp / ELEMENTARY_CHARGE
    }

    /// Junction voltage where the forward exponential turns linear.
    pub fn v_crit(&self) -> f64 {
        EXP_ARG_LIMIT * self.n * self.thermal_voltage()
    }

    /// Static junction current and its derivative.
    pub fn current_and_conductance(&self, v: f64) -> (f64, f64) {
        let nvt = self.n * self.thermal_voltage();
        let (e, de) = limited_expm1(v / nvt);
        let mut i = self.is * e;
        let mut g = self.is * de / nvt;
        if let (true, Some(bv)) = (self.breakdown, self.bv) {
            let (eb, deb) = limited_expm1(-(v + bv) / nvt);
            i -= self.ibv * (eb + 1.0);
            g += self.ibv * deb / nvt;
        }
        (i, g)
    }

    pub fn current(&self, v: f64) -> f64 {
        self.current_and_conductance(v).0
    }

    pub fn conductance(&self, v: f64) -> f64 {
        self.current_and_conductance(v).1
    }

    /// Depletion charge and capacitance.
    pub fn charge_and_capacitance(&self, v: f64) -> (f64, f64) {
        if self.cj0 == 0.0 {
            return (0.0, 0.0);
        }
        let (cj0, vj, m, fc) = (self.cj0, self.vj, self.m, self.fc);
        let v_switch = fc * vj;
        if v < v_switch {
            let arg = 1.0 - v / vj;
            let q = cj0 * vj / (1.0 - m) * (1.0 - arg.powf(1.0 - m));
            let c = cj0 * arg.powf(-m);
            (q, c)
        } else {
            let f1 = vj / (1.0 - m) * (1.0 - (1.0 - fc).powf(1.0 - m));
            let f2 = (1.0 - fc).powf(1.0 + m);
            let f3 = 1.0 - fc * (1.0 + m);
            let c = cj0 / f2 * (f3 + m * v / vj);
            let q = cj0 * f1
                + cj0 / f2 * (f3 * (v - v_switch) + m / (2.0 * vj) * (v * v - v_switch * v_switch));
            (q, c)
        }
    }

    pub fn charge(&self, v: f64) -> f64 {
        self.charge_and_capacitance(v).0
    }

    pub fn capacitance(&self, v: f64) -> f64 {
        self.charge_and_capacitance(v).1
    }

    pub fn eval(&self, v: f64) -> JunctionEval {
        let (current, conductance) = self.current_and_conductance(v);
        let (charge, capacitance) = self.charge_and_capacitance(v);
        JunctionEval {
            current,
            conductance,
            charge,
            capacitance,
        }
    }

    /// Small-signal conductance at zero bias, is/(n·Vt).
    pub fn zero_bias_conductance(&self) -> f64 {
        self.conductance(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at_temp(temp: f64) -> DiodeModel {
        DiodeModel {
            temp,
            ..DiodeModel::hsms2850()
        }
    }

    #[test]
    fn equilibrium_and_reverse_asymptote() {
        let d = DiodeModel::hsms2850();
        assert_eq!(d.current(0.0), 0.0);
        assert!((d.current(-5.0) + 3e-6).abs() < 1e-20);
    }

    #[test]
    fn shockley_matches_high_precision_oracle() {
        // mpmath, 40 digits: 3e-6 * (exp(0.1 / (1.06 kT/q)) - 1)
        let at_29315 = 1.226_000_544_887_550_4e-4;
        let at_300 = 1.123_339_489_101_659_6e-4;
        assert!((at_temp(293.15).current(0.1) / at_29315 - 1.0).abs() < 1e-12);
        assert!((at_temp(300.0).current(0.1) / at_300 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_bias_conductance_is_analytic() {
        let d = DiodeModel::hsms2850();
        let expected = d.is / (d.n * d.thermal_voltage());
        assert!((d.conductance(0.0) / expected - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conductance_matches_central_difference() {
        let d = DiodeModel::hsms2850();
        // below about -0.25 V the current sits within a few ulps of -is and a
        // central difference no longer resolves g
        let h = 1e-7;
        for k in 0..=60 {
            let v = -0.25 + 0.025 * k as f64;
            let fd = (d.current(v + h) - d.current(v - h)) / (2.0 * h);
            let g = d.conductance(v);
            assert!(((g - fd) / g).abs() < 1e-6, "v={v} g={g} fd={fd}");
        }
    }

    #[test]
    fn linear_continuation_above_clamp() {
        let d = DiodeModel::hsms2850();
        let vc = d.v_crit();
        let g1 = d.conductance(vc + 0.1);
        let g2 = d.conductance(vc + 3.0);
        assert_eq!(g1, g2);
        // C1 at the junction
        let below = d.conductance(vc - 1e-12);
        assert!((below / g1 - 1.0).abs() < 1e-9);
        assert!(d.current(vc + 10.0).is_finite());
    }

    #[test]
    fn depletion_capacitance_closed_forms() {
        let d = DiodeModel::hsms2850();
        assert_eq!(d.capacitance(0.0), 0.18e-12);
        let c = d.capacitance(-d.vj);
        assert!((c - 0.18e-12 / 2f64.sqrt()).abs() < 1e-27);
        assert!((c - 0.1273e-12).abs() < 0.0001e-12);
    }

    #[test]
    fn capacitance_continuous_at_switch_point() {
        let d = DiodeModel::hsms2850();
        let vs = d.fc * d.vj;
        let (ql, cl) = d.charge_and_capacitance(vs * (1.0 - 1e-12));
        let (qr, cr) = d.charge_and_capacitance(vs);
        assert!((cl - cr).abs() / cr < 1e-9);
        assert!((ql - qr).abs() / qr < 1e-9);
    }

    #[test]
    fn breakdown_is_off_by_default() {
        let d = DiodeModel::hsms2850();
        assert!((d.current(-3.8) + d.is).abs() < 1e-18);
        let on = DiodeModel {
            breakdown: true,
            ..d
        };
        assert!((on.current(-3.8) + on.is + on.ibv).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn charge_derivative_is_capacitance(v in -3.0f64..0.9) {
            let d = DiodeModel::hsms2850();
            let h = 1e-6;
            let fd = (d.charge(v + h) - d.charge(v - h)) / (2.0 * h);
            let c = d.capacitance(v);
            prop_assert!(((fd - c) / c).abs() < 1e-6);
        }

        #[test]
        fn current_strictly_increasing(v in -0.6f64..2.0, dv in 1e-4f64..0.5) {
            let d = DiodeModel::hsms2850();
            prop_assert!(d.current(v + dv) > d.current(v));
            prop_assert!(d.conductance(v) > 0.0);
        }

        #[test]
        fn breakdown_branch_strictly_increasing(v in -6.0f64..-3.0, dv in 1e-4f64..0.5) {
            let d = DiodeModel { breakdown: true, ..DiodeModel::hsms2850() };
            prop_assert!(d.current(v + dv) > d.current(v));
            prop_assert!(d.conductance(v) > 0.0);
        }
    }
}
