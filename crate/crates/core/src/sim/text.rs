//! Line-oriented circuit text format.
//!
//! ```text
//! QCIRCUIT v1
//! WIDTH 3
//! PARAMS theta phi
//! GATE H targets=[0] controls=[]
//! GATE MCX targets=[2] controls=[(0,0),(1,1)]
//! GATE RY targets=[1] controls=[(0,1)] angle=$theta
//! GATE RX targets=[0] controls=[] angle=1.5707963267948966
//! ```
//!
//! Control polarity is `1` for closed (active on |1⟩) and `0` for open.
//! `angle=-$name` marks a negated slot. `U`/`MCU` carry
//! `matrix=[re00,im00,re01,im01,re10,im10,re11,im11]`. Floats are printed in
//! shortest round-trip form, so `write → parse → write` is byte-identical.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;

use super::circuit::Circuit;
use super::gate::{Angle, Control, GateKind, GateOp, Matrix2, Polarity};
use crate::error::{Error, Result};

pub const HEADER: &str = "QCIRCUIT v1";

fn kind_name(op: &GateOp) -> &'static str {
    let closed_single = op.controls.len() == 1 && op.controls[0].polarity == Polarity::Closed;
    match (&op.kind, op.controls.is_empty()) {
        (GateKind::X, true) => "X",
        (GateKind::X, false) if closed_single => "CNOT",
        (GateKind::X, false) => "MCX",
        (GateKind::H, _) => "H",
        (GateKind::RX, _) => "RX",
        (GateKind::RY, _) => "RY",
        (GateKind::RZ, _) => "RZ",
        (GateKind::Swap, _) => "SWAP",
        (GateKind::U(_), true) => "U",
        (GateKind::U(_), false) => "MCU",
        (GateKind::Reset, _) => "RESET",
    }
}

pub fn write_circuit(circuit: &Circuit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "WIDTH {}", circuit.width());
    out.push_str("PARAMS");
    for n in circuit.param_names() {
        out.push(' ');
        out.push_str(n);
    }
    out.push('\n');
    for op in circuit.ops() {
        let targets: Vec<String> = op.targets.iter().map(|t| t.to_string()).collect();
        let controls: Vec<String> = op
            .controls
            .iter()
            .map(|c| format!("({},{})", c.qubit, c.polarity.bit()))
            .collect();
        let _ = write!(
            out,
            "GATE {} targets=[{}] controls=[{}]",
            kind_name(op),
            targets.join(","),
            controls.join(",")
        );
        match op.angle {
            Some(Angle::Fixed(a)) => {
                let _ = write!(out, " angle={a:?}");
            }
            Some(Angle::Param { index, negate }) => {
                let sign = if negate { "-" } else { "" };
                let _ = write!(out, " angle={sign}${}", circuit.param_names()[index]);
            }
            None => {}
        }
        if let GateKind::U(m) = &op.kind {
            let vals: Vec<String> =
                m.0.iter().flat_map(|c| [format!("{:?}", c.re), format!("{:?}", c.im)]).collect();
            let _ = write!(out, " matrix=[{}]", vals.join(","));
        }
        out.push('\n');
    }
    out
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn bracketed<'a>(line: usize, field: &'a str, key: &str) -> Result<&'a str> {
    field
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix("=["))
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| perr(line, format!("expected {key}=[...], got {field:?}")))
}

fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| perr(line, format!("bad integer {s:?}")))
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| perr(line, format!("bad number {s:?}")))?;
    if !v.is_finite() {
        return Err(perr(line, format!("non-finite number {s:?}")));
    }
    Ok(v)
}

fn parse_controls(line: usize, body: &str) -> Result<Vec<Control>> {
    if body.is_empty() {
        return Ok(Vec::new());
    }
    let mut controls = Vec::new();
    for chunk in body.split("),") {
        let inner = chunk
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split_once(',')
            .ok_or_else(|| perr(line, format!("bad control {chunk:?}")))?;
        let qubit = parse_usize(line, inner.0)?;
        let polarity = match inner.1.trim() {
            "0" => Polarity::Open,
            "1" => Polarity::Closed,
            p => return Err(perr(line, format!("bad polarity {p:?}"))),
        };
        controls.push(Control { qubit, polarity });
    }
    Ok(controls)
}

pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, l)) => return Err(perr(n, format!("expected header {HEADER:?}, got {l:?}"))),
        None => return Err(perr(0, "empty input")),
    }
    let (n, wline) = lines.next().ok_or_else(|| perr(0, "missing WIDTH"))?;
    let width = parse_usize(
        n,
        wline.strip_prefix("WIDTH ").ok_or_else(|| perr(n, "expected WIDTH <q>"))?,
    )?;
    let mut circuit = Circuit::new(width).map_err(|e| perr(n, e.to_string()))?;

    let (n, pline) = lines.next().ok_or_else(|| perr(0, "missing PARAMS"))?;
    let names = pline.strip_prefix("PARAMS").ok_or_else(|| perr(n, "expected PARAMS"))?;
    for name in names.split_whitespace() {
        if circuit.param_index(name).is_some() {
            return Err(perr(n, format!("duplicate parameter {name:?}")));
        }
        circuit.param(name).map_err(|e| perr(n, e.to_string()))?;
    }

    for (n, line) in lines {
        let mut fields = line.split(' ');
        if fields.next() != Some("GATE") {
            return Err(perr(n, format!("expected GATE line, got {line:?}")));
        }
        let kind_str = fields.next().ok_or_else(|| perr(n, "missing gate kind"))?;
        let targets = bracketed(n, fields.next().unwrap_or(""), "targets")?;
        let targets = if targets.is_empty() {
            Vec::new()
        } else {
            targets.split(',').map(|t| parse_usize(n, t)).collect::<Result<Vec<_>>>()?
        };
        let controls = parse_controls(n, bracketed(n, fields.next().unwrap_or(""), "controls")?)?;

        let mut angle = None;
        let mut matrix = None;
        for extra in fields {
            if let Some(a) = extra.strip_prefix("angle=") {
                angle = Some(if let Some(name) = a.strip_prefix("-$") {
                    let index = circuit
                        .param_index(name)
                        .ok_or_else(|| perr(n, format!("undeclared parameter {name:?}")))?;
                    Angle::Param { index, negate: true }
                } else if let Some(name) = a.strip_prefix('$') {
                    let index = circuit
                        .param_index(name)
                        .ok_or_else(|| perr(n, format!("undeclared parameter {name:?}")))?;
                    Angle::Param { index, negate: false }
                } else {
                    Angle::Fixed(parse_f64(n, a)?)
                });
            } else if extra.starts_with("matrix=") {
                let body = bracketed(n, extra, "matrix")?;
                let vals = body.split(',').map(|v| parse_f64(n, v)).collect::<Result<Vec<_>>>()?;
                if vals.len() != 8 {
                    return Err(perr(n, "matrix needs 8 numbers"));
                }
                let c = |k: usize| C64::new(vals[2 * k], vals[2 * k + 1]);
                matrix = Some(Matrix2([c(0), c(1), c(2), c(3)]));
            } else {
                return Err(perr(n, format!("unknown field {extra:?}")));
            }
        }

        let kind = match kind_str {
            "X" | "CNOT" | "MCX" => GateKind::X,
            "H" => GateKind::H,
            "RX" => GateKind::RX,
            "RY" => GateKind::RY,
            "RZ" => GateKind::RZ,
            "SWAP" => GateKind::Swap,
            "RESET" => GateKind::Reset,
            "U" | "MCU" => {
                GateKind::U(matrix.take().ok_or_else(|| perr(n, "U gate needs matrix=[...]"))?)
            }
            k => return Err(perr(n, format!("unknown gate kind {k:?}"))),
        };
        if matrix.is_some() {
            return Err(perr(n, "matrix given for non-U gate"));
        }
        let op = GateOp { kind, targets, controls, angle };
        if kind_name(&op) != kind_str {
            return Err(perr(n, format!("{kind_str} does not match its controls")));
        }
        circuit.push(op).map_err(|e| perr(n, e.to_string()))?;
    }
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_circuit() -> Circuit {
        let mut c = Circuit::new(4).unwrap();
        c.push(GateOp::h(0)).unwrap();
        c.push(GateOp::cnot(0, 1)).unwrap();
        c.push(GateOp::mcx(vec![Control::open(0), Control::closed(1)], 3)).unwrap();
        c.push(GateOp::mcx(vec![Control::open(2)], 3)).unwrap();
        c.push_param(GateKind::RY, 2, "theta").unwrap();
        c.push(GateOp::rx(1, Angle::Fixed(0.1))).unwrap();
        c.push(GateOp::rz(1, Angle::Fixed(-1e-20))).unwrap();
        c.push(GateOp::swap(0, 2).with_controls(vec![Control::closed(3)])).unwrap();
        c.push(GateOp::mcu(vec![Control::closed(0)], 1, Matrix2::ry(0.3))).unwrap();
        c.push(GateOp::reset(3)).unwrap();
        c.push(GateOp::ry(2, Angle::param(0)).inverse().unwrap()).unwrap();
        c
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let c = sample_circuit();
        let text = write_circuit(&c);
        let parsed = parse_circuit(&text).unwrap();
        assert_eq!(parsed, c);
        assert_eq!(write_circuit(&parsed), text);
        assert!(text.contains("GATE CNOT targets=[1] controls=[(0,1)]"));
        assert!(text.contains("GATE MCX targets=[3] controls=[(0,0),(1,1)]"));
        assert!(text.contains("angle=-$theta"));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_circuit("").is_err());
        assert!(parse_circuit("QCIRCUIT v2\nWIDTH 1\nPARAMS\n").is_err());
        let bad = "QCIRCUIT v1\nWIDTH 2\nPARAMS\nGATE RY targets=[0] controls=[] angle=$nope\n";
        assert!(matches!(parse_circuit(bad), Err(Error::Parse { line: 4, .. })));
        let bad = "QCIRCUIT v1\nWIDTH 2\nPARAMS\nGATE CNOT targets=[0] controls=[(1,0)]\n";
        assert!(parse_circuit(bad).is_err());
        let bad = "QCIRCUIT v1\nWIDTH 2\nPARAMS\nGATE X targets=[2] controls=[]\n";
        assert!(parse_circuit(bad).is_err());
    }

    fn arb_op(width: usize) -> impl Strategy<Value = GateOp> {
        let kinds = prop_oneof![
            Just(0u8), Just(1), Just(2), Just(3), Just(4), Just(5), Just(6)
        ];
        (kinds, proptest::collection::vec(any::<bool>(), width), any::<f64>(), 0..width, 0..width)
            .prop_filter_map("distinct", move |(k, ctl, a, t, t2)| {
                let a = if a.is_finite() { a } else { 0.25 };
                let mut op = match k {
                    0 => GateOp::x(t),
                    1 => GateOp::h(t),
                    2 => GateOp::rx(t, Angle::Fixed(a)),
                    3 => GateOp::ry(t, Angle::Fixed(a)),
                    4 => GateOp::rz(t, Angle::Fixed(a)),
                    5 if t != t2 => GateOp::swap(t, t2),
                    6 => GateOp::mcu(vec![], t, Matrix2::rx(a.rem_euclid(7.0))),
                    _ => return None,
                };
                let used: Vec<usize> = op.targets.clone();
                op.controls = ctl
                    .iter()
                    .enumerate()
                    .filter(|(q, _)| !used.contains(q) && q % 2 == 0)
                    .map(|(q, &closed)| Control { qubit: q, polarity: Polarity::from_bit(closed as usize) })
                    .collect();
                Some(op)
            })
    }

    proptest! {
        #[test]
        fn arbitrary_circuits_round_trip(ops in proptest::collection::vec(arb_op(5), 0..30)) {
            let mut c = Circuit::new(5).unwrap();
            for op in ops {
                c.push(op).unwrap();
            }
            let text = write_circuit(&c);
            let parsed = parse_circuit(&text).unwrap();
            prop_assert_eq!(&parsed, &c);
            prop_assert_eq!(write_circuit(&parsed), text);
        }
    }
}
