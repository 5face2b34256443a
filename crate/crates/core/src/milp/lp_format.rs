//! Writer for the CPLEX-style LP text format, for cross-checking models with
//! external solvers. Reading is not supported.

use std::fmt::Write as _;

use super::{MilpModel, ObjSense, Sense, VarId, VarKind};

pub fn write_lp(model: &MilpModel) -> String {
    let names: Vec<String> = model
        .vars()
        .iter()
        .enumerate()
        .map(|(j, v)| sanitize(&v.name, j))
        .collect();
    let mut out = String::new();
    out.push_str(match model.objective().sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    let obj = model.objective();
    out.push_str(" obj:");
    write_terms(&mut out, &obj.coeffs, &names);
    if obj.offset != 0.0 {
        // The format has no constant term; keep it visible as a fixed column.
        let _ = write!(out, " {} __offset", signed(obj.offset));
    } else if obj.coeffs.is_empty() {
        out.push_str(" 0 __offset");
    }
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints().iter().enumerate() {
        let _ = write!(out, " c{i}:");
        if c.coeffs.is_empty() {
            out.push_str(" 0 __offset");
        }
        write_terms(&mut out, &c.coeffs, &names);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars().iter().zip(&names) {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {name} = {}", fmt_num(v.lower));
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(v.lower), fmt_num(v.upper));
            }
            (true, false) => {
                let _ = writeln!(out, " {name} >= {}", fmt_num(v.lower));
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", fmt_num(v.upper));
            }
        }
    }
    out.push_str(" __offset = 1\n");
    let section = |out: &mut String, title: &str, kind: VarKind| {
        let listed: Vec<&String> = model
            .vars()
            .iter()
            .zip(&names)
            .filter(|(v, _)| v.kind == kind)
            .map(|(_, n)| n)
            .collect();
        if !listed.is_empty() {
            let _ = writeln!(out, "{title}");
            for n in listed {
                let _ = writeln!(out, " {n}");
            }
        }
    };
    section(&mut out, "Generals", VarKind::Integer);
    section(&mut out, "Binaries", VarKind::Binary);
    out.push_str("End\n");
    out
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)], names: &[String]) {
    for (v, c) in terms {
        let _ = write!(out, " {} {}", signed(*c), names[v.0]);
    }
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", fmt_num(-c))
    } else {
        format!("+ {}", fmt_num(c))
    }
}

fn fmt_num(v: f64) -> String {
    // `{:?}` is Rust's shortest round-trip representation.
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn sanitize(name: &str, index: usize) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    if clean.is_empty() || clean.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("v{index}_{clean}")
    } else {
        clean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_all_sections() {
        let mut m = MilpModel::new();
        let x = m.add_var("x0", VarKind::Continuous, -1.0, 2.5);
        let z = m.add_var("z(1,2)", VarKind::Binary, 0.0, 1.0);
        let k = m.add_var("k", VarKind::Integer, 0.0, 7.0);
        let f = m.add_var("f", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
        m.add_constraint([(x, 1.0), (z, -2.0)], Sense::Le, 0.5);
        m.add_constraint([(k, 1.0), (f, 1.0)], Sense::Eq, 3.0);
        m.set_objective([(x, 1.0), (k, -0.25)], ObjSense::Minimize, 0.0);
        let text = write_lp(&m);
        let expected = "Minimize
 obj: + 1 x0 - 0.25 k
Subject To
 c0: + 1 x0 - 2 z_1_2_ <= 0.5
 c1: + 1 k + 1 f = 3
Bounds
 -1 <= x0 <= 2.5
 0 <= k <= 7
 f free
 __offset = 1
Generals
 k
Binaries
 z_1_2_
End
";
        assert_eq!(text, expected);
    }
}
