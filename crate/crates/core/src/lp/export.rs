//! Text export in CPLEX LP format for cross-checking against external
//! solvers. Coefficients print with 17 significant digits so the file
//! round-trips the exact f64 values.

use super::{LpProblem, RowSense, Sense};
use std::io::{self, Write};

fn num(x: f64) -> String {
    format!("{:.16e}", x)
}

fn ident(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

pub fn write_lp_format(p: &LpProblem, w: &mut impl Write) -> io::Result<()> {
    match p.sense {
        Sense::Min => writeln!(w, "Minimize")?,
        Sense::Max => writeln!(w, "Maximize")?,
    }
    write!(w, " obj:")?;
    let mut first = true;
    for v in &p.vars {
        if v.obj != 0.0 {
            write!(w, " {} {} {}", if first && v.obj >= 0.0 { "" } else if v.obj >= 0.0 { "+" } else { "-" }, num(v.obj.abs()), ident(&v.name))?;
            first = false;
        }
    }
    if first {
        write!(w, " 0 {}", ident(&p.vars.first().map(|v| v.name.as_str()).unwrap_or("x")))?;
    }
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for r in &p.rows {
        write!(w, " {}:", ident(&r.name))?;
        let mut first = true;
        for &(v, c) in &r.terms {
            let sign = if c >= 0.0 {
                if first { "" } else { "+" }
            } else {
                "-"
            };
            write!(w, " {} {} {}", sign, num(c.abs()), ident(&p.vars[v].name))?;
            first = false;
        }
        if first {
            write!(w, " 0 {}", ident(&p.vars[0].name))?;
        }
        let op = match r.sense {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        };
        writeln!(w, " {} {}", op, num(r.rhs))?;
    }
    writeln!(w, "Bounds")?;
    for v in &p.vars {
        let name = ident(&v.name);
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => writeln!(w, " {} <= {} <= {}", num(v.lower), name, num(v.upper))?,
            (true, false) => writeln!(w, " {} >= {}", name, num(v.lower))?,
            (false, true) => writeln!(w, " {} <= {}", name, num(v.upper))?,
            (false, false) => writeln!(w, " {} free", name)?,
        }
    }
    writeln!(w, "End")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LpProblem, RowSense, Sense};

    #[test]
    fn export_round_trips_coefficients() {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x one", 0.0, 1.5, 0.1 + 0.2);
        lp.add_row("r/1", RowSense::Le, 1.0 / 3.0, vec![(x, 2.0 / 3.0)]);
        let mut buf = Vec::new();
        write_lp_format(&lp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Maximize"));
        assert!(text.contains("x_one"));
        // 17 significant digits reproduce the exact doubles.
        let c = format!("{:.16e}", 2.0 / 3.0);
        assert!(text.contains(&c), "{}", text);
        let parsed: f64 = c.parse().unwrap();
        assert_eq!(parsed, 2.0 / 3.0);
    }
}
