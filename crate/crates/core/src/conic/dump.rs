//! Plain-text dump of an [`SdpProblem`] for offline debugging.

use std::fmt::Write;

use super::{HermCoeff, LinearForm, SdpProblem};

fn write_coeff(out: &mut String, block: usize, c: &HermCoeff) {
    for (s, v) in &c.rank_one {
        let _ = write!(out, "  block {block} rank1 {s:e}");
        for z in v.iter() {
            let _ = write!(out, " {:e} {:e}", z.re, z.im);
        }
        out.push('\n');
    }
    if let Some(d) = &c.diag {
        let _ = write!(out, "  block {block} diag");
        for x in d.iter() {
            let _ = write!(out, " {x:e}");
        }
        out.push('\n');
    }
    for (i, j, v) in &c.entries {
        let _ = writeln!(out, "  block {block} entry {i} {j} {:e} {:e}", v.re, v.im);
    }
    if let Some(a) = &c.dense {
        let _ = write!(out, "  block {block} dense");
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let _ = write!(out, " {:e} {:e}", a[(i, j)].re, a[(i, j)].im);
            }
        }
        out.push('\n');
    }
}

fn write_form(out: &mut String, f: &LinearForm) {
    for (b, c) in &f.blocks {
        write_coeff(out, b.0, c);
    }
    for (s, v) in &f.scalars {
        let _ = writeln!(out, "  scalar {} {v:e}", s.0);
    }
}

/// Human-readable listing of every block, scalar and constraint.
pub fn dump(p: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sdp blocks={} scalars={} constraints={}", p.blocks.len(), p.scalars.len(), p.constraints.len());
    for (i, (name, d)) in p.blocks.iter().enumerate() {
        let _ = writeln!(out, "block {i} {name} {d}");
    }
    for (i, name) in p.scalars.iter().enumerate() {
        let _ = writeln!(out, "scalar {i} {name}");
    }
    out.push_str("minimize\n");
    write_form(&mut out, &p.objective);
    for (i, c) in p.constraints.iter().enumerate() {
        let _ = writeln!(out, "constraint {i} {} {} {:e}", c.label, c.sense.symbol(), c.rhs);
        write_form(&mut out, &c.form);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{LinearForm, Sense};
    use super::*;

    #[test]
    fn lists_all_parts() {
        let mut p = SdpProblem::new();
        let x = p.add_block("X", 2);
        let t = p.add_scalar("t");
        p.set_objective(LinearForm::new().block(x, HermCoeff::identity(2)));
        p.constrain("cap", LinearForm::new().scalar(t, 1.0), Sense::Le, 3.0);
        let s = dump(&p);
        assert!(s.contains("block 0 X 2"));
        assert!(s.contains("scalar 0 t"));
        assert!(s.contains("constraint 0 cap <= 3e0"));
        assert!(s.contains("block 0 diag 1e0 1e0"));
    }
}
