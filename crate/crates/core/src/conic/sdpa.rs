//! Sparse SDPA (`.dat-s`) writer.
//!
//! The model maps onto the SDPA *dual* form `max F0 . Y  s.t.  Fk . Y = ck, Y >= 0`:
//! each matrix variable becomes one block (complex variables through their
//! real embedding, with halved pairings), and all scalar variables share one
//! trailing diagonal block. A scalar with lower bound `lb` is shifted to
//! `lb + z`; a free scalar is split as `z+ - z-`. `F0` is the negated
//! objective, so the SDPA optimum is `-(our optimum) + offset`, where the
//! offset is written in the header comment.

use std::fmt::Write as _;

use super::{real_embedding, ConicProblem, Field, LinearFunctional};

struct ScalarSlot {
    pos: usize,
    neg: Option<usize>,
    shift: f64,
}

pub(super) fn write(p: &ConicProblem) -> String {
    let mut slots = Vec::with_capacity(p.scalar_vars.len());
    let mut next = 1;
    for s in &p.scalar_vars {
        match s.lower {
            Some(lb) => {
                slots.push(ScalarSlot { pos: next, neg: None, shift: lb });
                next += 1;
            }
            None => {
                slots.push(ScalarSlot { pos: next, neg: Some(next + 1), shift: 0.0 });
                next += 2;
            }
        }
    }
    let diag_len = next - 1;
    let scalar_block = p.psd_vars.len() + 1;

    let shift_of = |f: &LinearFunctional| -> f64 {
        f.scalar_terms.iter().map(|(s, c)| c * slots[s.0].shift).sum()
    };

    let mut out = String::new();
    let offset = shift_of(&p.objective);
    let _ = writeln!(out, "\"incompat conic problem: min = offset - sdpa_opt, offset = {offset}");
    let _ = writeln!(out, "{}", p.eq_constraints.len());
    let blocks = p.psd_vars.len() + usize::from(diag_len > 0);
    let _ = writeln!(out, "{blocks}");
    let mut structure: Vec<String> = p
        .psd_vars
        .iter()
        .map(|v| match v.field {
            Field::Complex => (2 * v.dim).to_string(),
            Field::Real => v.dim.to_string(),
        })
        .collect();
    if diag_len > 0 {
        structure.push(format!("-{diag_len}"));
    }
    let _ = writeln!(out, "{}", structure.join(" "));
    let rhs: Vec<String> = p
        .eq_constraints
        .iter()
        .map(|c| format!("{}", c.rhs - shift_of(&c.lhs)))
        .collect();
    let _ = writeln!(out, "{}", rhs.join(" "));

    let emit = |out: &mut String, matno: usize, f: &LinearFunctional, sign: f64| {
        for (v, c) in &f.matrix_terms {
            let decl = &p.psd_vars[v.0];
            let m = match decl.field {
                Field::Complex => real_embedding(c) * 0.5,
                Field::Real => c.map(|z| z.re),
            };
            for i in 0..m.nrows() {
                for j in i..m.ncols() {
                    let val = sign * m[(i, j)];
                    if val != 0.0 {
                        let _ = writeln!(out, "{matno} {} {} {} {val}", v.0 + 1, i + 1, j + 1);
                    }
                }
            }
        }
        for (s, c) in &f.scalar_terms {
            let slot = &slots[s.0];
            if *c != 0.0 {
                let _ = writeln!(out, "{matno} {scalar_block} {0} {0} {1}", slot.pos, sign * c);
                if let Some(neg) = slot.neg {
                    let _ = writeln!(out, "{matno} {scalar_block} {neg} {neg} {}", -sign * c);
                }
            }
        }
    };
    emit(&mut out, 0, &p.objective, -1.0);
    for (k, c) in p.eq_constraints.iter().enumerate() {
        emit(&mut out, k + 1, &c.lhs, 1.0);
    }
    out
}
