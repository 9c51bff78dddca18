//! Graphviz rendering of a tape's computational graph.

use std::fmt::Write as _;

use crate::tape::{Mode, Tape, TapeError};

/// DOT digraph with one node per vertex and one edge per tape partial,
/// labelled with the partial rounded to two decimals. DCG tapes show L-values
/// as boxes; repeated writes to an L-value become cycles.
pub fn to_dot(tape: &Tape) -> Result<String, TapeError> {
    let mut out = String::from("digraph tape {\n  rankdir=BT;\n");
    let records = tape.elementals()?;
    let mut nodes: Vec<i64> = tape.inputs().iter().map(|v| v.0).collect();
    for r in &records {
        nodes.extend(r.preds.iter().map(|(v, _)| v.0));
        nodes.push(r.result.0);
    }
    nodes.sort_unstable();
    nodes.dedup();
    for v in nodes {
        let shape = if v < 0 { "box" } else { "ellipse" };
        let mut attrs = format!("shape={shape}");
        if tape.inputs().iter().any(|x| x.0 == v) {
            attrs.push_str(", style=bold");
        }
        if tape.outputs().iter().any(|y| y.0 == v) {
            attrs.push_str(", peripheries=2");
        }
        let _ = writeln!(out, "  \"{v}\" [{attrs}];");
    }
    for r in &records {
        for (i, d) in &r.preds {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{:.2}\"];",
                i.0, r.result.0, d
            );
        }
    }
    if tape.mode() == Mode::Dcg {
        out.push_str("  label=\"dcg\";\n");
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{ResultKind, TapeBuilder};

    #[test]
    fn edges_carry_partials() {
        let mut b = TapeBuilder::new(Mode::Dag);
        let x = b.register_input().unwrap();
        let y = b
            .record_elemental(&[(x, 0.5403)], ResultKind::Remainder)
            .unwrap();
        b.register_output(y).unwrap();
        let dot = to_dot(&b.finalize().unwrap()).unwrap();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("\"0\" -> \"1\" [label=\"0.54\"];"));
        assert!(dot.contains("\"1\" [shape=ellipse, peripheries=2];"));
    }
}
