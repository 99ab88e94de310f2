//! Line-oriented mesh text format.
//!
//! ```text
//! FVMESH 1
//! cell <id> <x> <y> <measure>
//! edge <id> <I|D|N> <K> [<L>] <measure> <d_sigma> <d_K_sigma> [<d_L_sigma>]
//! ```
//!
//! Ids are consecutive from zero. Numbers are written as shortest
//! round-trip decimals, so a write/read cycle reproduces every `f64`.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use super::{Cell, Edge, EdgeKind, Mesh};
use crate::error::{Error, Result};
use crate::format::fmt_f64;

pub const HEADER: &str = "FVMESH 1";

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for (i, c) in mesh.cells().iter().enumerate() {
        let _ = writeln!(
            out,
            "cell {i} {} {} {}",
            fmt_f64(c.center[0]),
            fmt_f64(c.center[1]),
            fmt_f64(c.measure)
        );
    }
    for (i, e) in mesh.edges().iter().enumerate() {
        let (m, ds, dk) = (fmt_f64(e.measure), fmt_f64(e.d_sigma), fmt_f64(e.d_k));
        let _ = match e.kind {
            EdgeKind::Interior { k, l } => writeln!(
                out,
                "edge {i} I {k} {l} {m} {ds} {dk} {}",
                fmt_f64(e.d_l.unwrap_or(e.d_sigma - e.d_k))
            ),
            EdgeKind::Dirichlet { k } => writeln!(out, "edge {i} D {k} {m} {ds} {dk}"),
            EdgeKind::Neumann { k } => writeln!(out, "edge {i} N {k} {m} {ds} {dk}"),
        };
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Fields<'a> {
    line: usize,
    it: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn next_str(&mut self, what: &str) -> Result<&'a str> {
        self.it
            .next()
            .ok_or_else(|| parse_err(self.line, format!("missing {what}")))
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let s = self.next_str(what)?;
        s.parse().map_err(|_| parse_err(self.line, format!("bad {what} '{s}'")))
    }

    fn index(&mut self, what: &str) -> Result<usize> {
        let s = self.next_str(what)?;
        s.parse().map_err(|_| parse_err(self.line, format!("bad {what} '{s}'")))
    }

    fn finish(mut self) -> Result<()> {
        match self.it.next() {
            None => Ok(()),
            Some(tok) => Err(parse_err(self.line, format!("unexpected trailing field '{tok}'"))),
        }
    }
}

pub fn read_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == ["FVMESH", "1"] => {}
        Some((n, l)) => return Err(parse_err(n, format!("expected header '{HEADER}', found '{l}'"))),
        None => return Err(parse_err(0, "empty mesh file")),
    }
    let mut cells = Vec::new();
    let mut edges = Vec::new();
    for (line, text) in lines {
        let mut f = Fields {
            line,
            it: text.split_whitespace(),
        };
        match f.next_str("record type")? {
            "cell" => {
                let id = f.index("cell id")?;
                if id != cells.len() {
                    return Err(parse_err(line, format!("cell id {id} out of sequence")));
                }
                let x = f.float("x")?;
                let y = f.float("y")?;
                let measure = f.float("measure")?;
                f.finish()?;
                cells.push(Cell {
                    center: [x, y],
                    measure,
                });
            }
            "edge" => {
                let id = f.index("edge id")?;
                if id != edges.len() {
                    return Err(parse_err(line, format!("edge id {id} out of sequence")));
                }
                let kind_tag = f.next_str("edge kind")?;
                let k = f.index("cell K")?;
                let (kind, interior) = match kind_tag {
                    "I" => (
                        EdgeKind::Interior {
                            k,
                            l: f.index("cell L")?,
                        },
                        true,
                    ),
                    "D" => (EdgeKind::Dirichlet { k }, false),
                    "N" => (EdgeKind::Neumann { k }, false),
                    other => return Err(parse_err(line, format!("unknown edge kind '{other}'"))),
                };
                let measure = f.float("edge measure")?;
                let d_sigma = f.float("d_sigma")?;
                let d_k = f.float("d_K_sigma")?;
                let d_l = if interior { Some(f.float("d_L_sigma")?) } else { None };
                f.finish()?;
                if !(d_sigma > 0.0) {
                    return Err(parse_err(line, "d_sigma must be positive"));
                }
                edges.push(Edge {
                    kind,
                    measure,
                    d_sigma,
                    d_k,
                    d_l,
                    tau: measure / d_sigma,
                    midpoint: None,
                    normal: None,
                    face: None,
                });
            }
            other => return Err(parse_err(line, format!("unknown record '{other}'"))),
        }
    }
    Mesh::from_parts(cells, edges, None)
}
