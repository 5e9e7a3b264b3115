//! Plain-text body files.
//!
//! ```text
//! polytope            # kind: polytope | ball | cube | simplex
//! 4 2                 # polytope: m n, then m rows of `a_j1 .. a_jn b_j`
//! 1 0 1               # ball/cube: `n radius`; simplex: `n`
//! -1 0 1
//! 0 1 1
//! 0 -1 1
//! inner 0 0 1         # optional: declared inner ball centre and radius
//! ```
//!
//! Blank lines and `#` comments are ignored; errors carry 1-based line numbers.

use std::path::Path;

use nalgebra::DVector;

use super::{Body, BodyKind, Polytope, Shape};
use crate::error::{Error, Result};

/// Builds the body once the optional declared inner ball is known.
type BuildBody = Box<dyn FnOnce(Option<(DVector<f64>, f64)>) -> Result<Body>>;

struct Lines<'a> {
    label: &'a str,
    inner: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, label: &'a str) -> Self {
        let inner = text
            .lines()
            .enumerate()
            .filter_map(|(i, raw)| {
                let body = raw.split('#').next().unwrap_or("").trim();
                (!body.is_empty()).then(|| (i + 1, body.split_whitespace().collect()))
            })
            .collect();
        Lines {
            label,
            inner,
            pos: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.label.to_string(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let last = self.inner.last().map_or(1, |l| l.0);
        let item = self
            .inner
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err(last + 1, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(item)
    }

    fn peek(&self) -> Option<&(usize, Vec<&'a str>)> {
        self.inner.get(self.pos)
    }

    fn numbers(&self, line: usize, toks: &[&str]) -> Result<Vec<f64>> {
        toks.iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(line, format!("not a finite number: {t:?}")))
            })
            .collect()
    }

    fn count(&self, line: usize, tok: &str) -> Result<usize> {
        tok.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| self.err(line, format!("expected a positive integer, got {tok:?}")))
    }
}

pub fn read_body_file(path: impl AsRef<Path>) -> Result<Body> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_body(&text, &path.display().to_string())
}

pub fn parse_body(text: &str, label: &str) -> Result<Body> {
    let mut lines = Lines::new(text, label);
    let (tag_line, tag) = lines.next("kind tag")?;
    if tag.len() != 1 {
        return Err(lines.err(tag_line, "kind line must hold a single tag"));
    }
    let kind = tag[0];
    let (dim_line, header) = lines.next("dimension line")?;

    let (n, shape_body): (usize, BuildBody) =
        match kind {
            "polytope" => {
                if header.len() != 2 {
                    return Err(lines.err(dim_line, "expected `m n`"));
                }
                let m = lines.count(dim_line, header[0])?;
                let n = lines.count(dim_line, header[1])?;
                let mut rows = Vec::with_capacity(m);
                let mut b = Vec::with_capacity(m);
                for _ in 0..m {
                    let (ln, toks) = lines.next("constraint row")?;
                    if toks.len() != n + 1 {
                        return Err(lines.err(
                            ln,
                            format!("expected {} numbers, found {}", n + 1, toks.len()),
                        ));
                    }
                    let mut vals = lines.numbers(ln, &toks)?;
                    b.push(vals.pop().unwrap_or_default());
                    rows.push(vals);
                }
                let poly = Polytope::from_rows(&rows, &b)
                    .map_err(|e| lines.err(dim_line, e.to_string()))?;
                (
                    n,
                    Box::new(move |inner| match inner {
                        Some((c, r)) => Body::polytope_with_inner(poly, c, r),
                        None => Body::polytope(poly),
                    }),
                )
            }
            "ball" | "cube" => {
                if header.len() != 2 {
                    return Err(lines.err(dim_line, "expected `n radius`"));
                }
                let n = lines.count(dim_line, header[0])?;
                let radius = lines.numbers(dim_line, &header[1..])?[0];
                if !(radius > 0.0) {
                    return Err(lines.err(dim_line, "radius must be positive"));
                }
                let is_ball = kind == "ball";
                (
                    n,
                    Box::new(move |inner| {
                        let body = if is_ball {
                            Body::ball(n, radius)?
                        } else {
                            Body::cube(n, radius)?
                        };
                        match inner {
                            None => Ok(body),
                            Some((c, r)) => redeclare_inner(body, c, r),
                        }
                    }),
                )
            }
            "simplex" => {
                if header.len() != 1 {
                    return Err(lines.err(dim_line, "expected `n`"));
                }
                let n = lines.count(dim_line, header[0])?;
                (
                    n,
                    Box::new(move |inner| {
                        let body = Body::simplex(n)?;
                        match inner {
                            None => Ok(body),
                            Some((c, r)) => redeclare_inner(body, c, r),
                        }
                    }),
                )
            }
            other => {
                return Err(lines.err(tag_line, format!("unknown body kind {other:?}")));
            }
        };

    let mut inner = None;
    let mut inner_line = dim_line;
    if let Some((ln, toks)) = lines.peek().cloned() {
        lines.pos += 1;
        if toks[0] != "inner" {
            return Err(lines.err(ln, format!("unexpected trailing content {:?}", toks[0])));
        }
        if toks.len() != n + 2 {
            return Err(lines.err(
                ln,
                format!("inner line needs {} centre coordinates and a radius", n),
            ));
        }
        let vals = lines.numbers(ln, &toks[1..])?;
        inner = Some((DVector::from_column_slice(&vals[..n]), vals[n]));
        inner_line = ln;
    }
    if let Some((ln, _)) = lines.peek() {
        return Err(lines.err(*ln, "unexpected content after the inner ball line"));
    }
    shape_body(inner).map_err(|e| match e {
        Error::InvalidInput(msg) => lines.err(inner_line, msg),
        other => other,
    })
}

/// Swap the analytic inner ball for a declared one after checking it fits.
fn redeclare_inner(body: Body, center: DVector<f64>, radius: f64) -> Result<Body> {
    if center.len() != body.dim() {
        return Err(Error::InvalidInput("inner centre has the wrong dimension".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("inner radius must be positive".into()));
    }
    let fits = match body.shape() {
        Shape::Ball { radius: rho } => center.norm() + radius <= *rho,
        Shape::Polytope { poly, .. } => (0..poly.num_constraints())
            .all(|j| poly.slack(j, center.as_slice()) >= radius * poly.row_norms()[j]),
        _ => false,
    };
    if !fits {
        return Err(Error::InvalidInput(
            "declared inner ball is not contained in the body".into(),
        ));
    }
    // R about the new centre: old R plus the centre displacement
    let outer = body.outer_radius() + (&body.inner_ball().center - &center).norm();
    let mut out = body.with_outer_radius(outer);
    out.inner = super::InnerBall { center, radius };
    Ok(out)
}

/// Serialize a base body (polytope, ball, cube, simplex) in the file format.
pub fn format_body(body: &Body) -> Result<String> {
    let mut out = String::new();
    let n = body.dim();
    match body.shape() {
        Shape::Ball { radius } => out.push_str(&format!("ball\n{n} {radius}\n")),
        Shape::Polytope {
            kind: BodyKind::Cube,
            poly,
        } => out.push_str(&format!("cube\n{n} {}\n", poly.b()[0])),
        Shape::Polytope {
            kind: BodyKind::Simplex,
            ..
        } => out.push_str(&format!("simplex\n{n}\n")),
        Shape::Polytope { poly, .. } => {
            out.push_str(&format!("polytope\n{} {n}\n", poly.num_constraints()));
            for j in 0..poly.num_constraints() {
                let row: Vec<String> = poly.row(j).iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("{} {}\n", row.join(" "), poly.b()[j]));
            }
        }
        _ => {
            return Err(Error::InvalidInput(
                "only base bodies can be written to a body file".into(),
            ))
        }
    }
    let c: Vec<String> = body.inner.center.iter().map(|v| v.to_string()).collect();
    out.push_str(&format!("inner {} {}\n", c.join(" "), body.inner.radius));
    Ok(out)
}
