//! Line-oriented text dump of a hull, exact under round trip.
//!
//! ```text
//! hull v1 n=<n>
//! point <i> x <x…> j <J> u <U…>
//! lower <slot> live <v…>      | lower <slot> free
//! outer <slot> live <v…>      | outer <slot> free
//! link <i> facets <f…>        | link <i> absorbed <k>
//! outer_link <i> <g…>
//! free_lower <slot…>
//! free_outer <slot…>
//! centroid_x <c…>
//! centroid_xj <c…>
//! ```

use std::fmt::Write as _;

use nalgebra::DVector;

use super::{ConvexHull, HullError, VertexLink};

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_dump(hull: &ConvexHull) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "hull v1 n={}", hull.n);
    for i in 0..hull.len() {
        let _ = writeln!(
            out,
            "point {i} x {} j {} u {}",
            join(hull.xs[i].iter()),
            hull.js[i],
            join(hull.seqs[i].iter())
        );
    }
    for (name, slots) in [("lower", &hull.lower), ("outer", &hull.outer)] {
        for (s, f) in slots.iter().enumerate() {
            match f {
                Some(v) => {
                    let _ = writeln!(out, "{name} {s} live {}", join(v.iter()));
                }
                None => {
                    let _ = writeln!(out, "{name} {s} free");
                }
            }
        }
    }
    for (i, link) in hull.links.iter().enumerate() {
        match link {
            VertexLink::Facets(f) => {
                let _ = writeln!(out, "link {i} facets {}", join(f.iter()));
            }
            VertexLink::Absorbed(k) => {
                let _ = writeln!(out, "link {i} absorbed {k}");
            }
        }
    }
    for (i, g) in hull.outer_links.iter().enumerate() {
        let _ = writeln!(out, "outer_link {i} {}", join(g.iter()));
    }
    let _ = writeln!(out, "free_lower {}", join(hull.free_lower.iter()));
    let _ = writeln!(out, "free_outer {}", join(hull.free_outer.iter()));
    let _ = writeln!(out, "centroid_x {}", join(hull.centroid_x.iter()));
    let _ = writeln!(out, "centroid_xj {}", join(hull.centroid_xj.iter()));
    out
}

struct Cursor<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl Cursor<'_> {
    fn err(&self, reason: impl Into<String>) -> HullError {
        HullError::Parse {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn word(&mut self) -> Result<&str, HullError> {
        let line = self.line;
        self.tokens.next().ok_or(HullError::Parse {
            line,
            reason: "unexpected end of line".into(),
        })
    }

    fn expect(&mut self, word: &str) -> Result<(), HullError> {
        let got = self.word()?;
        if got == word {
            Ok(())
        } else {
            let got = got.to_string();
            Err(self.err(format!("expected `{word}`, found `{got}`")))
        }
    }

    fn index(&mut self) -> Result<usize, HullError> {
        let w = self.word()?.to_string();
        w.parse().map_err(|_| self.err(format!("bad index `{w}`")))
    }

    fn rest_indices(&mut self) -> Result<Vec<usize>, HullError> {
        let words: Vec<String> = self.tokens.by_ref().map(str::to_string).collect();
        words
            .iter()
            .map(|w| w.parse().map_err(|_| self.err(format!("bad index `{w}`"))))
            .collect()
    }

    fn floats_until(&mut self, stop: Option<&str>) -> Result<Vec<f64>, HullError> {
        let mut out = Vec::new();
        loop {
            let Some(w) = self.tokens.next() else {
                return match stop {
                    None => Ok(out),
                    Some(s) => Err(self.err(format!("missing `{s}`"))),
                };
            };
            if Some(w) == stop {
                return Ok(out);
            }
            let w = w.to_string();
            out.push(w.parse().map_err(|_| self.err(format!("bad number `{w}`")))?);
        }
    }
}

fn place<T: Clone>(list: &mut Vec<Option<T>>, at: usize, value: T, cursor: &Cursor) -> Result<(), HullError> {
    if at != list.len() {
        return Err(cursor.err(format!("entry {at} out of order")));
    }
    list.push(Some(value));
    Ok(())
}

/// Parses the format written by [`write_dump`]. Structural consistency is not
/// checked here; run [`super::audit`] on the result.
pub fn parse_dump(text: &str) -> Result<ConvexHull, HullError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(HullError::Parse {
        line: 1,
        reason: "empty dump".into(),
    })?;
    let mut c = Cursor {
        line: 1,
        tokens: header.split_whitespace(),
    };
    c.expect("hull")?;
    c.expect("v1")?;
    let n: usize = c
        .word()?
        .strip_prefix("n=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| c.err("expected n=<dimension>"))?;
    if n == 0 {
        return Err(c.err("dimension must be positive"));
    }

    let mut points: Vec<Option<(Vec<f64>, f64, Vec<f64>)>> = Vec::new();
    let mut lower: Vec<Option<Option<Vec<usize>>>> = Vec::new();
    let mut outer: Vec<Option<Option<Vec<usize>>>> = Vec::new();
    let mut links: Vec<Option<VertexLink>> = Vec::new();
    let mut outer_links: Vec<Option<Vec<usize>>> = Vec::new();
    let mut free_lower = None;
    let mut free_outer = None;
    let mut centroid_x = None;
    let mut centroid_xj = None;

    for (no, line) in lines {
        let mut c = Cursor {
            line: no + 1,
            tokens: line.split_whitespace(),
        };
        let tag = c.word()?.to_string();
        match tag.as_str() {
            "point" => {
                let i = c.index()?;
                c.expect("x")?;
                let x = c.floats_until(Some("j"))?;
                let j = c.floats_until(Some("u"))?;
                let u = c.floats_until(None)?;
                if x.len() != n || j.len() != 1 {
                    return Err(c.err("point needs n coordinates and one cost"));
                }
                place(&mut points, i, (x, j[0], u), &c)?;
            }
            "lower" | "outer" => {
                let s = c.index()?;
                let state = c.word()?.to_string();
                let entry = match state.as_str() {
                    "live" => Some(c.rest_indices()?),
                    "free" => None,
                    other => return Err(c.err(format!("unknown facet state `{other}`"))),
                };
                let list = if tag == "lower" { &mut lower } else { &mut outer };
                place(list, s, entry, &c)?;
            }
            "link" => {
                let i = c.index()?;
                let kind = c.word()?.to_string();
                let link = match kind.as_str() {
                    "facets" => VertexLink::Facets(c.rest_indices()?),
                    "absorbed" => VertexLink::Absorbed(c.index()?),
                    other => return Err(c.err(format!("unknown link kind `{other}`"))),
                };
                place(&mut links, i, link, &c)?;
            }
            "outer_link" => {
                let i = c.index()?;
                let g = c.rest_indices()?;
                place(&mut outer_links, i, g, &c)?;
            }
            "free_lower" => free_lower = Some(c.rest_indices()?),
            "free_outer" => free_outer = Some(c.rest_indices()?),
            "centroid_x" => centroid_x = Some(c.floats_until(None)?),
            "centroid_xj" => centroid_xj = Some(c.floats_until(None)?),
            other => return Err(c.err(format!("unknown record `{other}`"))),
        }
    }

    let end = text.lines().count();
    let missing = |what: &str| HullError::Parse {
        line: end,
        reason: format!("missing {what}"),
    };
    let m = points.len();
    if links.len() != m || outer_links.len() != m {
        return Err(missing("link records for every point"));
    }
    let centroid_x = centroid_x.ok_or_else(|| missing("centroid_x"))?;
    let centroid_xj = centroid_xj.ok_or_else(|| missing("centroid_xj"))?;
    if centroid_x.len() != n || centroid_xj.len() != n + 1 {
        return Err(missing("centroids of the right dimension"));
    }
    let mut xs = Vec::with_capacity(m);
    let mut seqs = Vec::with_capacity(m);
    let mut js = Vec::with_capacity(m);
    for (x, j, u) in points.into_iter().flatten() {
        xs.push(DVector::from_vec(x));
        js.push(j);
        seqs.push(DVector::from_vec(u));
    }
    let scale_x = xs.iter().map(|x| x.amax()).fold(0.0, f64::max);
    Ok(ConvexHull {
        n,
        xs,
        seqs,
        js,
        lower: lower.into_iter().flatten().collect(),
        outer: outer.into_iter().flatten().collect(),
        free_lower: free_lower.ok_or_else(|| missing("free_lower"))?,
        free_outer: free_outer.ok_or_else(|| missing("free_outer"))?,
        links: links.into_iter().flatten().collect(),
        outer_links: outer_links.into_iter().flatten().collect(),
        centroid_x: DVector::from_vec(centroid_x),
        centroid_xj: DVector::from_vec(centroid_xj),
        scale_x,
    })
}
