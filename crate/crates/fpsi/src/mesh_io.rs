//! ASCII mesh files.
//!
//! ```text
//! fsimesh 1
//! vertices N
//! x y            (N lines)
//! triangles M
//! i j k Fluid    (M lines, subdomain Fluid or Poro)
//! facets K
//! i j Interface  (K lines, any facet tag)
//! ```
//!
//! Blank lines and everything after `#` are ignored. Coordinates are
//! written in shortest round-trip form, so reading a written mesh gives
//! back identical values.

use std::fmt::Write as _;
use std::path::Path;

use fpsi_core::mesh::{Facet, FacetTag, Mesh, Subdomain, Triangle};

pub const HEADER: &str = "fsimesh 1";

#[derive(Debug, thiserror::Error)]
pub enum MeshIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshIoError {
    MeshIoError::Parse {
        line,
        message: message.into(),
    }
}

pub fn to_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "vertices {}", mesh.vertices.len()).unwrap();
    for [x, y] in &mesh.vertices {
        writeln!(s, "{x:?} {y:?}").unwrap();
    }
    writeln!(s, "triangles {}", mesh.triangles.len()).unwrap();
    for t in &mesh.triangles {
        writeln!(s, "{} {} {} {}", t.v[0], t.v[1], t.v[2], t.sub.as_str()).unwrap();
    }
    writeln!(s, "facets {}", mesh.facets.len()).unwrap();
    for f in &mesh.facets {
        writeln!(s, "{} {} {}", f.v[0], f.v[1], f.tag.as_str()).unwrap();
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshIoError> {
    std::fs::write(path, to_string(mesh)).map_err(|source| MeshIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_mesh(path: &Path) -> Result<Mesh, MeshIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, and its 1-based number.
    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let words: Vec<&str> = content.split_whitespace().collect();
            if !words.is_empty() {
                return Some((i + 1, words));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), MeshIoError> {
        let last = self.last;
        self.next()
            .ok_or_else(|| parse_err(last + 1, format!("unexpected end of file, expected {what}")))
    }

    fn section(&mut self, name: &str) -> Result<usize, MeshIoError> {
        let (line, w) = self.expect(&format!("'{name} <count>'"))?;
        if w.len() != 2 || w[0] != name {
            return Err(parse_err(line, format!("expected '{name} <count>', found '{}'", w.join(" "))));
        }
        w[1].parse()
            .map_err(|_| parse_err(line, format!("invalid {name} count '{}'", w[1])))
    }
}

fn index(line: usize, s: &str, bound: usize) -> Result<usize, MeshIoError> {
    let i: usize = s
        .parse()
        .map_err(|_| parse_err(line, format!("invalid vertex index '{s}'")))?;
    if i >= bound {
        return Err(parse_err(
            line,
            format!("vertex index {i} out of range (mesh has {bound} vertices)"),
        ));
    }
    Ok(i)
}

pub fn parse(text: &str) -> Result<Mesh, MeshIoError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    match lines.next() {
        None => return Err(parse_err(1, "missing header")),
        Some((line, w)) => {
            if w.join(" ") != HEADER {
                return Err(parse_err(line, format!("missing header (expected '{HEADER}')")));
            }
        }
    }

    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, w) = lines.expect("a vertex line")?;
        if w.len() != 2 {
            return Err(parse_err(line, "vertex line needs 2 coordinates"));
        }
        let mut p = [0.0f64; 2];
        for (c, s) in p.iter_mut().zip(&w) {
            *c = s
                .parse()
                .map_err(|_| parse_err(line, format!("invalid coordinate '{s}'")))?;
            if !c.is_finite() {
                return Err(parse_err(line, format!("non-finite coordinate '{s}'")));
            }
        }
        vertices.push(p);
    }

    let nt = lines.section("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, w) = lines.expect("a triangle line")?;
        if w.len() != 4 {
            return Err(parse_err(line, "triangle line needs 3 indices and a subdomain"));
        }
        let v = [
            index(line, w[0], nv)?,
            index(line, w[1], nv)?,
            index(line, w[2], nv)?,
        ];
        let sub = Subdomain::parse(w[3]).ok_or_else(|| parse_err(line, format!("unknown subdomain '{}'", w[3])))?;
        triangles.push(Triangle { v, sub });
    }

    let nf = lines.section("facets")?;
    let mut facets = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, w) = lines.expect("a facet line")?;
        if w.len() != 3 {
            return Err(parse_err(line, "facet line needs 2 indices and a tag"));
        }
        let v = [index(line, w[0], nv)?, index(line, w[1], nv)?];
        let tag = FacetTag::parse(w[2]).ok_or_else(|| parse_err(line, format!("unknown facet tag '{}'", w[2])))?;
        facets.push(Facet { v, tag });
    }

    if let Some((line, w)) = lines.next() {
        return Err(parse_err(line, format!("trailing content '{}'", w.join(" "))));
    }
    Ok(Mesh {
        vertices,
        triangles,
        facets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpsi_core::mesh::build_rect_two_domain;

    #[test]
    fn round_trip_is_exact() {
        let mut m = build_rect_two_domain(3, 4, 0.25).unwrap();
        m.vertices[5][0] += 1e-17 + 0.1 / 3.0;
        let back = parse(&to_string(&m)).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# a comment\nfsimesh 1\n\nvertices 3 # three\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2 Poro\nfacets 1\n0 1 PoroSolid\n";
        let m = parse(text).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.facets[0].tag, FacetTag::PoroSolid);
    }

    #[test]
    fn errors_name_the_line() {
        match parse("") {
            Err(MeshIoError::Parse { line: 1, message }) => assert_eq!(message, "missing header"),
            other => panic!("{other:?}"),
        }
        let text = "fsimesh 1\nvertices 2\n0 0\n1 0\ntriangles 1\n0 1 7 Fluid\nfacets 0\n";
        match parse(text) {
            Err(MeshIoError::Parse { line: 6, message }) => assert!(message.contains("out of range")),
            other => panic!("{other:?}"),
        }
        let text = "fsimesh 1\nvertices 1\n0 0\ntriangles 0\nfacets 1\n0 0 Wall\n";
        assert!(matches!(parse(text), Err(MeshIoError::Parse { line: 6, .. })));
    }
}
