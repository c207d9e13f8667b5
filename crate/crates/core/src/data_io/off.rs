//! OFF mesh subset: `OFF` header, vertex/face counts, vertex lines, face
//! lines. Vertices are consumed directly; faces are used only for
//! area-weighted surface sampling (polygons are fan-triangulated).
//! `#` comments and blank lines are ignored anywhere.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::DataError;
use crate::vec3::Vec3;

#[derive(Debug)]
pub struct OffMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Vec<usize>>,
}

struct Tokens {
    path: String,
    /// (line number 1-based, column 1-based, token)
    items: std::vec::IntoIter<(usize, usize, String)>,
    last_pos: (usize, usize),
}

impl Tokens {
    fn new(path: &Path, text: &str) -> Self {
        let mut items = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let body = match line.find('#') {
                Some(idx) => &line[..idx],
                None => line,
            };
            let mut col = 0;
            for token in body.split_whitespace() {
                col = body[col..].find(token).map(|c| c + col).unwrap_or(col);
                items.push((ln + 1, col + 1, token.to_string()));
                col += token.len();
            }
        }
        Self {
            path: path.display().to_string(),
            items: items.into_iter(),
            last_pos: (1, 1),
        }
    }

    fn next(&mut self, what: &str) -> Result<String, DataError> {
        match self.items.next() {
            Some((line, column, tok)) => {
                self.last_pos = (line, column);
                Ok(tok)
            }
            None => Err(DataError::Parse {
                path: self.path.clone(),
                line: self.last_pos.0,
                column: self.last_pos.1,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn err(&self, message: String) -> DataError {
        DataError::Parse {
            path: self.path.clone(),
            line: self.last_pos.0,
            column: self.last_pos.1,
            message,
        }
    }

    fn next_usize(&mut self, what: &str) -> Result<usize, DataError> {
        let tok = self.next(what)?;
        tok.parse::<usize>()
            .map_err(|_| self.err(format!("expected {what}, found {tok:?}")))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64, DataError> {
        let tok = self.next(what)?;
        let v = tok
            .parse::<f64>()
            .map_err(|_| self.err(format!("expected {what}, found {tok:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite {what}: {tok:?}")));
        }
        Ok(v)
    }
}

pub fn read_off(path: &Path) -> Result<OffMesh, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut tokens = Tokens::new(path, &text);
    let magic = tokens.next("OFF header")?;
    if magic != "OFF" {
        return Err(tokens.err(format!("expected OFF header, found {magic:?}")));
    }
    let n_vertices = tokens.next_usize("vertex count")?;
    let n_faces = tokens.next_usize("face count")?;
    let _n_edges = tokens.next_usize("edge count")?;
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let x = tokens.next_f64("x coordinate")?;
        let y = tokens.next_f64("y coordinate")?;
        let z = tokens.next_f64("z coordinate")?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let arity = tokens.next_usize("face vertex count")?;
        if arity < 3 {
            return Err(tokens.err(format!("face needs at least 3 vertices, found {arity}")));
        }
        let mut face = Vec::with_capacity(arity);
        for _ in 0..arity {
            let idx = tokens.next_usize("vertex index")?;
            if idx >= vertices.len() {
                return Err(tokens.err(format!(
                    "vertex index {idx} out of range ({} vertices)",
                    vertices.len()
                )));
            }
            face.push(idx);
        }
        faces.push(face);
    }
    Ok(OffMesh { vertices, faces })
}

fn triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let u = b - a;
    let v = c - a;
    let cross = Vec3::new(
        u.y * v.z - u.z * v.y,
        u.z * v.x - u.x * v.z,
        u.x * v.y - u.y * v.x,
    );
    0.5 * cross.norm()
}

/// Sample `n` points on the mesh surface, each triangle weighted by its
/// area (polygon faces are fan-triangulated first).
pub fn sample_mesh_surface(
    mesh: &OffMesh,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec3>, DataError> {
    let mut triangles: Vec<[Vec3; 3]> = Vec::new();
    for face in &mesh.faces {
        for i in 1..face.len() - 1 {
            triangles.push([
                mesh.vertices[face[0]],
                mesh.vertices[face[i]],
                mesh.vertices[face[i + 1]],
            ]);
        }
    }
    let mut cumulative = Vec::with_capacity(triangles.len());
    let mut total = 0.0;
    for t in &triangles {
        total += triangle_area(t[0], t[1], t[2]);
        cumulative.push(total);
    }
    if triangles.is_empty() || total <= 0.0 {
        return Err(DataError::EmptyMesh);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.random_range(0.0..total);
        let idx = cumulative.partition_point(|c| *c <= pick).min(triangles.len() - 1);
        let [a, b, c] = triangles[idx];
        let mut u: f64 = rng.random_range(0.0..1.0);
        let mut v: f64 = rng.random_range(0.0..1.0);
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.push(a + (b - a) * u + (c - a) * v);
    }
    Ok(out)
}
