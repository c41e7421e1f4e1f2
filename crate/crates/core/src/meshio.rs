//! Mesh files: OFF and OBJ for triangle surfaces in R³ (OBJ `l` lines give
//! curves), and a JSON document for any supported dimension:
//!
//! ```json
//! {"ambient_dim": 4, "vertices": [[x1, x2, x3, x4], ...], "cells": [[i, j, k], ...]}
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_mesh, EmbeddedMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Json,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("off") => Ok(Self::Off),
            Some("obj") => Ok(Self::Obj),
            Some("json") => Ok(Self::Json),
            _ => Err(Error::Config(format!("unrecognized mesh extension: {}", path.display()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub ambient_dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
}

impl MeshDocument {
    pub fn from_mesh(mesh: &EmbeddedMesh) -> Self {
        let n = mesh.ambient_dim();
        Self {
            ambient_dim: n,
            vertices: mesh.vertices().iter().map(|v| v.iter().take(n).copied().collect()).collect(),
            cells: mesh.cell_lists(),
        }
    }

    pub fn build(&self) -> Result<EmbeddedMesh> {
        for (i, v) in self.vertices.iter().enumerate() {
            if v.len() != self.ambient_dim {
                return Err(Error::Parse(format!(
                    "vertex {i} has {} coordinates, expected {}",
                    v.len(),
                    self.ambient_dim
                )));
            }
        }
        build_mesh(&self.vertices, &self.cells, self.ambient_dim)
    }
}

pub fn read_mesh(path: &Path) -> Result<EmbeddedMesh> {
    let format = MeshFormat::from_path(path)?;
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text, format)
}

pub fn parse_mesh(text: &str, format: MeshFormat) -> Result<EmbeddedMesh> {
    match format {
        MeshFormat::Off => parse_off(text)?.build(),
        MeshFormat::Obj => parse_obj(text)?.build(),
        MeshFormat::Json => parse_json(text)?.build(),
    }
}

pub fn write_mesh(mesh: &EmbeddedMesh, path: &Path) -> Result<()> {
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Off => to_off(mesh)?,
        MeshFormat::Obj => to_obj(mesh)?,
        MeshFormat::Json => to_json(mesh),
    };
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_number<T: std::str::FromStr>(token: Option<&str>, what: &str, line: usize) -> Result<T> {
    let token = token.ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))?;
    token.parse().map_err(|_| Error::Parse(format!("line {line}: bad {what} `{token}`")))
}

/// Fan triangulation of a polygon given by vertex indices.
fn fan(poly: &[usize], cells: &mut Vec<Vec<usize>>) {
    for k in 1..poly.len() - 1 {
        cells.push(vec![poly[0], poly[k], poly[k + 1]]);
    }
}

pub fn parse_off(text: &str) -> Result<MeshDocument> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (no, header) = lines.next().ok_or_else(|| Error::Parse("empty OFF file".into()))?;
    let mut counts_line = None;
    if let Some(rest) = header.strip_prefix("OFF") {
        if !rest.trim().is_empty() {
            counts_line = Some((no, rest.trim()));
        }
    } else {
        return Err(Error::Parse(format!("line {no}: expected OFF header")));
    }
    let (no, counts) = match counts_line {
        Some(c) => c,
        None => lines.next().ok_or_else(|| Error::Parse("missing OFF counts".into()))?,
    };
    let mut it = counts.split_whitespace();
    let nv: usize = parse_number(it.next(), "vertex count", no)?;
    let nf: usize = parse_number(it.next(), "face count", no)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (no, line) = lines.next().ok_or_else(|| Error::Parse("OFF file ends inside vertex list".into()))?;
        let mut it = line.split_whitespace();
        let v: Vec<f64> = (0..3).map(|_| parse_number(it.next(), "coordinate", no)).collect::<Result<_>>()?;
        vertices.push(v);
    }
    let mut cells = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (no, line) = lines.next().ok_or_else(|| Error::Parse("OFF file ends inside face list".into()))?;
        let mut it = line.split_whitespace();
        let k: usize = parse_number(it.next(), "face size", no)?;
        if k < 3 {
            return Err(Error::Parse(format!("line {no}: face with {k} vertices")));
        }
        let poly: Vec<usize> = (0..k).map(|_| parse_number(it.next(), "vertex index", no)).collect::<Result<_>>()?;
        fan(&poly, &mut cells);
    }
    Ok(MeshDocument { ambient_dim: 3, vertices, cells })
}

fn obj_index(token: &str, count: usize, line: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| Error::Parse(format!("line {line}: bad index `{token}`")))?;
    let idx = if raw > 0 { raw - 1 } else { count as i64 + raw };
    if raw == 0 || idx < 0 {
        return Err(Error::Parse(format!("line {line}: index `{token}` out of range")));
    }
    Ok(idx as usize)
}

pub fn parse_obj(text: &str) -> Result<MeshDocument> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut segments = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let v: Vec<f64> = (0..3).map(|_| parse_number(it.next(), "coordinate", no)).collect::<Result<_>>()?;
                vertices.push(v);
            }
            Some("f") => {
                let poly: Vec<usize> = it.map(|t| obj_index(t, vertices.len(), no)).collect::<Result<_>>()?;
                if poly.len() < 3 {
                    return Err(Error::Parse(format!("line {no}: face with {} vertices", poly.len())));
                }
                fan(&poly, &mut faces);
            }
            Some("l") => {
                let poly: Vec<usize> = it.map(|t| obj_index(t, vertices.len(), no)).collect::<Result<_>>()?;
                if poly.len() < 2 {
                    return Err(Error::Parse(format!("line {no}: polyline with fewer than 2 vertices")));
                }
                segments.extend(poly.windows(2).map(|w| w.to_vec()));
            }
            _ => {}
        }
    }
    if !faces.is_empty() && !segments.is_empty() {
        return Err(Error::Parse("OBJ mixes faces and polylines".into()));
    }
    let cells = if faces.is_empty() { segments } else { faces };
    Ok(MeshDocument { ambient_dim: 3, vertices, cells })
}

pub fn parse_json(text: &str) -> Result<MeshDocument> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn require_surface_in_r3(mesh: &EmbeddedMesh, format: &str) -> Result<()> {
    if mesh.ambient_dim() != 3 || (format == "OFF" && mesh.intrinsic_dim() != 2) {
        return Err(Error::UnsupportedSpec(format!(
            "{format} output needs {} in R^3",
            if format == "OFF" { "a surface" } else { "a mesh" }
        )));
    }
    Ok(())
}

pub fn to_off(mesh: &EmbeddedMesh) -> Result<String> {
    require_surface_in_r3(mesh, "OFF")?;
    let mut s = String::new();
    writeln!(s, "OFF\n{} {} 0", mesh.num_vertices(), mesh.num_cells()).unwrap();
    for v in mesh.vertices() {
        writeln!(s, "{:?} {:?} {:?}", v[0], v[1], v[2]).unwrap();
    }
    for c in mesh.cells() {
        writeln!(s, "3 {} {} {}", c[0], c[1], c[2]).unwrap();
    }
    Ok(s)
}

pub fn to_obj(mesh: &EmbeddedMesh) -> Result<String> {
    require_surface_in_r3(mesh, "OBJ")?;
    let tag = if mesh.intrinsic_dim() == 2 { "f" } else { "l" };
    let mut s = String::new();
    for v in mesh.vertices() {
        writeln!(s, "v {:?} {:?} {:?}", v[0], v[1], v[2]).unwrap();
    }
    for c in mesh.cells() {
        write!(s, "{tag}").unwrap();
        for i in c {
            write!(s, " {}", i + 1).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn to_json(mesh: &EmbeddedMesh) -> String {
    serde_json::to_string(&MeshDocument::from_mesh(mesh)).expect("mesh document serializes")
}
