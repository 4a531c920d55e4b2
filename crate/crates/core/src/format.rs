//! JSON model and state documents.
//!
//! A complex matrix is written row-major as an array of rows, each row an
//! array of `[re, im]` pairs. Plain numbers are accepted as real entries.
//!
//! ```json
//! {
//!   "vertices": [{"id": 0, "dim": 1}, {"id": 1, "dim": 1}],
//!   "effective": {"0": [[[-0.5, 0]]], "1": [[[-0.5, 0]]]},
//!   "jumps": [{"from": 0, "to": 1, "matrix": [[[1, 0]]]},
//!             {"from": 1, "to": 0, "matrix": [[[1, 0]]]}]
//! }
//! ```
//!
//! A `lattice` block replaces the explicit fields for one-dimensional models
//! on a window `lower..=upper` of the integers. Each site takes its template
//! from `sites` (keyed by position) or from `default`; `right` is the jump
//! operator to the next site and `left` to the previous one. Jumps leaving
//! the window are dropped and accounted as leak operators.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalkError};
use crate::linalg::CMat;
use crate::model::{build_walk, BlockState, SitedState, VertexId, VertexSpace, WalkModel, WalkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonEntry {
    Complex([f64; 2]),
    Real(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JsonMatrix(pub Vec<Vec<JsonEntry>>);

impl JsonMatrix {
    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, |r| r.len());
        if self.0.iter().any(|r| r.len() != cols) {
            return Err(WalkError::Parse("ragged matrix rows".into()));
        }
        Ok(CMat::from_row_iterator(
            rows,
            cols,
            self.0.iter().flatten().map(|e| match *e {
                JsonEntry::Complex([re, im]) => Complex64::new(re, im),
                JsonEntry::Real(re) => Complex64::new(re, 0.0),
            }),
        ))
    }

    pub fn from_matrix(m: &CMat) -> Self {
        JsonMatrix(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| JsonEntry::Complex([m[(i, j)].re, m[(i, j)].im])).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEntry {
    pub from: VertexId,
    pub to: VertexId,
    pub matrix: JsonMatrix,
}

/// How a `--window N` request resizes a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowResize {
    /// `[-N, N]`
    #[default]
    Symmetric,
    /// `[lower, N]`
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTemplate {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<JsonMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub lower: i64,
    pub upper: i64,
    #[serde(default)]
    pub resize: WindowResize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<SiteTemplate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sites: BTreeMap<i64, SiteTemplate>,
}

impl Lattice {
    fn template(&self, site: i64) -> Option<&SiteTemplate> {
        self.sites.get(&site).or(self.default.as_ref())
    }

    fn expand(&self) -> Result<WalkSpec> {
        if self.lower > self.upper {
            return Err(WalkError::Parse(format!("empty lattice window [{}, {}]", self.lower, self.upper)));
        }
        let mut spec = WalkSpec::default();
        for site in self.lower..=self.upper {
            let t = self
                .template(site)
                .ok_or_else(|| WalkError::Parse(format!("no template for lattice site {site}")))?;
            let id = VertexId::from(site);
            spec.vertices.push(VertexSpace { id: id.clone(), dim: t.dim });
            if let Some(h) = &t.hamiltonian {
                spec.hamiltonians.insert(id.clone(), h.to_matrix()?);
            }
            if let Some(g) = &t.effective {
                spec.effective.insert(id.clone(), g.to_matrix()?);
            }
            let mut leak: Option<CMat> = None;
            for (target, op) in [(site + 1, &t.right), (site - 1, &t.left)] {
                let Some(op) = op else { continue };
                let r = op.to_matrix()?;
                if r.ncols() != t.dim {
                    return Err(WalkError::DimensionMismatch {
                        what: format!("lattice jump {site}->{target}"),
                        expected: (r.nrows(), t.dim),
                        found: (r.nrows(), r.ncols()),
                    });
                }
                if (self.lower..=self.upper).contains(&target) {
                    spec.jumps.push((id.clone(), VertexId::from(target), r));
                } else {
                    if let Some(tt) = self.template(target) {
                        if tt.dim != r.nrows() {
                            return Err(WalkError::DimensionMismatch {
                                what: format!("lattice jump {site}->{target}"),
                                expected: (tt.dim, t.dim),
                                found: (r.nrows(), r.ncols()),
                            });
                        }
                    }
                    let k = r.adjoint() * &r;
                    leak = Some(match leak {
                        Some(acc) => acc + k,
                        None => k,
                    });
                }
            }
            if let Some(k) = leak {
                spec.leaks.insert(id, k);
            }
        }
        Ok(spec)
    }
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<VertexSpace>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hamiltonians: BTreeMap<VertexId, JsonMatrix>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub effective: BTreeMap<VertexId, JsonMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jumps: Vec<JumpEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub leaks: BTreeMap<VertexId, JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Lattice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| WalkError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    pub fn to_spec(&self) -> Result<WalkSpec> {
        let mut spec = match &self.lattice {
            Some(lattice) => {
                if !self.vertices.is_empty() || !self.jumps.is_empty() {
                    return Err(WalkError::Parse("a lattice block excludes explicit vertices and jumps".into()));
                }
                lattice.expand()?
            }
            None => {
                let mut spec = WalkSpec { vertices: self.vertices.clone(), ..Default::default() };
                for (id, m) in &self.hamiltonians {
                    spec.hamiltonians.insert(id.clone(), m.to_matrix()?);
                }
                for (id, m) in &self.effective {
                    spec.effective.insert(id.clone(), m.to_matrix()?);
                }
                for (id, m) in &self.leaks {
                    spec.leaks.insert(id.clone(), m.to_matrix()?);
                }
                for jp in &self.jumps {
                    spec.jumps.push((jp.from.clone(), jp.to.clone(), jp.matrix.to_matrix()?));
                }
                spec
            }
        };
        spec.tolerance = self.tolerance;
        Ok(spec)
    }

    pub fn build(&self) -> Result<WalkModel> {
        build_walk(&self.to_spec()?)
    }

    /// Explicit document for a built model (both `H_i` and `G_i` written).
    pub fn from_model(model: &WalkModel) -> Self {
        let spec = model.to_spec();
        ModelFile {
            name: None,
            vertices: spec.vertices,
            hamiltonians: spec.hamiltonians.iter().map(|(k, m)| (k.clone(), JsonMatrix::from_matrix(m))).collect(),
            effective: spec.effective.iter().map(|(k, m)| (k.clone(), JsonMatrix::from_matrix(m))).collect(),
            jumps: spec
                .jumps
                .iter()
                .map(|(f, t, m)| JumpEntry { from: f.clone(), to: t.clone(), matrix: JsonMatrix::from_matrix(m) })
                .collect(),
            leaks: spec.leaks.iter().map(|(k, m)| (k.clone(), JsonMatrix::from_matrix(m))).collect(),
            lattice: None,
            tolerance: spec.tolerance,
        }
    }

    pub fn is_lattice(&self) -> bool {
        self.lattice.is_some()
    }

    /// Copy of a lattice document resized to window parameter `n`.
    pub fn with_window(&self, n: i64) -> Result<Self> {
        let mut out = self.clone();
        let lattice = out
            .lattice
            .as_mut()
            .ok_or_else(|| WalkError::InvalidArgument("window resizing requires a lattice model".into()))?;
        match lattice.resize {
            WindowResize::Symmetric => {
                lattice.lower = -n;
                lattice.upper = n;
            }
            WindowResize::Upper => lattice.upper = n,
        }
        if lattice.lower > lattice.upper {
            return Err(WalkError::InvalidArgument(format!("window {n} leaves the lattice empty")));
        }
        Ok(out)
    }

    pub fn window(&self) -> Option<(i64, i64)> {
        self.lattice.as_ref().map(|l| (l.lower, l.upper))
    }
}

/// On-disk block state: vertex id to density block. Vertices not listed are
/// zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateFile {
    pub blocks: BTreeMap<VertexId, JsonMatrix>,
}

impl StateFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| WalkError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state documents always serialize")
    }

    pub fn to_state(&self, model: &WalkModel) -> Result<BlockState> {
        let mut blocks: Vec<CMat> = model.dims().into_iter().map(|d| CMat::zeros(d, d)).collect();
        for (id, m) in &self.blocks {
            blocks[model.index_of(id)?] = m.to_matrix()?;
        }
        BlockState::new(model, blocks)
    }

    pub fn from_state(model: &WalkModel, state: &BlockState) -> Self {
        StateFile {
            blocks: state
                .blocks()
                .iter()
                .enumerate()
                .filter(|(_, b)| b.norm() > 0.0)
                .map(|(i, b)| (model.id(i).clone(), JsonMatrix::from_matrix(b)))
                .collect(),
        }
    }
}

/// Parses a start specification `vertex:state`, where `state` is `eK` for
/// the K-th basis vector (1-based), `mixed` for the maximally mixed state, a
/// path to a JSON matrix file, or an inline JSON matrix. A bare vertex means
/// the maximally mixed state.
pub fn parse_sited(model: &WalkModel, text: &str) -> Result<SitedState> {
    let (vertex, state) = match text.split_once(':') {
        Some((v, s)) => (v, Some(s.trim())),
        None => (text, None),
    };
    let i = model.resolve(vertex)?;
    let d = model.dim(i);
    match state {
        None | Some("mixed") => Ok(SitedState::mixed(model, i)),
        Some(s) if s.starts_with('e') && s[1..].parse::<usize>().is_ok() => {
            let k: usize = s[1..].parse().unwrap();
            if k == 0 || k > d {
                return Err(WalkError::InvalidState(format!("basis index {k} outside 1..={d}")));
            }
            Ok(SitedState::basis(model, i, k - 1))
        }
        Some(s) => {
            let text = if s.trim_start().starts_with('[') {
                s.to_string()
            } else {
                std::fs::read_to_string(s).map_err(|e| WalkError::Parse(format!("{s}: {e}")))?
            };
            let m: JsonMatrix = serde_json::from_str(&text).map_err(|e| WalkError::Parse(e.to_string()))?;
            SitedState::new(model, i, m.to_matrix()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::linalg;

    #[test]
    fn explicit_document_parses() {
        let text = r#"{
          "vertices": [{"id": 0, "dim": 1}, {"id": 1, "dim": 1}],
          "effective": {"0": [[[-0.5, 0]]], "1": [[-0.5]]},
          "jumps": [{"from": 0, "to": 1, "matrix": [[[1, 0]]]},
                    {"from": 1, "to": 0, "matrix": [[1.0]]}]
        }"#;
        let m = ModelFile::from_json(text).unwrap().build().unwrap();
        assert_eq!(m.len(), 2);
        assert!(linalg::op_norm(m.hamiltonian(0)) < 1e-15);
    }

    #[test]
    fn model_document_round_trip() {
        let m = fixtures::ex2_6();
        let text = ModelFile::from_model(&m).to_json();
        let back = ModelFile::from_json(&text).unwrap().build().unwrap();
        for i in 0..m.len() {
            assert_eq!(m.effective(i), back.effective(i));
            assert_eq!(m.hamiltonian(i), back.hamiltonian(i));
        }
        assert_eq!(m.jumps().len(), back.jumps().len());
    }

    #[test]
    fn lattice_window_drops_outgoing_jumps_into_leaks() {
        let doc = fixtures::ex3_4_2_file(3);
        let m = doc.build().unwrap();
        assert_eq!(m.len(), 7);
        let right_end = m.resolve("3").unwrap();
        assert!(m.jump(right_end, m.resolve("2").unwrap()).is_some());
        assert!((m.leak(right_end).unwrap()[(0, 0)].re - 0.75).abs() < 1e-15);
        let left_end = m.resolve("-3").unwrap();
        assert!((m.leak(left_end).unwrap()[(0, 0)].re - 0.25).abs() < 1e-15);
        assert!(crate::model::validate(&m).passed());
        let resized = doc.with_window(5).unwrap();
        assert_eq!(resized.window(), Some((-5, 5)));
    }

    #[test]
    fn upper_resize_keeps_lower_bound() {
        let doc = fixtures::ex3_4_3_file(10).with_window(20).unwrap();
        assert_eq!(doc.window(), Some((0, 20)));
        assert_eq!(doc.build().unwrap().total_dim(), 22);
    }

    #[test]
    fn sited_state_parsing() {
        let m = fixtures::ex3_4_3(6);
        let s = parse_sited(&m, "1:e2").unwrap();
        assert_eq!(s.rho, linalg::diag(&[0.0, 1.0]));
        let s = parse_sited(&m, "1").unwrap();
        assert_eq!(s.rho, linalg::diag(&[0.5, 0.5]));
        let s = parse_sited(&m, "1:[[[1,0],[0,0]],[[0,0],[0,0]]]").unwrap();
        assert_eq!(s.rho, linalg::diag(&[1.0, 0.0]));
        assert!(parse_sited(&m, "1:e3").is_err());
        assert!(parse_sited(&m, "99").is_err());
    }

    #[test]
    fn state_document_round_trip() {
        let m = fixtures::ex3_4_1();
        let s = BlockState::uniform(&m);
        let doc = StateFile::from_state(&m, &s);
        let back = StateFile::from_json(&doc.to_json()).unwrap().to_state(&m).unwrap();
        assert_eq!(s, back);
    }
}
