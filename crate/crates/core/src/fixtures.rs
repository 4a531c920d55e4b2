//! Reference walks used throughout the tests and exposed by the CLI.
//!
//! * `ex2.6`: two sites with `C²` spaces, rotating effective operators and
//!   swap jumps. Over complex spaces both the jump map and the semigroup leave
//!   `span{(1, i)|1⟩, (1, -i)|2⟩}` invariant.
//! * `ex3.4.1`: the symmetric two-state chain with unit jump rate (recurrent).
//! * `ex3.4.2`: the biased walk on `Z` (right 3/4, left 1/4, unit rate),
//!   truncated to `[-N, N]` (transient, uniformly non-sure return).
//! * `ex3.4.3`: a walk on `N` with a `C²` space at site 1, truncated to
//!   `[0, N]` (transient, sure return from one non-faithful state only).

use std::collections::BTreeMap;

use crate::format::{JsonMatrix, JumpEntry, Lattice, ModelFile, SiteTemplate, WindowResize};
use crate::linalg::{self, CMat};
use crate::model::{VertexSpace, WalkModel};

pub const NAMES: [&str; 4] = ["ex2.6", "ex3.4.1", "ex3.4.2", "ex3.4.3"];

/// Default truncation window of the lattice fixtures.
pub const DEFAULT_WINDOW: i64 = 30;

fn jm(rows: usize, cols: usize, entries: &[f64]) -> JsonMatrix {
    JsonMatrix::from_matrix(&linalg::real_matrix(rows, cols, entries))
}

fn jm_c(m: &CMat) -> JsonMatrix {
    JsonMatrix::from_matrix(m)
}

pub fn ex2_6_file() -> ModelFile {
    let g = jm(2, 2, &[-0.5, 1.0, -1.0, -0.5]);
    let swap = jm(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    ModelFile {
        name: Some("ex2.6".into()),
        vertices: vec![VertexSpace { id: 1.into(), dim: 2 }, VertexSpace { id: 2.into(), dim: 2 }],
        effective: [(1.into(), g.clone()), (2.into(), g)].into(),
        jumps: vec![
            JumpEntry { from: 1.into(), to: 2.into(), matrix: swap.clone() },
            JumpEntry { from: 2.into(), to: 1.into(), matrix: swap },
        ],
        ..Default::default()
    }
}

pub fn ex3_4_1_file() -> ModelFile {
    let g = jm(1, 1, &[-0.5]);
    let one = jm(1, 1, &[1.0]);
    ModelFile {
        name: Some("ex3.4.1".into()),
        vertices: vec![VertexSpace { id: 0.into(), dim: 1 }, VertexSpace { id: 1.into(), dim: 1 }],
        effective: [(0.into(), g.clone()), (1.into(), g)].into(),
        jumps: vec![
            JumpEntry { from: 0.into(), to: 1.into(), matrix: one.clone() },
            JumpEntry { from: 1.into(), to: 0.into(), matrix: one },
        ],
        ..Default::default()
    }
}

pub fn ex3_4_2_file(window: i64) -> ModelFile {
    ModelFile {
        name: Some("ex3.4.2".into()),
        lattice: Some(Lattice {
            lower: -window,
            upper: window,
            resize: WindowResize::Symmetric,
            default: Some(SiteTemplate {
                dim: 1,
                hamiltonian: None,
                effective: Some(jm(1, 1, &[-0.5])),
                right: Some(jm(1, 1, &[3f64.sqrt() / 2.0])),
                left: Some(jm(1, 1, &[0.5])),
            }),
            sites: BTreeMap::new(),
        }),
        ..Default::default()
    }
}

/// The operators of site 0..=2 use row-vector shapes for the jumps leaving
/// the `C²` site, the only shapes compatible with one-dimensional neighbours.
pub fn ex3_4_3_file(window: i64) -> ModelFile {
    let half = jm(1, 1, &[-0.5]);
    let s5 = 5f64.sqrt();
    let s8 = 8f64.sqrt();
    let mut sites = BTreeMap::new();
    sites.insert(
        0,
        SiteTemplate {
            dim: 1,
            hamiltonian: None,
            effective: Some(half.clone()),
            right: Some(jm(2, 1, &[2.0 / s5, 1.0 / s5])),
            left: None,
        },
    );
    sites.insert(
        1,
        SiteTemplate {
            dim: 2,
            hamiltonian: None,
            effective: Some(jm_c(&(linalg::identity(2) * linalg::c(-0.5)))),
            right: Some(jm(1, 2, &[1.0, 0.0])),
            left: Some(jm(1, 2, &[0.0, 1.0])),
        },
    );
    sites.insert(
        2,
        SiteTemplate {
            dim: 1,
            hamiltonian: None,
            effective: Some(half.clone()),
            right: Some(jm(1, 1, &[3f64.sqrt() / 2.0])),
            left: Some(jm(2, 1, &[1.0 / s8, 1.0 / s8])),
        },
    );
    ModelFile {
        name: Some("ex3.4.3".into()),
        lattice: Some(Lattice {
            lower: 0,
            upper: window,
            resize: WindowResize::Upper,
            default: Some(SiteTemplate {
                dim: 1,
                hamiltonian: None,
                effective: Some(half),
                right: Some(jm(1, 1, &[3f64.sqrt() / 2.0])),
                left: Some(jm(1, 1, &[0.5])),
            }),
            sites,
        }),
        ..Default::default()
    }
}

/// Fixture document by CLI name; lattice fixtures use `window`.
pub fn by_name(name: &str, window: i64) -> Option<ModelFile> {
    match name {
        "ex2.6" => Some(ex2_6_file()),
        "ex3.4.1" => Some(ex3_4_1_file()),
        "ex3.4.2" => Some(ex3_4_2_file(window)),
        "ex3.4.3" => Some(ex3_4_3_file(window)),
        _ => None,
    }
}

pub fn ex2_6() -> WalkModel {
    ex2_6_file().build().expect("fixture is valid")
}

pub fn ex3_4_1() -> WalkModel {
    ex3_4_1_file().build().expect("fixture is valid")
}

pub fn ex3_4_2(window: i64) -> WalkModel {
    ex3_4_2_file(window).build().expect("fixture is valid")
}

pub fn ex3_4_3(window: i64) -> WalkModel {
    ex3_4_3_file(window).build().expect("fixture is valid")
}
