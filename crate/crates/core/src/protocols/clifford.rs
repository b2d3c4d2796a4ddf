//! Single-qubit Clifford group compiled into two X90 pulses and virtual Zs.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::DualRailLevel;
use crate::protocols::logical::{self, U2};
use crate::rng::rng_from_seed;

const MATCH_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CliffordOp {
    /// π/2 rotation about the current frame's x axis.
    X90,
    VirtualZ {
        phase: f64,
    },
}

#[derive(Clone, Debug)]
pub struct CliffordElement {
    pub index: usize,
    pub unitary: U2,
    /// Time-ordered operations.
    pub decomposition: Vec<CliffordOp>,
}

/// Ideal unitary of a time-ordered op list.
pub fn compose_ops(ops: &[CliffordOp]) -> U2 {
    ops.iter().fold(logical::identity(), |u, op| {
        let step = match op {
            CliffordOp::X90 => logical::rotation(0.0, FRAC_PI_2),
            CliffordOp::VirtualZ { phase } => logical::rz(*phase),
        };
        step * u
    })
}

pub struct CliffordTable {
    elements: Vec<CliffordElement>,
    products: Vec<Vec<usize>>,
    inverses: Vec<usize>,
}

impl CliffordTable {
    /// Generates the group by breadth-first closure under X90 and Z(π/2),
    /// finds a Z(b)·X90·Z(a)·X90·Z(c) decomposition for each element and
    /// checks the group axioms.
    pub fn build() -> Result<Self> {
        let gens = [logical::rotation(0.0, FRAC_PI_2), logical::rz(FRAC_PI_2)];
        let mut unitaries = vec![logical::identity()];
        let mut k = 0;
        while k < unitaries.len() {
            for g in &gens {
                let u = g * unitaries[k];
                if !unitaries
                    .iter()
                    .any(|v| logical::phase_insensitive_distance(v, &u) < MATCH_TOL)
                {
                    unitaries.push(u);
                }
            }
            k += 1;
        }
        if unitaries.len() != 24 {
            return Err(Error::InvalidState(format!(
                "Clifford closure produced {} elements",
                unitaries.len()
            )));
        }
        let find = |u: &U2| {
            unitaries
                .iter()
                .position(|v| logical::phase_insensitive_distance(v, u) < MATCH_TOL)
        };
        let angles = [0.0, FRAC_PI_2, PI, -FRAC_PI_2];
        let mut elements = Vec::with_capacity(24);
        for (index, u) in unitaries.iter().enumerate() {
            let mut found = None;
            'search: for &b in &angles {
                for &a in &angles {
                    for &c in &angles {
                        let ops = vec![
                            CliffordOp::VirtualZ { phase: b },
                            CliffordOp::X90,
                            CliffordOp::VirtualZ { phase: a },
                            CliffordOp::X90,
                            CliffordOp::VirtualZ { phase: c },
                        ];
                        if logical::phase_insensitive_distance(&compose_ops(&ops), u) < 1e-12 {
                            found = Some(ops);
                            break 'search;
                        }
                    }
                }
            }
            let decomposition = found.ok_or_else(|| {
                Error::InvalidState(format!("no two-X90 decomposition for element {index}"))
            })?;
            let decomposition = decomposition
                .into_iter()
                .filter(|op| !matches!(op, CliffordOp::VirtualZ { phase } if *phase == 0.0))
                .collect();
            elements.push(CliffordElement {
                index,
                unitary: *u,
                decomposition,
            });
        }
        let mut products = vec![vec![0; 24]; 24];
        for i in 0..24 {
            for j in 0..24 {
                products[i][j] = find(&(unitaries[i] * unitaries[j])).ok_or_else(|| {
                    Error::InvalidState("Clifford set not closed under products".into())
                })?;
            }
        }
        let inverses = (0..24)
            .map(|i| {
                (0..24)
                    .find(|&j| products[i][j] == 0)
                    .ok_or_else(|| Error::InvalidState(format!("element {i} has no inverse")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CliffordTable {
            elements,
            products,
            inverses,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, index: usize) -> &CliffordElement {
        &self.elements[index]
    }

    pub fn elements(&self) -> &[CliffordElement] {
        &self.elements
    }

    /// Index of the product a·b (apply b first).
    pub fn product(&self, a: usize, b: usize) -> usize {
        self.products[a][b]
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inverses[a]
    }

    pub fn lookup(&self, u: &U2) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| logical::phase_insensitive_distance(&e.unitary, u) < MATCH_TOL)
    }
}

/// Shared table, built and verified on first use.
pub fn clifford_table() -> &'static CliffordTable {
    static TABLE: OnceLock<CliffordTable> = OnceLock::new();
    TABLE.get_or_init(|| CliffordTable::build().expect("Clifford table construction"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbSequence {
    pub elements: Vec<usize>,
    pub recovery: usize,
    /// Ideal final logical state for a |1L⟩ start.
    pub target: DualRailLevel,
}

impl RbSequence {
    /// Elements followed by the recovery.
    pub fn all_elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.elements
            .iter()
            .copied()
            .chain(std::iter::once(self.recovery))
    }

    pub fn ops(&self) -> Vec<CliffordOp> {
        let table = clifford_table();
        self.all_elements()
            .flat_map(|k| table.element(k).decomposition.clone())
            .collect()
    }
}

/// Uniform random Cliffords plus a recovery element. Starting from |1L⟩ the
/// ideal sequence ends in `target` (identity composite for `One`, an X flip
/// for `Zero`).
pub fn rb_generate(depth: usize, seed: u64, target: DualRailLevel) -> Result<RbSequence> {
    if depth == 0 {
        return Err(Error::InvalidArgument("RB depth must be at least 1".into()));
    }
    let table = clifford_table();
    let mut rng = rng_from_seed(seed);
    let elements: Vec<usize> = (0..depth)
        .map(|_| rng.random_range(0..table.len()))
        .collect();
    let composite = elements.iter().fold(0, |acc, &e| table.product(e, acc));
    let inv = table.inverse(composite);
    let recovery = match target {
        DualRailLevel::One => inv,
        DualRailLevel::Zero => {
            let x = table.lookup(&logical::pauli_x()).expect("X is a Clifford");
            table.product(x, inv)
        }
        DualRailLevel::Vacuum => {
            return Err(Error::InvalidArgument(
                "RB target must be a logical state".into(),
            ))
        }
    };
    Ok(RbSequence {
        elements,
        recovery,
        target,
    })
}
