use std::fmt;
use std::sync::Arc;

use crate::geometry::BoundarySide;

/// Vector field `(x, y) ↦ (f₁, f₂)`.
pub type VectorFn = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcKind {
    /// Zero traction on the whole boundary.
    Neumann,
    /// Prescribed displacement on the whole boundary.
    Dirichlet,
    /// Displacement on `x = 0` and `y = 0`, zero traction on `x = 1` and `y = 1`.
    Mixed,
}

impl BcKind {
    pub fn name(self) -> &'static str {
        match self {
            BcKind::Neumann => "neumann",
            BcKind::Dirichlet => "dirichlet",
            BcKind::Mixed => "mixed",
        }
    }
}

/// Boundary conditions with optional displacement data (zero if absent).
#[derive(Clone)]
pub struct BcSpec {
    pub kind: BcKind,
    pub displacement: Option<Arc<VectorFn>>,
}

impl fmt::Debug for BcSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BcSpec")
            .field("kind", &self.kind)
            .field("displacement", &self.displacement.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl BcSpec {
    pub fn new(kind: BcKind) -> Self {
        Self {
            kind,
            displacement: None,
        }
    }

    pub fn with_displacement(kind: BcKind, g: Arc<VectorFn>) -> Self {
        Self {
            kind,
            displacement: Some(g),
        }
    }

    /// Whether traction vanishes on `side`.
    pub fn is_traction_side(&self, side: BoundarySide) -> bool {
        match self.kind {
            BcKind::Neumann => true,
            BcKind::Dirichlet => false,
            BcKind::Mixed => matches!(side, BoundarySide::Right | BoundarySide::Top),
        }
    }
}
