//! Johnson–Mercier composite mixed element, global assembly and the fine
//! reference solve.

mod assembly;
mod bc;
mod element;
pub mod quadrature;

pub use assembly::{
    assemble_blocks, assemble_rhs, restrict_blocks, remove_rigid_part, rigid_motions, solve_fine, LocalBlocks,
    OperatorBlocks, RhsMode, SolutionPair,
};
pub use bc::{BcKind, BcSpec, VectorFn};
pub use element::{constant_stress_dofs, JmElement};
