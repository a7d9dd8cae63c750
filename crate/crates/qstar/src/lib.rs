//! Numerical toolkit for finite-dimensional and discretized quasi
//! *-algebras.
//!
//! A quasi *-algebra pairs a vector space carrying an involution with a
//! distinguished *-subalgebra acting on it from both sides; products of two
//! general elements are undefined. This crate builds finite-dimensional
//! instances of that structure (matrix algebras with the trace inner
//! product, discretized function algebras on a grid, cyclic group
//! algebras), analyzes linear functionals on them (positivity, symmetry and
//! domination conditions; the GNS construction; associated sesquilinear
//! forms; the functional order with its intertwiner), runs the calculus of
//! Hilbert quasi *-algebras (weak products, bounded and w-positive
//! elements, the modulus with its positive decomposition, discrete measure
//! decompositions), and makes infinite-dimensional failure modes visible at
//! desk scale through refinement-ladder diagnostics.
//!
//! Start from a builder in [`instances`], then feed elements and
//! functionals into [`functionals`] and [`hilbert`]. Each major capability
//! has a runnable example under `examples/`.

pub mod algebra;
pub mod error;
pub mod functionals;
pub mod hilbert;
pub mod instances;
pub mod ladder;

pub use algebra::{AlgebraInstance, AxiomReport, ConeOracle, Element, Functional, Norm0, NormSpec, StructConsts};
pub use error::{AlgebraError, BuildError, FunctionalError, HilbertError, IoError, LadderError, LinopsError};
pub use functionals::{
    build_forms, check_conditions, conjugate_functional, full_closability_check, gns_construct,
    order_leq, structure_report, uniform_constant, ConditionsReport, FormsResult, GnsData,
    OrderResult, SesquilinearForm, StructureReport, UniformConstant,
};
pub use hilbert::{
    bounded_element, commutative_measure_decomposition, cone_relations, cstar_property_check,
    element_to_functional, functional_to_element, module_function, mult_operators,
    verify_module_function, w_positive, weak_product, Bridge, BoundedElement, CStarReport,
    ConeReport, HilbertInstance, MeasureDecomposition, ModuleFunctionData, WPositive,
    WeakProductResult,
};
pub use instances::{
    build_grid_l2, build_group_algebra, build_lp_grid, build_matrix_hs, canonical_trace_functional,
    element_of_matrix, grid_density_functional, grid_nodes, matrix_of_element,
    matrix_state_functional, sample_grid_function, GridSubalgebra, GroupKind,
};
pub use ladder::{
    grid_family, ladder_trace, lp_grid_family, named_density, Classification, LadderLevel,
    LadderQuantity, LadderReport, LadderThresholds,
};
pub use linops::{
    adjoint_wrt_gram, hermitian_sqrt_psd, operator_norm, range_membership_solve, OperatorMatrix,
    RangeMembership, SqrtResult, DEFAULT_RANK_TOL,
};

pub mod linops;
