//! Small numerical building blocks shared by the kernels, the solver and the
//! analysis code.

pub mod quadrature;
pub mod roots;
pub mod stencil;
