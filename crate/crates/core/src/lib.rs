pub mod bem;
pub mod capmat;
pub mod cli;
pub mod geometry;
pub mod qpgreen;
pub mod quadrature;
pub mod spectra;
