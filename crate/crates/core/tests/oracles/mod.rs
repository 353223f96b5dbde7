//! Independent reference implementations used by the integration and
//! acceptance tests. None of this code calls into the routines it checks.

#![allow(dead_code)]

pub mod fd;
pub mod pca;
pub mod qp;
pub mod svr_cases;
pub mod pca_cases;
pub mod cbow_cases;
pub mod clusters;
pub mod synthetic;
