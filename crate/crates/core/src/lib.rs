//! Factuality probing toolkit: templated clause-embedding data, linear-chain,
//! tree and hybrid biLSTM factuality regressors, multi-task training and the
//! downstream probes (ridge ensembling, CCA, error regression).

pub mod gradcore;
pub mod factmodels;
pub mod verdata;
pub mod probe;
pub mod trainer;
