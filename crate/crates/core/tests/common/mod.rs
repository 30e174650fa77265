#![allow(dead_code)]

use std::f64::consts::PI;

use pacmet::family::{build_unitary_family, Domain, StateFamily};
use pacmet::opcore::{CMatrix, DensityMatrix, C64};
use pacmet::phase::ProbeSpectrum;
use proptest::prelude::*;

pub fn levels(n: usize) -> Vec<f64> {
    (0..=n).map(|l| l as f64).collect()
}

pub fn covariant_family(probe: &ProbeSpectrum, grid: usize) -> StateFamily {
    build_unitary_family(&levels(probe.n()), probe, grid, Domain::Periodic { period: 2.0 * PI }).unwrap()
}

/// Density matrix G G† / Tr from a flat list of 2d² entries.
pub fn density_from(entries: &[f64], d: usize) -> DensityMatrix {
    let mut m = CMatrix::zeros(d, d);
    for (k, z) in m.iter_mut().enumerate() {
        *z = C64::new(entries[2 * k], entries[2 * k + 1]);
    }
    let rho = &m * m.adjoint();
    let tr = rho.trace().re;
    DensityMatrix::from_matrix(rho / C64::new(tr, 0.0)).unwrap()
}

pub fn arb_density(d: usize) -> impl Strategy<Value = DensityMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * d * d)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(move |v| density_from(&v, d))
}
