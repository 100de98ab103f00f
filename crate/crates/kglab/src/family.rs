//! Time-indexed families of dense operators.

use std::sync::Arc;

use crate::grid::WeightedProduct;
use crate::linalg::CMat;
use crate::timeline::{fd4_derivative, interp_cubic, TimeGrid};

/// Declared symbol order and decay rate, carried as metadata for gauge
/// reports; never enforced.
#[derive(Debug, Clone, Copy, Default)]
pub struct FamilyMeta {
    pub order: f64,
    pub decay: f64,
}

/// A family t -> A(t) of N x N operators on a shared uniform time grid,
/// together with the per-slice weighted products.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    pub tgrid: TimeGrid,
    pub slices: Vec<CMat>,
    pub products: Vec<Arc<WeightedProduct>>,
    pub meta: FamilyMeta,
}

impl OperatorFamily {
    pub fn new(
        tgrid: TimeGrid,
        slices: Vec<CMat>,
        products: Vec<Arc<WeightedProduct>>,
        meta: FamilyMeta,
    ) -> Self {
        assert_eq!(tgrid.n, slices.len());
        assert_eq!(tgrid.n, products.len());
        Self { tgrid, slices, products, meta }
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn n(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn at(&self, t: f64) -> CMat {
        interp_cubic(&self.tgrid, &self.slices, t)
    }

    pub fn time_derivative(&self) -> Self {
        Self {
            tgrid: self.tgrid.clone(),
            slices: fd4_derivative(&self.slices, self.tgrid.dt),
            products: self.products.clone(),
            meta: self.meta,
        }
    }

    pub fn map(&self, f: impl Fn(usize, &CMat) -> CMat + Sync) -> Self {
        use rayon::prelude::*;
        let slices: Vec<CMat> =
            (0..self.len()).into_par_iter().map(|i| f(i, &self.slices[i])).collect();
        Self {
            tgrid: self.tgrid.clone(),
            slices,
            products: self.products.clone(),
            meta: self.meta,
        }
    }

    pub fn sup_norm_profile(&self) -> Vec<f64> {
        self.slices.iter().map(crate::linalg::op_norm).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStructure {
    Diagonal,
    Full,
}

/// Same as `OperatorFamily` but with 2N x 2N slices acting on Cauchy-data
/// pairs.
#[derive(Debug, Clone)]
pub struct BlockOperatorFamily {
    pub tgrid: TimeGrid,
    pub slices: Vec<CMat>,
    pub products: Vec<Arc<WeightedProduct>>,
    pub structure: BlockStructure,
}

impl BlockOperatorFamily {
    pub fn new(
        tgrid: TimeGrid,
        slices: Vec<CMat>,
        products: Vec<Arc<WeightedProduct>>,
        structure: BlockStructure,
    ) -> Self {
        assert_eq!(tgrid.n, slices.len());
        assert_eq!(tgrid.n, products.len());
        assert_eq!(slices[0].nrows() % 2, 0);
        Self { tgrid, slices, products, structure }
    }

    pub fn n(&self) -> usize {
        self.slices[0].nrows() / 2
    }

    pub fn at(&self, t: f64) -> CMat {
        interp_cubic(&self.tgrid, &self.slices, t)
    }

    pub fn product_at(&self, t: f64) -> Arc<WeightedProduct> {
        let i = self.tgrid.floor_index(t);
        // nearest node's product; densities vary smoothly on the grid scale
        let j = if t - self.tgrid.time_at(i) > self.tgrid.dt / 2.0 { i + 1 } else { i };
        self.products[j.min(self.products.len() - 1)].clone()
    }

    pub fn time_derivative(&self) -> Vec<CMat> {
        fd4_derivative(&self.slices, self.tgrid.dt)
    }
}
