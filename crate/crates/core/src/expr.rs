//! Symbolic vectors and quadratic forms over per-block basis atoms.
//!
//! Every vector that appears in a fixed-step block-coordinate method (iterates,
//! gradients, block-restricted updates) is a linear combination of a small set
//! of atoms: the initial point, the gradients at evaluated points and, for
//! exact block minimization, free search directions. Each atom lives in one
//! coordinate block, so a vector is stored as one sparse coefficient map per
//! block and inner products never mix blocks.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One-based coordinate block index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(usize);

impl BlockId {
    /// Panics on zero; block ids are one-based.
    pub fn new(index: usize) -> Self {
        assert!(index >= 1, "block ids are one-based");
        BlockId(index)
    }

    pub fn checked(index: usize, blocks: usize) -> Result<Self> {
        if index == 0 || index > blocks {
            return Err(Error::InvalidBlock { index, blocks });
        }
        Ok(BlockId(index))
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// Zero-based storage slot.
    pub fn slot(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of an evaluated point of a trajectory, or the optimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PointTag {
    Point(usize),
    Optimum,
}

impl fmt::Display for PointTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointTag::Point(k) => write!(f, "{k}"),
            PointTag::Optimum => write!(f, "*"),
        }
    }
}

/// Function value variable attached to a point.
///
/// The optimum's value is pinned to zero when a problem is compiled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FValVar(pub PointTag);

/// The variant order is the Gram layout order: initial point, then gradients
/// by point index, then free directions by step index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomKind {
    InitialPoint,
    Gradient(usize),
    FreeDirection(usize),
}

impl fmt::Display for AtomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomKind::InitialPoint => write!(f, "x0"),
            AtomKind::Gradient(k) => write!(f, "g{k}"),
            AtomKind::FreeDirection(n) => write!(f, "d{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisAtom {
    pub kind: AtomKind,
    pub block: BlockId,
}

fn is_zero<S: Scalar>(c: &S) -> bool {
    *c == S::zero()
}

fn accumulate<K: Ord + Copy, S: Scalar>(map: &mut BTreeMap<K, S>, key: K, c: S) {
    if is_zero(&c) {
        return;
    }
    let entry = map.entry(key).or_insert_with(S::zero);
    *entry = entry.clone() + c;
    if is_zero(entry) {
        map.remove(&key);
    }
}

/// A vector of the ambient space written per block over basis atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockVectorExpr<S> {
    blocks: Vec<BTreeMap<AtomKind, S>>,
}

impl<S: Scalar> BlockVectorExpr<S> {
    pub fn zero(p: usize) -> Self {
        BlockVectorExpr { blocks: vec![BTreeMap::new(); p] }
    }

    /// A single atom with unit coefficient.
    pub fn atom(p: usize, atom: BasisAtom) -> Self {
        let mut v = Self::zero(p);
        assert!(atom.block.index() <= p, "atom block outside universe");
        v.blocks[atom.block.slot()].insert(atom.kind, S::one());
        v
    }

    /// The vector whose every block is the atom `kind` of that block, e.g. the
    /// initial point or a full gradient.
    pub fn spanning(p: usize, kind: AtomKind) -> Self {
        let mut v = Self::zero(p);
        for b in &mut v.blocks {
            b.insert(kind, S::one());
        }
        v
    }

    /// Like [`Self::spanning`] but skipping the listed blocks, which stay
    /// structurally zero.
    pub fn spanning_except(p: usize, kind: AtomKind, zero_blocks: &[BlockId]) -> Self {
        let mut v = Self::spanning(p, kind);
        for b in zero_blocks {
            v.blocks[b.slot()].clear();
        }
        v
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(BTreeMap::is_empty)
    }

    pub fn block(&self, i: BlockId) -> &BTreeMap<AtomKind, S> {
        &self.blocks[i.slot()]
    }

    pub fn coefficient(&self, atom: BasisAtom) -> S {
        self.blocks
            .get(atom.block.slot())
            .and_then(|b| b.get(&atom.kind))
            .cloned()
            .unwrap_or_else(S::zero)
    }

    /// Iterates over `(atom, coefficient)` in layout order, block by block.
    pub fn terms(&self) -> impl Iterator<Item = (BasisAtom, &S)> {
        self.blocks.iter().enumerate().flat_map(|(slot, b)| {
            b.iter().map(move |(k, c)| {
                (BasisAtom { kind: *k, block: BlockId(slot + 1) }, c)
            })
        })
    }

    /// Coefficient-wise linear combination.
    ///
    /// Panics when the terms disagree on the number of blocks.
    pub fn lincomb<'a, I>(p: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (S, &'a Self)>,
    {
        let mut out = Self::zero(p);
        for (c, v) in terms {
            out.add_scaled(c, v);
        }
        out
    }

    /// `self += c * v`.
    pub fn add_scaled(&mut self, c: S, v: &Self) {
        assert_eq!(self.blocks.len(), v.blocks.len(), "block universes differ");
        if is_zero(&c) {
            return;
        }
        for (dst, src) in self.blocks.iter_mut().zip(&v.blocks) {
            for (k, a) in src {
                accumulate(dst, *k, c.clone() * a.clone());
            }
        }
    }

    pub fn scaled(&self, c: S) -> Self {
        Self::lincomb(self.num_blocks(), [(c, self)])
    }

    /// Keeps only the block-`i` part, that is `U_i U_i^T v`.
    pub fn restrict(&self, i: BlockId) -> Result<Self> {
        let p = self.num_blocks();
        if i.index() > p {
            return Err(Error::InvalidBlock { index: i.index(), blocks: p });
        }
        let mut out = Self::zero(p);
        out.blocks[i.slot()] = self.blocks[i.slot()].clone();
        Ok(out)
    }

    pub fn inner(&self, other: &Self) -> QuadExpr<S> {
        assert_eq!(self.num_blocks(), other.num_blocks(), "block universes differ");
        let mut q = QuadExpr::zero(self.num_blocks());
        for (slot, (a, b)) in self.blocks.iter().zip(&other.blocks).enumerate() {
            for (ka, ca) in a {
                for (kb, cb) in b {
                    let key = if ka <= kb { (*ka, *kb) } else { (*kb, *ka) };
                    accumulate(&mut q.quad[slot], key, ca.clone() * cb.clone());
                }
            }
        }
        q
    }

    pub fn sqnorm(&self) -> QuadExpr<S> {
        self.inner(self)
    }

    /// Substitutes concrete atom vectors; returns one coordinate vector per block.
    pub fn evaluate(&self, values: &AtomValues) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(slot, b)| {
                let mut out = vec![0.0; values.dims[slot]];
                for (k, c) in b {
                    if let Some(v) = values.get(slot, k) {
                        let c = c.lower();
                        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
                    }
                }
                out
            })
            .collect()
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> BlockVectorExpr<T> {
        let mut out = BlockVectorExpr::<T>::zero(self.num_blocks());
        for (dst, src) in out.blocks.iter_mut().zip(&self.blocks) {
            for (k, c) in src {
                accumulate(dst, *k, f(c));
            }
        }
        out
    }
}

impl<S: Scalar> Add for &BlockVectorExpr<S> {
    type Output = BlockVectorExpr<S>;

    fn add(self, rhs: Self) -> BlockVectorExpr<S> {
        let mut out = self.clone();
        out.add_scaled(S::one(), rhs);
        out
    }
}

impl<S: Scalar> Sub for &BlockVectorExpr<S> {
    type Output = BlockVectorExpr<S>;

    fn sub(self, rhs: Self) -> BlockVectorExpr<S> {
        let mut out = self.clone();
        out.add_scaled(-S::one(), rhs);
        out
    }
}

impl<S: Scalar> Neg for &BlockVectorExpr<S> {
    type Output = BlockVectorExpr<S>;

    fn neg(self) -> BlockVectorExpr<S> {
        self.scaled(-S::one())
    }
}

impl<S: Scalar> fmt::Display for BlockVectorExpr<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (slot, b) in self.blocks.iter().enumerate() {
            for (k, c) in b {
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                write!(f, "{c:?}*{k}_{}", slot + 1)?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Scalar expression: per-block quadratic form in the atoms, affine in the
/// function values.
///
/// The quadratic part stores, for every unordered atom pair `{a, b}` with
/// `a <= b`, the total coefficient of the monomial `<a, b>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadExpr<S> {
    quad: Vec<BTreeMap<(AtomKind, AtomKind), S>>,
    linear: BTreeMap<FValVar, S>,
    constant: S,
}

impl<S: Scalar> QuadExpr<S> {
    pub fn zero(p: usize) -> Self {
        QuadExpr { quad: vec![BTreeMap::new(); p], linear: BTreeMap::new(), constant: S::zero() }
    }

    pub fn fval(p: usize, var: FValVar) -> Self {
        let mut q = Self::zero(p);
        accumulate(&mut q.linear, var, S::one());
        q
    }

    pub fn constant_expr(p: usize, c: S) -> Self {
        let mut q = Self::zero(p);
        q.constant = c;
        q
    }

    pub fn num_blocks(&self) -> usize {
        self.quad.len()
    }

    pub fn is_zero(&self) -> bool {
        self.quad.iter().all(BTreeMap::is_empty) && self.linear.is_empty() && is_zero(&self.constant)
    }

    /// Total coefficient of `<a, b>` in block `i`; symmetric in `a`, `b`.
    pub fn coefficient(&self, i: BlockId, a: AtomKind, b: AtomKind) -> S {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.quad[i.slot()].get(&key).cloned().unwrap_or_else(S::zero)
    }

    pub fn quad_terms(&self, i: BlockId) -> &BTreeMap<(AtomKind, AtomKind), S> {
        &self.quad[i.slot()]
    }

    pub fn linear_terms(&self) -> &BTreeMap<FValVar, S> {
        &self.linear
    }

    pub fn constant(&self) -> &S {
        &self.constant
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: S, other: &Self) {
        assert_eq!(self.num_blocks(), other.num_blocks(), "block universes differ");
        if is_zero(&c) {
            return;
        }
        for (dst, src) in self.quad.iter_mut().zip(&other.quad) {
            for (k, v) in src {
                accumulate(dst, *k, c.clone() * v.clone());
            }
        }
        for (k, v) in &other.linear {
            accumulate(&mut self.linear, *k, c.clone() * v.clone());
        }
        self.constant = self.constant.clone() + c * other.constant.clone();
    }

    pub fn scaled(&self, c: S) -> Self {
        let mut out = Self::zero(self.num_blocks());
        out.add_scaled(c, self);
        out
    }

    pub fn lincomb<'a, I>(p: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (S, &'a Self)>,
    {
        let mut out = Self::zero(p);
        for (c, q) in terms {
            out.add_scaled(c, q);
        }
        out
    }

    /// The optimum's function value is taken as zero when absent from `fvals`.
    pub fn evaluate(&self, values: &AtomValues, fvals: &BTreeMap<FValVar, f64>) -> f64 {
        let mut total = self.constant.lower();
        for (slot, b) in self.quad.iter().enumerate() {
            for ((ka, kb), c) in b {
                if let (Some(va), Some(vb)) = (values.get(slot, ka), values.get(slot, kb)) {
                    let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                    total += c.lower() * dot;
                }
            }
        }
        for (var, c) in &self.linear {
            total += c.lower() * fvals.get(var).copied().unwrap_or(0.0);
        }
        total
    }
}

impl<S: Scalar> Add for &QuadExpr<S> {
    type Output = QuadExpr<S>;

    fn add(self, rhs: Self) -> QuadExpr<S> {
        let mut out = self.clone();
        out.add_scaled(S::one(), rhs);
        out
    }
}

impl<S: Scalar> Sub for &QuadExpr<S> {
    type Output = QuadExpr<S>;

    fn sub(self, rhs: Self) -> QuadExpr<S> {
        let mut out = self.clone();
        out.add_scaled(-S::one(), rhs);
        out
    }
}

/// Concrete coordinates of every atom, block by block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomValues {
    dims: Vec<usize>,
    values: Vec<BTreeMap<AtomKind, Vec<f64>>>,
}

impl AtomValues {
    pub fn new(dims: Vec<usize>) -> Self {
        let values = vec![BTreeMap::new(); dims.len()];
        AtomValues { dims, values }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Panics when `coords` does not match the block dimension.
    pub fn insert(&mut self, block: BlockId, kind: AtomKind, coords: Vec<f64>) {
        assert_eq!(coords.len(), self.dims[block.slot()], "atom dimension mismatch");
        self.values[block.slot()].insert(kind, coords);
    }

    fn get(&self, slot: usize, kind: &AtomKind) -> Option<&Vec<f64>> {
        self.values.get(slot).and_then(|b| b.get(kind))
    }

    pub fn coords(&self, block: BlockId, kind: AtomKind) -> Option<&[f64]> {
        self.get(block.slot(), &kind).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (BlockId, AtomKind, &[f64])> {
        self.values.iter().enumerate().flat_map(|(slot, b)| {
            b.iter().map(move |(k, v)| (BlockId(slot + 1), *k, v.as_slice()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn x0<S: Scalar>(p: usize) -> BlockVectorExpr<S> {
        BlockVectorExpr::spanning(p, AtomKind::InitialPoint)
    }

    fn grad<S: Scalar>(p: usize, k: usize) -> BlockVectorExpr<S> {
        BlockVectorExpr::spanning(p, AtomKind::Gradient(k))
    }

    #[test]
    fn cancellation_gives_canonical_zero() {
        let v: BlockVectorExpr<Rational> = &x0(3) + &grad(3, 0);
        let z = BlockVectorExpr::lincomb(3, [(r(1, 1), &v), (r(-1, 1), &v)]);
        assert!(z.is_zero());
        assert_eq!(z, BlockVectorExpr::zero(3));
    }

    #[test]
    fn scaling_touches_every_block() {
        let v = BlockVectorExpr::lincomb(2, [(2.0, &x0::<f64>(2))]);
        for i in 1..=2 {
            let atom = BasisAtom { kind: AtomKind::InitialPoint, block: BlockId::new(i) };
            assert_eq!(v.coefficient(atom), 2.0);
        }
    }

    #[test]
    fn coordinate_step_only_moves_its_block() {
        let alpha = r(1, 2);
        let b1 = BlockId::new(1);
        let g1 = grad::<Rational>(2, 0).restrict(b1).unwrap();
        let x1 = BlockVectorExpr::lincomb(2, [(r(1, 1), &x0(2)), (-alpha, &g1)]);
        assert_eq!(x1.coefficient(BasisAtom { kind: AtomKind::Gradient(0), block: b1 }), r(-1, 2));
        assert_eq!(x1.block(BlockId::new(2)), x0::<Rational>(2).block(BlockId::new(2)));
    }

    #[test]
    fn restriction_partitions() {
        let v: BlockVectorExpr<Rational> = &x0(3) - &grad(3, 2).scaled(r(3, 4));
        let r1 = v.restrict(BlockId::new(1)).unwrap();
        assert!(r1.restrict(BlockId::new(2)).unwrap().is_zero());
        let mut sum = BlockVectorExpr::zero(3);
        for i in 1..=3 {
            sum = &sum + &v.restrict(BlockId::new(i)).unwrap();
        }
        assert_eq!(sum, v);
        assert!(BlockVectorExpr::<f64>::zero(3).restrict(BlockId::new(2)).unwrap().is_zero());
        assert_eq!(
            v.restrict(BlockId::new(4)),
            Err(Error::InvalidBlock { index: 4, blocks: 3 })
        );
    }

    #[test]
    fn inner_products_and_norms() {
        let v: BlockVectorExpr<Rational> = &x0(2) + &grad(2, 1);
        assert!(v.inner(&BlockVectorExpr::zero(2)).is_zero());
        let a = v.restrict(BlockId::new(1)).unwrap();
        let b = v.restrict(BlockId::new(2)).unwrap();
        assert!(a.inner(&b).is_zero());
        assert!(BlockVectorExpr::<Rational>::zero(2).sqnorm().is_zero());

        let two_v = v.scaled(r(2, 1));
        assert_eq!(two_v.sqnorm(), v.sqnorm().scaled(r(4, 1)));

        let g0 = grad::<Rational>(2, 0);
        let g1 = grad::<Rational>(2, 1);
        let lhs = (&g0 - &g1).sqnorm();
        let rhs = QuadExpr::lincomb(
            2,
            [(r(1, 1), &g0.sqnorm()), (r(-2, 1), &g0.inner(&g1)), (r(1, 1), &g1.sqnorm())],
        );
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn quad_coefficient_is_symmetric() {
        let q = x0::<f64>(1).inner(&grad(1, 3));
        let b = BlockId::new(1);
        assert_eq!(q.coefficient(b, AtomKind::InitialPoint, AtomKind::Gradient(3)), 1.0);
        assert_eq!(q.coefficient(b, AtomKind::Gradient(3), AtomKind::InitialPoint), 1.0);
        // x*, the origin, is not an atom: ||x0 - x*||^2 is the Gram diagonal
        let d = (&x0::<f64>(2) - &BlockVectorExpr::zero(2)).sqnorm();
        assert_eq!(d, x0::<f64>(2).sqnorm());
    }

    #[test]
    fn layout_order_of_atoms() {
        let mut kinds = vec![
            AtomKind::FreeDirection(1),
            AtomKind::Gradient(2),
            AtomKind::InitialPoint,
            AtomKind::Gradient(0),
        ];
        kinds.sort();
        assert_eq!(
            kinds,
            vec![
                AtomKind::InitialPoint,
                AtomKind::Gradient(0),
                AtomKind::Gradient(2),
                AtomKind::FreeDirection(1)
            ]
        );
    }

    #[test]
    fn evaluation_matches_direct_computation() {
        let mut vals = AtomValues::new(vec![2, 1]);
        vals.insert(BlockId::new(1), AtomKind::InitialPoint, vec![1.0, 2.0]);
        vals.insert(BlockId::new(2), AtomKind::InitialPoint, vec![-3.0]);
        vals.insert(BlockId::new(1), AtomKind::Gradient(0), vec![0.5, 0.0]);
        vals.insert(BlockId::new(2), AtomKind::Gradient(0), vec![4.0]);
        let x = x0::<f64>(2);
        let g = grad::<f64>(2, 0);
        let step = &x - &g.restrict(BlockId::new(2)).unwrap().scaled(0.25);
        assert_eq!(step.evaluate(&vals), vec![vec![1.0, 2.0], vec![-4.0]]);
        let mut q = step.inner(&g);
        q.add_scaled(3.0, &QuadExpr::fval(2, FValVar(PointTag::Point(0))));
        let fvals = BTreeMap::from([(FValVar(PointTag::Point(0)), 2.0)]);
        let direct = 1.0 * 0.5 + (-4.0) * 4.0 + 6.0;
        assert!((q.evaluate(&vals, &fvals) - direct).abs() < 1e-12);
    }
}
