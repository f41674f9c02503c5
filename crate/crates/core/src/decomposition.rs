//! Uniform grid decomposition of the workspace with local quadtree-style
//! refinement, the region adjacency graph, and the projection from robot
//! states to cells.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{union_area_within, Configuration, Environment, Rect};

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("grid resolution must be at least 1")]
    ZeroResolution,
    #[error("occupancy threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("cell side {side} at resolution {l} is below the minimum cell side {min_cell_side}")]
    ResolutionTooFine { l: u32, side: f64, min_cell_side: f64 },
    #[error("point ({x}, {y}) lies outside the workspace bounds")]
    OutOfBounds { x: f64, y: f64 },
}

/// Identifier of a (possibly refined) cell: the base-grid index `(ix, iy)`
/// followed by one `{0,1}²` child index per refinement level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub Vec<(u32, u32)>);

impl CellId {
    pub fn base(ix: u32, iy: u32) -> Self {
        CellId(vec![(ix, iy)])
    }

    pub fn base_index(&self) -> (u32, u32) {
        self.0[0]
    }

    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    pub fn child(&self, cx: u32, cy: u32) -> Self {
        let mut path = self.0.clone();
        path.push((cx, cy));
        CellId(path)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (x, y)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{x},{y}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub rect: Rect,
    pub occupied: bool,
    /// Obstacle-covered fraction of the cell area.
    pub overlap: f64,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    env: Arc<Environment>,
    l: u32,
    threshold: f64,
    min_cell_side: f64,
    leaves: BTreeMap<CellId, Cell>,
}

/// Builds the `l × l` uniform grid over the workspace bounds.
pub fn grid_decompose(
    env: Arc<Environment>,
    l: u32,
    threshold: f64,
    min_cell_side: f64,
) -> Result<Decomposition, DecompositionError> {
    if l == 0 {
        return Err(DecompositionError::ZeroResolution);
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DecompositionError::BadThreshold(threshold));
    }
    let b = env.bounds;
    let side = (b.width() / l as f64).min(b.height() / l as f64);
    if side < min_cell_side * (1.0 - EPS) {
        return Err(DecompositionError::ResolutionTooFine {
            l,
            side,
            min_cell_side,
        });
    }
    let mut d = Decomposition {
        env,
        l,
        threshold,
        min_cell_side,
        leaves: BTreeMap::new(),
    };
    for ix in 0..l {
        for iy in 0..l {
            let rect = d.base_rect(ix, iy);
            let cell = d.make_cell(rect);
            d.leaves.insert(CellId::base(ix, iy), cell);
        }
    }
    Ok(d)
}

fn child_rect(parent: &Rect, cx: u32, cy: u32) -> Rect {
    let (mx, my) = parent.center();
    let (xmin, xmax) = if cx == 0 { (parent.xmin, mx) } else { (mx, parent.xmax) };
    let (ymin, ymax) = if cy == 0 { (parent.ymin, my) } else { (my, parent.ymax) };
    Rect::new(xmin, ymin, xmax, ymax)
}

/// Cardinal adjacency: the rectangles share a boundary segment of positive length.
pub fn rects_adjacent(a: &Rect, b: &Rect) -> bool {
    let y_overlap = a.ymax.min(b.ymax) - a.ymin.max(b.ymin);
    let x_overlap = a.xmax.min(b.xmax) - a.xmin.max(b.xmin);
    let vertical_touch = (a.xmax - b.xmin).abs() < EPS || (b.xmax - a.xmin).abs() < EPS;
    let horizontal_touch = (a.ymax - b.ymin).abs() < EPS || (b.ymax - a.ymin).abs() < EPS;
    (vertical_touch && y_overlap > EPS) || (horizontal_touch && x_overlap > EPS)
}

impl Decomposition {
    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn env_arc(&self) -> Arc<Environment> {
        Arc::clone(&self.env)
    }

    pub fn resolution(&self) -> u32 {
        self.l
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn min_cell_side(&self) -> f64 {
        self.min_cell_side
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&CellId, &Cell)> {
        self.leaves.iter()
    }

    pub fn cell(&self, id: &CellId) -> Option<&Cell> {
        self.leaves.get(id)
    }

    pub fn is_leaf(&self, id: &CellId) -> bool {
        self.leaves.contains_key(id)
    }

    pub fn is_free(&self, id: &CellId) -> bool {
        self.leaves.get(id).is_some_and(|c| !c.occupied)
    }

    pub fn occupied_count(&self) -> usize {
        self.leaves.values().filter(|c| c.occupied).count()
    }

    /// Smallest side length over all leaves.
    pub fn min_leaf_side(&self) -> f64 {
        self.leaves
            .values()
            .map(|c| c.rect.width().min(c.rect.height()))
            .fold(f64::INFINITY, f64::min)
    }

    fn boundary_x(&self, i: u32) -> f64 {
        let b = &self.env.bounds;
        if i == self.l {
            b.xmax
        } else {
            b.xmin + b.width() * i as f64 / self.l as f64
        }
    }

    fn boundary_y(&self, i: u32) -> f64 {
        let b = &self.env.bounds;
        if i == self.l {
            b.ymax
        } else {
            b.ymin + b.height() * i as f64 / self.l as f64
        }
    }

    fn base_rect(&self, ix: u32, iy: u32) -> Rect {
        Rect::new(
            self.boundary_x(ix),
            self.boundary_y(iy),
            self.boundary_x(ix + 1),
            self.boundary_y(iy + 1),
        )
    }

    fn make_cell(&self, rect: Rect) -> Cell {
        let overlap = union_area_within(&self.env.obstacles, &rect) / rect.area();
        Cell {
            rect,
            occupied: overlap >= self.threshold,
            overlap,
        }
    }

    /// Rectangle of any node of the refinement tree, leaf or not.
    pub fn rect_of(&self, id: &CellId) -> Rect {
        if let Some(c) = self.leaves.get(id) {
            return c.rect;
        }
        let (ix, iy) = id.base_index();
        id.0[1..]
            .iter()
            .fold(self.base_rect(ix, iy), |r, &(cx, cy)| child_rect(&r, cx, cy))
    }

    fn base_index_of(&self, v: f64, lo: f64, span: f64, boundary: impl Fn(u32) -> f64) -> u32 {
        let l = self.l;
        let mut i = (((v - lo) / span) * l as f64).floor().clamp(0.0, (l - 1) as f64) as u32;
        while i > 0 && v < boundary(i) {
            i -= 1;
        }
        while i + 1 < l && v >= boundary(i + 1) {
            i += 1;
        }
        i
    }

    /// Maps a state to the leaf whose half-open rectangle contains it. Cells on
    /// the workspace max boundary are closed on that side.
    pub fn project(&self, p: &Configuration) -> Result<CellId, DecompositionError> {
        let b = self.env.bounds;
        if !(b.contains(p.x, p.y)) {
            return Err(DecompositionError::OutOfBounds { x: p.x, y: p.y });
        }
        let ix = self.base_index_of(p.x, b.xmin, b.width(), |i| self.boundary_x(i));
        let iy = self.base_index_of(p.y, b.ymin, b.height(), |i| self.boundary_y(i));
        let mut id = CellId::base(ix, iy);
        let mut rect = self.base_rect(ix, iy);
        while !self.leaves.contains_key(&id) {
            let (mx, my) = rect.center();
            let cx = u32::from(p.x >= mx);
            let cy = u32::from(p.y >= my);
            rect = child_rect(&rect, cx, cy);
            id = id.child(cx, cy);
            debug_assert!(id.depth() < 64, "projection descended past any plausible depth");
        }
        Ok(id)
    }

    /// Replaces each listed leaf by its `2^k × 2^k` subdivision, stopping early
    /// for a cell when a further split would produce sides below
    /// `min_cell_side`. Returns the refined decomposition and the depth
    /// actually applied to each requested leaf.
    pub fn refine<'a>(
        &self,
        cells: impl IntoIterator<Item = &'a CellId>,
        k: u32,
    ) -> (Decomposition, BTreeMap<CellId, u32>) {
        let mut out = self.clone();
        let mut applied = BTreeMap::new();
        for id in cells {
            let Some(cell) = out.leaves.get(id) else {
                continue;
            };
            let rect = cell.rect;
            let mut levels = 0;
            let mut side = rect.width().min(rect.height());
            while levels < k && side / 2.0 >= self.min_cell_side * (1.0 - EPS) {
                side /= 2.0;
                levels += 1;
            }
            applied.insert(id.clone(), levels);
            if levels == 0 {
                continue;
            }
            out.leaves.remove(id);
            let mut frontier = vec![(id.clone(), rect)];
            for _ in 0..levels {
                let mut next = Vec::with_capacity(frontier.len() * 4);
                for (pid, prect) in frontier {
                    for cx in 0..2 {
                        for cy in 0..2 {
                            next.push((pid.child(cx, cy), child_rect(&prect, cx, cy)));
                        }
                    }
                }
                frontier = next;
            }
            for (cid, crect) in frontier {
                let cell = out.make_cell(crect);
                out.leaves.insert(cid, cell);
            }
        }
        (out, applied)
    }

    /// All leaves whose base cell is the given base index.
    pub fn leaves_in_base(&self, ix: u32, iy: u32) -> impl Iterator<Item = (&CellId, &Cell)> {
        let lo = CellId::base(ix, iy);
        let hi = CellId::base(ix, iy + 1);
        self.leaves.range(lo..hi)
    }

    /// Unoccupied leaves sharing a positive-length cardinal boundary with `c`.
    pub fn neighbors(&self, c: &CellId) -> Vec<CellId> {
        self.adjacent_leaves(c)
            .into_iter()
            .filter(|id| self.is_free(id))
            .collect()
    }

    /// Like [`Decomposition::neighbors`] but ignoring occupancy.
    pub fn adjacent_leaves(&self, c: &CellId) -> Vec<CellId> {
        let Some(cell) = self.leaves.get(c) else {
            return Vec::new();
        };
        let (ix, iy) = c.base_index();
        let mut out = Vec::new();
        let candidates = [
            (ix as i64, iy as i64),
            (ix as i64 - 1, iy as i64),
            (ix as i64 + 1, iy as i64),
            (ix as i64, iy as i64 - 1),
            (ix as i64, iy as i64 + 1),
        ];
        for (bx, by) in candidates {
            if bx < 0 || by < 0 || bx >= self.l as i64 || by >= self.l as i64 {
                continue;
            }
            for (id, other) in self.leaves_in_base(bx as u32, by as u32) {
                if id != c && rects_adjacent(&cell.rect, &other.rect) {
                    out.push(id.clone());
                }
            }
        }
        out.sort();
        out
    }

    /// Leaves within base-grid Chebyshev distance `layer` of the seed cells;
    /// `layer = 0` returns the seed itself.
    pub fn expand_region(&self, seed: &BTreeSet<CellId>, layer: u32) -> BTreeSet<CellId> {
        if layer == 0 {
            return seed.clone();
        }
        let bases: BTreeSet<(u32, u32)> = seed.iter().map(CellId::base_index).collect();
        let mut blocks = BTreeSet::new();
        let l = self.l as i64;
        let layer = layer as i64;
        for &(bx, by) in &bases {
            for dx in -layer..=layer {
                for dy in -layer..=layer {
                    let (x, y) = (bx as i64 + dx, by as i64 + dy);
                    if (0..l).contains(&x) && (0..l).contains(&y) {
                        blocks.insert((x as u32, y as u32));
                    }
                }
            }
        }
        blocks
            .into_iter()
            .flat_map(|(x, y)| self.leaves_in_base(x, y).map(|(id, _)| id.clone()))
            .collect()
    }

    pub fn covers(&self, cells: &BTreeSet<CellId>) -> bool {
        self.leaves.keys().all(|id| cells.contains(id))
    }

    /// Largest expansion layer that can still grow a region.
    pub fn max_expansion(&self) -> u32 {
        self.l.saturating_sub(1)
    }

    pub fn dump(&self) -> DecompositionDump {
        DecompositionDump {
            resolution: self.l,
            threshold: self.threshold,
            min_cell_side: self.min_cell_side,
            leaves: self
                .leaves
                .iter()
                .map(|(id, c)| LeafRecord {
                    id: id.clone(),
                    rect: c.rect,
                    depth: id.depth() as u32,
                    occupied: c.occupied,
                })
                .collect(),
        }
    }
}

/// Serializable snapshot of the leaf cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDump {
    pub resolution: u32,
    pub threshold: f64,
    pub min_cell_side: f64,
    pub leaves: Vec<LeafRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRecord {
    pub id: CellId,
    pub rect: Rect,
    pub depth: u32,
    pub occupied: bool,
}

impl DecompositionDump {
    /// True iff no leaf is narrower than the recorded minimum cell side.
    pub fn respects_min_side(&self) -> bool {
        self.leaves.iter().all(|leaf| {
            leaf.rect.width().min(leaf.rect.height()) >= self.min_cell_side * (1.0 - EPS)
        })
    }
}

/// Adjacency graph over free leaves.
///
/// `forced` leaves are included even when occupied, so that robots whose
/// start or goal projects onto a mostly-blocked cell still have a vertex.
#[derive(Debug, Clone)]
pub struct RegionGraph {
    vertices: Vec<CellId>,
    index: BTreeMap<CellId, usize>,
    adjacency: Vec<Vec<usize>>,
    rects: Vec<Rect>,
}

impl RegionGraph {
    pub fn new(d: &Decomposition, forced: &[CellId]) -> Self {
        let forced: BTreeSet<&CellId> = forced.iter().collect();
        let vertices: Vec<CellId> = d
            .leaves
            .iter()
            .filter(|(id, c)| !c.occupied || forced.contains(id))
            .map(|(id, _)| id.clone())
            .collect();
        let index: BTreeMap<CellId, usize> = vertices
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let adjacency = vertices
            .iter()
            .map(|id| {
                d.adjacent_leaves(id)
                    .iter()
                    .filter_map(|n| index.get(n).copied())
                    .collect()
            })
            .collect();
        let rects = vertices.iter().map(|id| d.leaves[id].rect).collect();
        RegionGraph {
            vertices,
            index,
            adjacency,
            rects,
        }
    }

    /// Builds a graph directly from cells and edges; used for abstract instances.
    pub fn from_parts(cells: Vec<(CellId, Rect)>, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); cells.len()];
        for &(a, b) in edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        let index = cells
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (id.clone(), i))
            .collect();
        let (vertices, rects) = cells.into_iter().unzip();
        RegionGraph {
            vertices,
            index,
            adjacency,
            rects,
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, i: usize) -> &CellId {
        &self.vertices[i]
    }

    pub fn rect(&self, i: usize) -> &Rect {
        &self.rects[i]
    }

    pub fn index_of(&self, id: &CellId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn contains_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env16(obstacles: Vec<Rect>) -> Arc<Environment> {
        Arc::new(Environment::new("t", Rect::new(0.0, 0.0, 16.0, 16.0), obstacles).unwrap())
    }

    fn grid4() -> Decomposition {
        grid_decompose(env16(vec![]), 4, 0.5, 1.0).unwrap()
    }

    #[test]
    fn uniform_grid_has_l_squared_cells() {
        let d = grid4();
        assert_eq!(d.leaf_count(), 16);
        for (_, c) in d.leaves() {
            assert_eq!(c.rect.width(), 4.0);
            assert_eq!(c.rect.height(), 4.0);
        }
        assert_eq!(d.occupied_count(), 0);
    }

    #[test]
    fn fully_covered_cell_is_occupied() {
        let d = grid_decompose(env16(vec![Rect::new(4.0, 4.0, 8.0, 8.0)]), 4, 0.5, 1.0).unwrap();
        let c = d.cell(&CellId::base(1, 1)).unwrap();
        assert!(c.occupied);
        assert_eq!(c.overlap, 1.0);
        assert_eq!(d.occupied_count(), 1);
    }

    #[test]
    fn too_fine_resolution_is_rejected() {
        let err = grid_decompose(env16(vec![]), 20, 0.5, 1.0).unwrap_err();
        assert!(matches!(err, DecompositionError::ResolutionTooFine { .. }));
        assert!(grid_decompose(env16(vec![]), 0, 0.5, 1.0).is_err());
        assert!(grid_decompose(env16(vec![]), 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn projection_half_open() {
        let d = grid4();
        assert_eq!(d.project(&Configuration::point(0.5, 0.5)).unwrap(), CellId::base(0, 0));
        assert_eq!(d.project(&Configuration::point(4.0, 0.5)).unwrap(), CellId::base(1, 0));
        assert_eq!(d.project(&Configuration::point(16.0, 16.0)).unwrap(), CellId::base(3, 3));
        assert!(d.project(&Configuration::point(16.1, 1.0)).is_err());
        let (r, _) = d.refine([&CellId::base(0, 0)], 1);
        assert_eq!(
            r.project(&Configuration::point(3.9, 3.9)).unwrap(),
            CellId(vec![(0, 0), (1, 1)])
        );
    }

    #[test]
    fn refine_once_and_clamped() {
        let d = grid4();
        let id = CellId::base(1, 1);
        let (r, applied) = d.refine([&id], 1);
        assert_eq!(applied[&id], 1);
        assert_eq!(r.leaf_count(), 19);
        assert_eq!(r.leaves_in_base(1, 1).count(), 4);
        assert!(r.leaves_in_base(1, 1).all(|(_, c)| c.rect.width() == 2.0));

        let (r3, applied) = d.refine([&id], 3);
        assert_eq!(applied[&id], 2);
        assert_eq!(r3.leaves_in_base(1, 1).count(), 16);
        assert!(r3.leaves_in_base(1, 1).all(|(_, c)| c.rect.width() == 1.0));
        let area: f64 = r3.leaves().map(|(_, c)| c.rect.area()).sum();
        assert!((area - 256.0).abs() < 1e-9);
    }

    #[test]
    fn expansion_layers() {
        let d = grid4();
        let interior: BTreeSet<_> = [CellId::base(1, 1)].into();
        assert_eq!(d.expand_region(&interior, 0).len(), 1);
        assert_eq!(d.expand_region(&interior, 1).len(), 9);
        let corner: BTreeSet<_> = [CellId::base(0, 0)].into();
        assert_eq!(d.expand_region(&corner, 1).len(), 4);
        assert!(d.covers(&d.expand_region(&corner, d.max_expansion())));
    }

    #[test]
    fn neighbor_counts() {
        let d = grid4();
        assert_eq!(d.neighbors(&CellId::base(0, 0)).len(), 2);
        assert_eq!(d.neighbors(&CellId::base(1, 1)).len(), 4);
        let (r, _) = d.refine([&CellId::base(2, 1)], 1);
        let n = r.neighbors(&CellId::base(1, 1));
        assert_eq!(n.len(), 5);
        assert_eq!(n.iter().filter(|c| c.depth() == 1).count(), 2);
    }

    #[test]
    fn occupied_cells_are_not_neighbors() {
        let d = grid_decompose(env16(vec![Rect::new(4.0, 4.0, 8.0, 8.0)]), 4, 0.5, 1.0).unwrap();
        assert_eq!(d.neighbors(&CellId::base(1, 0)).len(), 2);
        let g = RegionGraph::new(&d, &[]);
        assert_eq!(g.len(), 15);
        let forced = RegionGraph::new(&d, &[CellId::base(1, 1)]);
        assert_eq!(forced.len(), 16);
    }

    #[test]
    fn dump_reports_min_side() {
        let d = grid4();
        let (r, _) = d.refine([&CellId::base(0, 0)], 5);
        let dump = r.dump();
        assert_eq!(dump.leaves.len(), r.leaf_count());
        assert!(dump.respects_min_side());
    }

    /// Labels every free leaf with the smallest id reachable from it.
    fn components(d: &Decomposition) -> BTreeMap<CellId, CellId> {
        let mut label = BTreeMap::new();
        for (root, _) in d.leaves() {
            if !d.is_free(root) || label.contains_key(root) {
                continue;
            }
            let mut stack = vec![root.clone()];
            label.insert(root.clone(), root.clone());
            while let Some(c) = stack.pop() {
                for n in d.neighbors(&c) {
                    if !label.contains_key(&n) {
                        label.insert(n.clone(), root.clone());
                        stack.push(n);
                    }
                }
            }
        }
        label
    }

    fn arb_refinements() -> impl Strategy<Value = Vec<((u32, u32), u32, usize)>> {
        prop::collection::vec(((0u32..4, 0u32..4), 1u32..4, 0usize..64), 0..6)
    }

    fn arb_obstacles() -> impl Strategy<Value = Vec<Rect>> {
        prop::collection::vec(
            (0.0..14.0f64, 0.0..14.0f64, 0.5..5.0f64, 0.5..5.0f64)
                .prop_map(|(x, y, w, h)| Rect::new(x, y, (x + w).min(16.0), (y + h).min(16.0))),
            0..4,
        )
    }

    /// Applies a random sequence of refinements, each picking a leaf inside a
    /// base cell.
    fn apply(mut d: Decomposition, steps: &[((u32, u32), u32, usize)]) -> Decomposition {
        for &((bx, by), k, pick) in steps {
            let ids: Vec<CellId> = d.leaves_in_base(bx, by).map(|(id, _)| id.clone()).collect();
            let id = ids[pick % ids.len()].clone();
            d = d.refine([&id], k).0;
        }
        d
    }

    proptest! {
        #[test]
        fn tiling_and_min_side_hold(obs in arb_obstacles(), steps in arb_refinements()) {
            let d = apply(grid_decompose(env16(obs), 4, 0.5, 1.05).unwrap(), &steps);
            let area: f64 = d.leaves().map(|(_, c)| c.rect.area()).sum();
            prop_assert!((area - 256.0).abs() <= 1e-9 * 256.0);
            prop_assert!(d.min_leaf_side() >= 1.05 - 1e-12);
            for (_, c) in d.leaves() {
                prop_assert_eq!(c.occupied, c.overlap >= 0.5);
            }
        }

        #[test]
        fn projection_lands_in_containing_leaf(steps in arb_refinements(),
                                               x in 0.0..=16.0f64, y in 0.0..=16.0f64) {
            let d = apply(grid4(), &steps);
            let id = d.project(&Configuration::point(x, y)).unwrap();
            let r = d.cell(&id).unwrap().rect;
            let in_x = (x >= r.xmin && x < r.xmax) || (x == 16.0 && r.xmax == 16.0);
            let in_y = (y >= r.ymin && y < r.ymax) || (y == 16.0 && r.ymax == 16.0);
            prop_assert!(in_x && in_y, "{:?} not in {:?}", (x, y), r);
        }

        #[test]
        fn adjacency_is_symmetric(obs in arb_obstacles(), steps in arb_refinements()) {
            let d = apply(grid_decompose(env16(obs), 4, 0.5, 1.0).unwrap(), &steps);
            for (a, _) in d.leaves() {
                for b in d.neighbors(a) {
                    if d.is_free(a) {
                        prop_assert!(d.neighbors(&b).contains(a));
                    }
                }
            }
        }

        #[test]
        fn refinement_keeps_free_connectivity(steps in arb_refinements(),
                                              extra in ((0u32..4, 0u32..4), 1u32..4, 0usize..64)) {
            let before = apply(grid4(), &steps);
            let after = apply(before.clone(), &[extra]);
            let (cb, ca) = (components(&before), components(&after));
            let kept: Vec<&CellId> = cb.keys().filter(|id| after.is_leaf(id)).collect();
            for a in &kept {
                for b in &kept {
                    if cb[*a] == cb[*b] {
                        prop_assert_eq!(&ca[*a], &ca[*b]);
                    }
                }
            }
        }
    }
}
