//! Uniform-grid bounding-box index.

/// Axis-aligned box `(min_x, min_y, max_x, max_y)`.
pub type BBox = (f64, f64, f64, f64);

const MAX_CELLS_PER_AXIS: usize = 1024;

/// Query results are a superset of the items whose boxes intersect the query box.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    origin: (f64, f64),
    cell: f64,
    dims: (usize, usize),
    cells: Vec<Vec<usize>>,
    boxes: Vec<BBox>,
}

impl SpatialIndex {
    pub fn build(boxes: Vec<BBox>) -> Self {
        let extent = boxes.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
        );
        if boxes.is_empty() {
            return SpatialIndex {
                origin: (0.0, 0.0),
                cell: 1.0,
                dims: (1, 1),
                cells: vec![vec![]],
                boxes,
            };
        }
        let width = (extent.2 - extent.0).max(f64::MIN_POSITIVE);
        let height = (extent.3 - extent.1).max(f64::MIN_POSITIVE);
        let mean_size = boxes
            .iter()
            .map(|b| (b.2 - b.0).max(b.3 - b.1))
            .sum::<f64>()
            / boxes.len() as f64;
        let cap = width.max(height) / MAX_CELLS_PER_AXIS as f64;
        let cell = mean_size.max(cap).max(f64::MIN_POSITIVE);
        let dims = (
            ((width / cell).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS),
            ((height / cell).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS),
        );
        let mut index = SpatialIndex {
            origin: (extent.0, extent.1),
            cell,
            dims,
            cells: vec![Vec::new(); dims.0 * dims.1],
            boxes,
        };
        for id in 0..index.boxes.len() {
            let (x0, y0, x1, y1) = index.cell_range(index.boxes[id]);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    index.cells[cy * dims.0 + cx].push(id);
                }
            }
        }
        index
    }

    fn cell_of(&self, v: f64, origin: f64, dim: usize) -> usize {
        let c = ((v - origin) / self.cell).floor();
        if c.is_nan() || c < 0.0 {
            0
        } else {
            (c as usize).min(dim - 1)
        }
    }

    fn cell_range(&self, b: BBox) -> (usize, usize, usize, usize) {
        (
            self.cell_of(b.0, self.origin.0, self.dims.0),
            self.cell_of(b.1, self.origin.1, self.dims.1),
            self.cell_of(b.2, self.origin.0, self.dims.0),
            self.cell_of(b.3, self.origin.1, self.dims.1),
        )
    }

    /// Sorted ids of items whose boxes intersect `query` (closed boxes).
    pub fn query(&self, query: BBox) -> Vec<usize> {
        if self.boxes.is_empty() {
            return vec![];
        }
        let (x0, y0, x1, y1) = self.cell_range(query);
        let mut hits = Vec::new();
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                hits.extend(
                    self.cells[cy * self.dims.0 + cx]
                        .iter()
                        .copied()
                        .filter(|&id| boxes_overlap(self.boxes[id], query)),
                );
            }
        }
        hits.sort_unstable();
        hits.dedup();
        hits
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

pub fn boxes_overlap(a: BBox, b: BBox) -> bool {
    a.0 <= b.2 && b.0 <= a.2 && a.1 <= b.3 && b.1 <= a.3
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 0.0..30.0f64, 0.0..30.0f64)
            .prop_map(|(x, y, w, h)| (x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn query_matches_brute_force(boxes in prop::collection::vec(arb_box(), 0..60), q in arb_box()) {
            let index = SpatialIndex::build(boxes.clone());
            let expected: Vec<usize> = (0..boxes.len()).filter(|&i| boxes_overlap(boxes[i], q)).collect();
            prop_assert_eq!(index.query(q), expected);
        }
    }

    #[test]
    fn degenerate_boxes() {
        let index = SpatialIndex::build(vec![(1.0, 1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 1.0)]);
        assert_eq!(index.query((0.0, 0.0, 2.0, 2.0)), vec![0, 1]);
        assert!(index.query((5.0, 5.0, 6.0, 6.0)).is_empty());
        assert!(SpatialIndex::build(vec![]).query((0.0, 0.0, 1.0, 1.0)).is_empty());
    }
}
