//! Label maps and the binary-image machinery behind post-processing:
//! 8-connected components, disk erosion, exact Euclidean distance
//! transform, and marker-based watershed with deterministic flooding.

use serde::{Deserialize, Serialize};

use crate::image_io::ImageTensor;

/// Instance labeling of a grid: 0 = background, k >= 1 = instance id,
/// ids contiguous from 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    data: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u32>) -> Self {
        assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u32] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.data[y * self.width + x]
    }

    pub fn n_labels(&self) -> usize {
        self.data.iter().copied().max().unwrap_or(0) as usize
    }

    /// Remap arbitrary positive ids onto 1..=n in first-appearance order.
    pub fn relabel_contiguous(&mut self) {
        let mut next = 0u32;
        let mut map = std::collections::HashMap::new();
        for v in &mut self.data {
            if *v != 0 {
                let id = *map.entry(*v).or_insert_with(|| {
                    next += 1;
                    next
                });
                *v = id;
            }
        }
    }

    /// Pixel count per label id (index 0 = background).
    pub fn areas(&self) -> Vec<usize> {
        let n = self.n_labels();
        let mut areas = vec![0usize; n + 1];
        for &v in &self.data {
            areas[v as usize] += 1;
        }
        areas
    }

    /// Centroid (y, x) per label id, index 0 unused.
    pub fn centroids(&self) -> Vec<(f64, f64)> {
        let n = self.n_labels();
        let mut acc = vec![(0.0f64, 0.0f64, 0.0f64); n + 1];
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.get(y, x) as usize;
                if v > 0 {
                    acc[v].0 += y as f64;
                    acc[v].1 += x as f64;
                    acc[v].2 += 1.0;
                }
            }
        }
        acc.iter()
            .map(|&(sy, sx, n)| if n > 0.0 { (sy / n, sx / n) } else { (0.0, 0.0) })
            .collect()
    }
}

const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// 8-connected component labeling in scan order (BFS), ids from 1.
pub fn connected_components_bool(fg: &[bool], height: usize, width: usize) -> LabelMap {
    assert_eq!(fg.len(), height * width);
    let mut labels = vec![0u32; fg.len()];
    let mut next = 0u32;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (y, x) = ((i / width) as isize, (i % width) as isize);
            for (dy, dx) in NEIGHBORS8 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= height as isize || nx >= width as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if fg[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    LabelMap::new(height, width, labels)
}

/// 8-connected components of a +/-1 coded mask (foreground where > 0).
pub fn connected_components(mask: &ImageTensor) -> LabelMap {
    let fg: Vec<bool> = mask.data().iter().map(|&v| v > 0.0).collect();
    connected_components_bool(&fg, mask.height, mask.width)
}

/// Binary erosion by a disk of the given radius (pixels outside the image
/// count as background).
pub fn binary_erosion(fg: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return fg.to_vec();
    }
    let r = radius as isize;
    let mut disk = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                disk.push((dy, dx));
            }
        }
    }
    let mut out = vec![false; fg.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let i = y as usize * width + x as usize;
            if !fg[i] {
                continue;
            }
            out[i] = disk.iter().all(|&(dy, dx)| {
                let (ny, nx) = (y + dy, x + dx);
                ny >= 0
                    && ny < height as isize
                    && nx >= 0
                    && nx < width as isize
                    && fg[ny as usize * width + nx as usize]
            });
        }
    }
    out
}

/// Exact squared Euclidean distance to the nearest background pixel
/// (Felzenszwalb-Huttenlocher lower-envelope transform, two passes).
pub fn distance_transform_sq(fg: &[bool], height: usize, width: usize) -> Vec<f64> {
    const INF: f64 = 1e18;
    let mut dist: Vec<f64> = fg.iter().map(|&f| if f { INF } else { 0.0 }).collect();

    fn dt_1d(f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let mut v = vec![0usize; n];
        let mut z = vec![0.0f64; n + 1];
        let mut k = 0usize;
        v[0] = 0;
        z[0] = -1e20;
        z[1] = 1e20;
        for q in 1..n {
            loop {
                let p = v[k];
                let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                    / (2.0 * q as f64 - 2.0 * p as f64);
                if s <= z[k] {
                    if k == 0 {
                        // degenerate; replace the first parabola
                        v[0] = q;
                        z[0] = -1e20;
                        z[1] = 1e20;
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = 1e20;
                    break;
                }
            }
        }
        let mut k = 0usize;
        for q in 0..n {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let d = q as f64 - p as f64;
            out[q] = d * d + f[p];
        }
    }

    // Columns.
    let mut col_in = vec![0.0f64; height];
    let mut col_out = vec![0.0f64; height];
    for x in 0..width {
        for y in 0..height {
            col_in[y] = dist[y * width + x];
        }
        dt_1d(&col_in, &mut col_out);
        for y in 0..height {
            dist[y * width + x] = col_out[y];
        }
    }
    // Rows.
    let mut row_out = vec![0.0f64; width];
    for y in 0..height {
        let row: Vec<f64> = dist[y * width..(y + 1) * width].to_vec();
        dt_1d(&row, &mut row_out);
        dist[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    dist
}

/// Marker-based watershed: flood `domain` pixels from the markers in
/// ascending relief order. Ties resolve by insertion order, which makes
/// the flooding deterministic. Pixels not reachable from any marker stay 0.
pub fn watershed(
    relief: &[f64],
    markers: &LabelMap,
    domain: &[bool],
) -> LabelMap {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let (h, w) = (markers.height, markers.width);
    assert_eq!(relief.len(), h * w);
    assert_eq!(domain.len(), h * w);

    #[derive(PartialEq)]
    struct Entry(f64, u64, usize, u32); // relief, tiebreak, index, label
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0
                .total_cmp(&other.0)
                .then_with(|| self.1.cmp(&other.1))
        }
    }

    let mut labels = vec![0u32; h * w];
    let mut heap: BinaryHeap<Reverse<Entry>> = BinaryHeap::new();
    let mut tick = 0u64;
    for i in 0..h * w {
        let m = markers.data()[i];
        if m != 0 && domain[i] {
            labels[i] = m;
            heap.push(Reverse(Entry(relief[i], tick, i, m)));
            tick += 1;
        }
    }
    while let Some(Reverse(Entry(_, _, i, label))) = heap.pop() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for (dy, dx) in NEIGHBORS8 {
            let (ny, nx) = (y + dy, x + dx);
            if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if domain[j] && labels[j] == 0 {
                labels[j] = label;
                heap.push(Reverse(Entry(relief[j], tick, j, label)));
                tick += 1;
            }
        }
    }
    LabelMap::new(h, w, labels)
}
