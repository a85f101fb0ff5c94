//! Spatial-spectral features: window means and composite kernels, SLIC
//! superpixels, and the superpixel multiple-kernel features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{label_components, neighbours4};
use crate::raster::Raster;
use crate::svm::{KernelSpec, KernelTerm};

/// Per-pixel mean of every band over a `window × window` square, clipped at the image edge.
pub fn window_mean_features(r: &Raster, window: usize) -> Result<Vec<Vec<f64>>> {
    check_window(window)?;
    let (w, h) = (r.width(), r.height());
    let half = window / 2;
    let d = r.band_count();
    // Summed-area table per band, (w + 1) × (h + 1).
    let tables: Vec<Vec<f64>> = (0..d)
        .map(|b| {
            let band = r.band_at(b);
            let mut t = vec![0.0; (w + 1) * (h + 1)];
            for y in 0..h {
                let mut row = 0.0;
                for x in 0..w {
                    row += band[y * w + x] as f64;
                    t[(y + 1) * (w + 1) + x + 1] = t[y * (w + 1) + x + 1] + row;
                }
            }
            t
        })
        .collect();
    Ok((0..w * h)
        .into_par_iter()
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let (x0, x1) = (x.saturating_sub(half), (x + half + 1).min(w));
            let (y0, y1) = (y.saturating_sub(half), (y + half + 1).min(h));
            let area = ((x1 - x0) * (y1 - y0)) as f64;
            tables
                .iter()
                .map(|t| {
                    let s = t[y1 * (w + 1) + x1] - t[y0 * (w + 1) + x1] - t[y1 * (w + 1) + x0]
                        + t[y0 * (w + 1) + x0];
                    s / area
                })
                .collect()
        })
        .collect())
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "window must be odd and positive, got {window}"
        )));
    }
    Ok(())
}

/// Kernel on `[spectrum | window mean]` rows: `mu K_spec + (1 - mu) K_spat`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompositeKernelParams {
    pub mu: f64,
    pub window: usize,
    /// `None` means RBF with `gamma = 1 / band_count`.
    pub spectral_kernel: Option<KernelSpec>,
    pub spatial_kernel: Option<KernelSpec>,
}

impl Default for CompositeKernelParams {
    fn default() -> Self {
        CompositeKernelParams {
            mu: 0.5,
            window: 5,
            spectral_kernel: None,
            spatial_kernel: None,
        }
    }
}

impl CompositeKernelParams {
    pub fn validate(&self) -> Result<()> {
        check_window(self.window)?;
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidParameter(format!(
                "mu must lie in [0, 1], got {}",
                self.mu
            )));
        }
        Ok(())
    }

    /// The composite kernel as a [`KernelSpec::Sum`] over `2 d` features.
    pub fn kernel_spec(&self, d: usize) -> Result<KernelSpec> {
        self.validate()?;
        let spec = self
            .spectral_kernel
            .clone()
            .unwrap_or_else(|| KernelSpec::rbf_for_dim(d));
        let spat = self
            .spatial_kernel
            .clone()
            .unwrap_or_else(|| KernelSpec::rbf_for_dim(d));
        let k = KernelSpec::Sum {
            terms: vec![
                KernelTerm {
                    weight: self.mu,
                    offset: 0,
                    len: d,
                    kernel: spec,
                },
                KernelTerm {
                    weight: 1.0 - self.mu,
                    offset: d,
                    len: d,
                    kernel: spat,
                },
            ],
        };
        k.validate(2 * d)?;
        Ok(k)
    }
}

/// Rows `[spectrum | window mean]` for every pixel.
pub fn composite_features(r: &Raster, window: usize) -> Result<Vec<Vec<f64>>> {
    let means = window_mean_features(r, window)?;
    Ok(r.pixel_rows()
        .into_iter()
        .zip(means)
        .map(|(mut own, m)| {
            own.extend(m);
            own
        })
        .collect())
}

pub fn composite_kernel(
    params: &CompositeKernelParams,
    x_spec: &[f64],
    x_spat: &[f64],
    y_spec: &[f64],
    y_spat: &[f64],
) -> Result<f64> {
    let d = x_spec.len();
    if [x_spat.len(), y_spec.len(), y_spat.len()]
        .iter()
        .any(|&l| l != d)
    {
        return Err(Error::DimensionMismatch(
            "spectral and spatial parts must share one dimension".into(),
        ));
    }
    let k = params.kernel_spec(d)?;
    Ok(k.eval(&[x_spec, x_spat].concat(), &[y_spec, y_spat].concat()))
}

/// Superpixel id per pixel; ids are contiguous `0..count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
    pub count: usize,
}

impl SegmentationMap {
    /// Checks id range, non-emptiness, and 4-connectivity of every superpixel.
    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.width * self.height {
            return Err(Error::SizeMismatch {
                expected: self.width * self.height,
                found: self.ids.len(),
            });
        }
        let mut seen = vec![false; self.count];
        for &id in &self.ids {
            let slot = seen.get_mut(id as usize).ok_or_else(|| {
                Error::InvalidParameter(format!("superpixel id {id} out of range"))
            })?;
            *slot = true;
        }
        if seen.contains(&false) {
            return Err(Error::InvalidParameter("empty superpixel".into()));
        }
        let (_, components) = label_components(
            self.width,
            self.height,
            |_| true,
            |a, b| self.ids[a] == self.ids[b],
        );
        if components != self.count {
            return Err(Error::InvalidParameter(
                "superpixel is not 4-connected".into(),
            ));
        }
        Ok(())
    }

    /// Sorted, deduplicated neighbour lists from a scan of all 4-adjacent pixel pairs.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.count];
        for p in 0..self.ids.len() {
            for q in neighbours4(p, self.width, self.height) {
                let (a, b) = (self.ids[p], self.ids[q]);
                if a != b {
                    adj[a as usize].push(b);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

const SLIC_ITERATIONS: usize = 10;

/// SLIC superpixels on all bands of `r`, which should be scaled to `[0, 1]`.
///
/// Centres start on a regular grid; each of a fixed number of iterations
/// assigns pixels within a `2S` neighbourhood to the nearest centre under
/// `dc² + (m/100 · ds/S)²`, then recentres. A final pass merges fragments
/// smaller than `S²/4` into their largest neighbour.
pub fn slic_superpixels(
    r: &Raster,
    target_count: usize,
    compactness: f64,
) -> Result<SegmentationMap> {
    let (w, h) = (r.width(), r.height());
    let n = w * h;
    if target_count == 0 || target_count > n {
        return Err(Error::InvalidParameter(format!(
            "superpixel target {target_count} outside 1..={n}"
        )));
    }
    if !(compactness > 0.0) {
        return Err(Error::InvalidParameter(
            "compactness must be positive".into(),
        ));
    }
    let d = r.band_count();
    let nx = ((target_count as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w);
    let ny = ((target_count as f64 / nx as f64).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let s = (n as f64 / (nx * ny) as f64).sqrt();
    let reach = sx.max(sy).ceil() as isize;
    let spatial_weight = (compactness / 100.0 / s).powi(2);

    // Centre layout: x, y, then d band values.
    let stride = 2 + d;
    let mut centres = Vec::with_capacity(nx * ny * stride);
    for j in 0..ny {
        for i in 0..nx {
            let cx = ((i as f64 + 0.5) * sx).min(w as f64 - 1.0);
            let cy = ((j as f64 + 0.5) * sy).min(h as f64 - 1.0);
            let p = cy as usize * w + cx as usize;
            centres.push(cx);
            centres.push(cy);
            centres.extend((0..d).map(|b| r.band_at(b)[p] as f64));
        }
    }
    let k = nx * ny;
    let mut labels: Vec<u32> = (0..n)
        .map(|p| {
            let i = (((p % w) as f64 / sx) as usize).min(nx - 1);
            let j = (((p / w) as f64 / sy) as usize).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..SLIC_ITERATIONS {
        dist.iter_mut().for_each(|v| *v = f64::INFINITY);
        for c in 0..k {
            let ctr = &centres[c * stride..(c + 1) * stride];
            let (cx, cy) = (ctr[0].round() as isize, ctr[1].round() as isize);
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach + 1).min(h as isize)) as usize;
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach + 1).min(w as isize)) as usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = y * w + x;
                    let dc: f64 = (0..d)
                        .map(|b| {
                            let v = r.band_at(b)[p] as f64 - ctr[2 + b];
                            v * v
                        })
                        .sum();
                    let ds = (x as f64 - ctr[0]).powi(2) + (y as f64 - ctr[1]).powi(2);
                    let dd = dc + spatial_weight * ds;
                    if dd < dist[p] {
                        dist[p] = dd;
                        labels[p] = c as u32;
                    }
                }
            }
        }
        let mut sums = vec![0.0; k * stride];
        let mut counts = vec![0usize; k];
        for p in 0..n {
            let c = labels[p] as usize;
            counts[c] += 1;
            let acc = &mut sums[c * stride..(c + 1) * stride];
            acc[0] += (p % w) as f64;
            acc[1] += (p / w) as f64;
            for b in 0..d {
                acc[2 + b] += r.band_at(b)[p] as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for t in 0..stride {
                    centres[c * stride + t] = sums[c * stride + t] / counts[c] as f64;
                }
            }
        }
    }
    Ok(enforce_connectivity(
        w,
        h,
        &labels,
        (s * s / 4.0).max(1.0) as usize,
    ))
}

/// Splits labels into 4-connected components, merges components smaller than
/// `min_size` into their largest adjacent component, and renumbers in scan order.
fn enforce_connectivity(w: usize, h: usize, labels: &[u32], min_size: usize) -> SegmentationMap {
    let (comp, count) = label_components(w, h, |_| true, |a, b| labels[a] == labels[b]);
    let mut size = vec![0usize; count];
    for &c in &comp {
        size[c as usize] += 1;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); count];
    for p in 0..comp.len() {
        for q in neighbours4(p, w, h) {
            if comp[p] != comp[q] {
                adj[comp[p] as usize].push(comp[q] as usize);
            }
        }
    }
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for c in 0..count {
        let root = find(&mut parent, c);
        if size[root] >= min_size {
            continue;
        }
        let mut best: Option<(usize, usize)> = None;
        for &nb in &adj[c] {
            let nr = find(&mut parent, nb);
            if nr == root {
                continue;
            }
            // Largest neighbour wins; ties go to the lowest root.
            if best.is_none_or(|(bs, br)| size[nr] > bs || (size[nr] == bs && nr < br)) {
                best = Some((size[nr], nr));
            }
        }
        if let Some((_, nr)) = best {
            parent[root] = nr;
            size[nr] += size[root];
        }
    }
    let mut remap = vec![u32::MAX; count];
    let mut next = 0u32;
    let ids = comp
        .iter()
        .map(|&c| {
            let root = find(&mut parent, c as usize);
            if remap[root] == u32::MAX {
                remap[root] = next;
                next += 1;
            }
            remap[root]
        })
        .collect();
    SegmentationMap {
        width: w,
        height: h,
        ids,
        count: next as usize,
    }
}

/// Superpixel multiple-kernel settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScMkParams {
    /// `None` means one superpixel per 64 pixels.
    pub superpixel_count: Option<usize>,
    pub compactness: f64,
    pub w_pixel: f64,
    pub w_within: f64,
    pub w_neighbor: f64,
    /// Kernel applied to each of the three parts; `None` means RBF with `gamma = 1 / band_count`.
    pub kernel: Option<KernelSpec>,
}

impl Default for ScMkParams {
    fn default() -> Self {
        ScMkParams {
            superpixel_count: None,
            compactness: 10.0,
            w_pixel: 0.4,
            w_within: 0.4,
            w_neighbor: 0.2,
            kernel: None,
        }
    }
}

impl ScMkParams {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_pixel, self.w_within, self.w_neighbor];
        if w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "kernel weights {w:?} must be nonnegative and sum to 1"
            )));
        }
        Ok(())
    }

    pub fn target_count(&self, pixels: usize) -> usize {
        self.superpixel_count
            .unwrap_or(pixels / 64)
            .clamp(1, pixels.max(1))
    }

    /// The weighted kernel as a [`KernelSpec::Sum`] over `3 d` features.
    pub fn kernel_spec(&self, d: usize) -> Result<KernelSpec> {
        self.validate()?;
        let base = self
            .kernel
            .clone()
            .unwrap_or_else(|| KernelSpec::rbf_for_dim(d));
        let terms = [self.w_pixel, self.w_within, self.w_neighbor]
            .iter()
            .enumerate()
            .map(|(i, &weight)| KernelTerm {
                weight,
                offset: i * d,
                len: d,
                kernel: base.clone(),
            })
            .collect();
        let k = KernelSpec::Sum { terms };
        k.validate(3 * d)?;
        Ok(k)
    }
}

/// Rows `[own spectrum | superpixel mean | mean of adjacent superpixel means]`.
///
/// A superpixel with no neighbours uses its own mean for the third part.
pub fn scmk_features(r: &Raster, seg: &SegmentationMap) -> Result<Vec<Vec<f64>>> {
    if seg.width != r.width() || seg.height != r.height() || seg.ids.len() != r.pixel_count() {
        return Err(Error::DimensionMismatch(format!(
            "segmentation {}x{} vs raster {}x{}",
            seg.width,
            seg.height,
            r.width(),
            r.height()
        )));
    }
    let d = r.band_count();
    let mut means = vec![0.0; seg.count * d];
    let mut counts = vec![0usize; seg.count];
    for (p, &id) in seg.ids.iter().enumerate() {
        counts[id as usize] += 1;
        for b in 0..d {
            means[id as usize * d + b] += r.band_at(b)[p] as f64;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        for v in &mut means[c * d..(c + 1) * d] {
            *v /= cnt.max(1) as f64;
        }
    }
    let neighbour_means: Vec<f64> = seg
        .adjacency()
        .iter()
        .enumerate()
        .flat_map(|(c, nbs)| {
            if nbs.is_empty() {
                means[c * d..(c + 1) * d].to_vec()
            } else {
                (0..d)
                    .map(|b| {
                        nbs.iter().map(|&o| means[o as usize * d + b]).sum::<f64>()
                            / nbs.len() as f64
                    })
                    .collect()
            }
        })
        .collect();
    Ok(r.pixel_rows()
        .into_iter()
        .zip(&seg.ids)
        .map(|(mut row, &id)| {
            let id = id as usize;
            row.extend_from_slice(&means[id * d..(id + 1) * d]);
            row.extend_from_slice(&neighbour_means[id * d..(id + 1) * d]);
            row
        })
        .collect())
}

/// Kernel between two `[pixel | within | neighbour]` rows of length `3 d`.
pub fn scmk_kernel(params: &ScMkParams, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || !x.len().is_multiple_of(3) || x.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "feature triples of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(params.kernel_spec(x.len() / 3)?.eval(x, y))
}
