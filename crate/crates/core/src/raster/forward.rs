use super::project::{project_indexed, Projection, Splat2D};
use super::{ALPHA_CAP, CUTOFF_Q, MIN_TRANSMITTANCE, TILE};
use crate::par;
use crate::scene::{CameraPose, GaussianCloud, ImageBuffer};
use crate::{Error, Result};

/// Projected, depth-sorted and tile-binned splats for one camera.
pub struct Prepared {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) tiles_x: usize,
    pub(crate) tiles_y: usize,
    /// Visible splats in depth order.
    pub splats: Vec<Splat2D>,
    /// For each tile, indices into `splats` (ascending, i.e. front to back).
    pub(crate) tile_lists: Vec<Vec<u32>>,
    pub(crate) gaussian_count: usize,
}

pub struct RenderOutput {
    pub image: ImageBuffer,
    /// Transmittance left after compositing, per pixel.
    pub transmittance: Vec<f64>,
}

/// Forward results the backward pass replays from.
pub struct ForwardState {
    pub output: RenderOutput,
    /// Per pixel, one past the last tile-list position that was composited.
    pub(crate) stop: Vec<u32>,
}

#[inline]
pub(crate) fn splat_alpha(s: &Splat2D, px: f64, py: f64) -> Option<(f64, f64, f64, f64)> {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
    if q > CUTOFF_Q {
        return None;
    }
    let g = (-0.5 * q).exp();
    Some(((s.opacity * g).min(ALPHA_CAP), g, dx, dy))
}

impl Prepared {
    pub fn new(cloud: &GaussianCloud, cam: &CameraPose) -> Self {
        let w_rot = cam.rotation();
        let projected = par::map_range(cloud.len(), |i| project_indexed(&cloud.gaussians[i], i, cam, &w_rot));
        let mut splats: Vec<Splat2D> = projected.into_iter().filter_map(Projection::visible).collect();
        splats.sort_by(|a, b| {
            a.depth
                .total_cmp(&b.depth)
                .then(a.gaussian_index.cmp(&b.gaussian_index))
        });
        let (width, height) = (cam.width as usize, cam.height as usize);
        let tiles_x = width.div_ceil(TILE);
        let tiles_y = height.div_ceil(TILE);
        let mut tile_lists = vec![Vec::new(); tiles_x * tiles_y];
        for (k, s) in splats.iter().enumerate() {
            let x0 = ((s.mean[0] - s.extent).floor().max(0.0) as usize) / TILE;
            let y0 = ((s.mean[1] - s.extent).floor().max(0.0) as usize) / TILE;
            let x1 = (s.mean[0] + s.extent).ceil();
            let y1 = (s.mean[1] + s.extent).ceil();
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            let x1 = ((x1 as usize) / TILE).min(tiles_x - 1);
            let y1 = ((y1 as usize) / TILE).min(tiles_y - 1);
            for ty in y0..=y1 {
                for tx in x0..=x1 {
                    tile_lists[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Prepared {
            width,
            height,
            tiles_x,
            tiles_y,
            splats,
            tile_lists,
            gaussian_count: cloud.len(),
        }
    }

    pub(crate) fn tile_pixels(&self, tile: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * TILE;
        let y0 = ty * TILE;
        let x1 = (x0 + TILE).min(self.width);
        let y1 = (y0 + TILE).min(self.height);
        (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
    }

    pub fn forward(&self, colors: &[[f64; 3]], background: [f64; 3]) -> Result<ForwardState> {
        if colors.len() != self.gaussian_count {
            return Err(Error::SizeMismatch(format!(
                "{} colors for {} Gaussians",
                colors.len(),
                self.gaussian_count
            )));
        }
        let n_tiles = self.tiles_x * self.tiles_y;
        let per_tile = par::map_range(n_tiles, |tile| {
            let list = &self.tile_lists[tile];
            self.tile_pixels(tile)
                .map(|(x, y)| {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let mut c = [0.0; 3];
                    let mut t = 1.0;
                    let mut stop = 0u32;
                    for (pos, &k) in list.iter().enumerate() {
                        let s = &self.splats[k as usize];
                        let Some((alpha, ..)) = splat_alpha(s, px, py) else {
                            continue;
                        };
                        let col = &colors[s.gaussian_index];
                        let w = alpha * t;
                        c[0] += col[0] * w;
                        c[1] += col[1] * w;
                        c[2] += col[2] * w;
                        t *= 1.0 - alpha;
                        stop = pos as u32 + 1;
                        if t < MIN_TRANSMITTANCE {
                            break;
                        }
                    }
                    (x, y, [0, 1, 2].map(|k| c[k] + t * background[k]), t, stop)
                })
                .collect::<Vec<_>>()
        });
        let mut image = ImageBuffer::new(self.width as u32, self.height as u32);
        let mut transmittance = vec![1.0; self.width * self.height];
        let mut stop = vec![0u32; self.width * self.height];
        for tile in per_tile {
            for (x, y, rgb, t, s) in tile {
                let i = y * self.width + x;
                image.data[i * 3..i * 3 + 3].copy_from_slice(&rgb);
                transmittance[i] = t;
                stop[i] = s;
            }
        }
        Ok(ForwardState {
            output: RenderOutput {
                image,
                transmittance,
            },
            stop,
        })
    }
}

/// Composite `cloud` with per-Gaussian linear-RGB `colors` over `background`.
pub fn render_splats(
    cloud: &GaussianCloud,
    colors: &[[f64; 3]],
    cam: &CameraPose,
    background: [f64; 3],
) -> Result<RenderOutput> {
    Ok(Prepared::new(cloud, cam).forward(colors, background)?.output)
}
