//! 3x3 nonnegativity stencil for `div(D grad u)` on a unit grid.
//!
//! The operator is stored as symmetric edge weights between neighbouring
//! pixels, `(A u)_p = sum_q w_pq (u_q - u_p)`, which makes row sums zero and
//! the pixel-to-pixel operator symmetric by construction. Edges that would
//! leave the domain are dropped (reflecting boundary, zero flux).
//!
//! For `D = [[a, b], [b, c]]` the weights between `p` and its neighbour `q` are
//!
//! * horizontal: `(a_p + a_q)/2 - (|b_p| + |b_q|)/2`
//! * vertical:   `(c_p + c_q)/2 - (|b_p| + |b_q|)/2`
//! * diagonal, x and y increasing together: `(|b_p| + b_p)/4 + (|b_q| + b_q)/4`
//! * anti-diagonal: `(|b_p| - b_p)/4 + (|b_q| - b_q)/4`
//!
//! All weights are nonnegative when `|b| <= min(a, c)` everywhere.

use crate::error::Result;
use crate::image::ImageGrid;
use crate::tensor::TensorField;

/// Edge weights of the assembled operator, one entry per pixel and edge
/// family. Entries whose partner pixel lies outside the grid are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilField {
    width: usize,
    height: usize,
    /// `(x, y)` to `(x + 1, y)`.
    east: Vec<f64>,
    /// `(x, y)` to `(x, y + 1)`.
    south: Vec<f64>,
    /// `(x, y)` to `(x + 1, y + 1)`.
    south_east: Vec<f64>,
    /// `(x, y)` to `(x + 1, y - 1)`.
    north_east: Vec<f64>,
    /// All diagonal weights are zero (isotropic tensors).
    axial_only: bool,
}

pub fn assemble_stencil(d: &TensorField) -> StencilField {
    let (w, h) = (d.width, d.height);
    let n = w * h;
    let abs_b: Vec<f64> = d.b.iter().map(|b| b.abs()).collect();
    let mut s = StencilField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                let q = p + 1;
                s.east[p] = 0.5 * (d.a[p] + d.a[q]) - 0.5 * (abs_b[p] + abs_b[q]);
            }
            if y + 1 < h {
                let q = p + w;
                s.south[p] = 0.5 * (d.c[p] + d.c[q]) - 0.5 * (abs_b[p] + abs_b[q]);
                if x + 1 < w {
                    let q = p + w + 1;
                    s.south_east[p] = 0.25 * (abs_b[q] + d.b[q]) + 0.25 * (abs_b[p] + d.b[p]);
                }
            }
            if y > 0 && x + 1 < w {
                let q = p - w + 1;
                s.north_east[p] = 0.25 * (abs_b[q] - d.b[q]) + 0.25 * (abs_b[p] - d.b[p]);
            }
        }
    }
    debug_assert_eq!(s.east.len(), n);
    s.axial_only = d.b.iter().all(|&b| b == 0.0);
    s
}

/// Stencil for the scalar tensor field `D = g I`; identical to
/// `assemble_stencil` on `(g, 0, g)` but skips the diagonal work.
pub(crate) fn assemble_isotropic(width: usize, height: usize, g: &[f64]) -> StencilField {
    let mut s = StencilField::zeros(width, height);
    for y in 0..height {
        let row = y * width;
        for x in 0..width - 1 {
            let p = row + x;
            s.east[p] = 0.5 * (g[p] + g[p + 1]);
        }
        if y + 1 < height {
            for x in 0..width {
                let p = row + x;
                s.south[p] = 0.5 * (g[p] + g[p + width]);
            }
        }
    }
    s.axial_only = true;
    s
}

impl StencilField {
    fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            east: vec![0.0; n],
            south: vec![0.0; n],
            south_east: vec![0.0; n],
            north_east: vec![0.0; n],
            axial_only: false,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Weight of the edge from `(x, y)` to `(x + dx, y + dy)`, zero when the
    /// target lies outside the grid or is not a neighbour.
    pub fn weight(&self, x: usize, y: usize, dx: isize, dy: isize) -> f64 {
        let (w, h) = (self.width as isize, self.height as isize);
        let (tx, ty) = (x as isize + dx, y as isize + dy);
        if tx < 0 || ty < 0 || tx >= w || ty >= h || dx.abs() > 1 || dy.abs() > 1 || (dx == 0 && dy == 0) {
            return 0.0;
        }
        // normalise so the edge starts at the pixel with the smaller x (or y)
        let (px, py, dx, dy) = if dx < 0 || (dx == 0 && dy < 0) {
            (tx, ty, -dx, -dy)
        } else {
            (x as isize, y as isize, dx, dy)
        };
        let p = (py * w + px) as usize;
        match (dx, dy) {
            (1, 0) => self.east[p],
            (0, 1) => self.south[p],
            (1, 1) => self.south_east[p],
            (1, -1) => self.north_east[p],
            _ => unreachable!(),
        }
    }

    /// The 3x3 weight set at a pixel, indexed `[dy + 1][dx + 1]`; the centre
    /// is minus the sum of the neighbour weights.
    pub fn weights_at(&self, x: usize, y: usize) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        let mut total = 0.0;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let v = self.weight(x, y, dx, dy);
                out[(dy + 1) as usize][(dx + 1) as usize] = v;
                total += v;
            }
        }
        out[1][1] = -total;
        out
    }

    /// Whether every off-centre weight is nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        [&self.east, &self.south, &self.south_east, &self.north_east]
            .iter()
            .all(|f| f.iter().all(|&v| v >= 0.0))
    }

    /// Gershgorin bound on the spectral radius: `2 max_p sum_q |w_pq|`.
    pub fn gershgorin_bound(&self) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut row = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let e = self.east[p].abs();
                row[p] += e;
                if x + 1 < w {
                    row[p + 1] += e;
                }
                if y + 1 < h {
                    let s = self.south[p].abs();
                    row[p] += s;
                    row[p + w] += s;
                    if x + 1 < w {
                        let d = self.south_east[p].abs();
                        row[p] += d;
                        row[p + w + 1] += d;
                    }
                }
                if y > 0 && x + 1 < w {
                    let d = self.north_east[p].abs();
                    row[p] += d;
                    row[p - w + 1] += d;
                }
            }
        }
        2.0 * row.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Coefficients `(c_x, c_y)` with
    /// `sum_e |w_e| (u_q - u_p)^2 <= c_x |D_x u|^2 + c_y |D_y u|^2`
    /// for the axial forward differences `D_x`, `D_y` over in-grid edges.
    ///
    /// Each diagonal difference is split over its two L-shaped axial paths,
    /// `(u_q - u_p)^2 <= sum of the four path differences squared`, and the
    /// resulting per-edge coefficients are maximised over the grid.
    pub fn axial_path_bounds(&self) -> (f64, f64) {
        let (w, h) = (self.width as isize, self.height as isize);
        let at = |f: &[f64], x: isize, y: isize| -> f64 {
            if x < 0 || y < 0 || x >= w || y >= h {
                0.0
            } else {
                f[(y * w + x) as usize].abs()
            }
        };
        let (se, ne) = (&self.south_east, &self.north_east);
        let (mut cx, mut cy) = (0.0f64, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                let p = (y * w + x) as usize;
                if x + 1 < w {
                    let c = self.east[p].abs() + at(se, x, y) + at(se, x, y - 1) + at(ne, x, y) + at(ne, x, y + 1);
                    cx = cx.max(c);
                }
                if y + 1 < h {
                    let c = self.south[p].abs()
                        + at(se, x, y)
                        + at(se, x - 1, y)
                        + at(ne, x - 1, y + 1)
                        + at(ne, x, y + 1);
                    cy = cy.max(c);
                }
            }
        }
        (cx, cy)
    }

    /// `A u` for a buffer of matching size.
    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        debug_assert_eq!(u.len(), w * h);
        debug_assert_eq!(out.len(), w * h);
        for y in 0..h {
            let interior_row = y > 0 && y + 1 < h;
            for x in 0..w {
                let p = y * w + x;
                out[p] = if interior_row && x > 0 && x + 1 < w {
                    self.interior(u, p)
                } else {
                    self.boundary(u, x, y)
                };
            }
        }
    }

    #[inline(always)]
    fn interior(&self, u: &[f64], p: usize) -> f64 {
        let w = self.width;
        let c = u[p];
        let mut acc = self.east[p] * (u[p + 1] - c)
            + self.east[p - 1] * (u[p - 1] - c)
            + self.south[p] * (u[p + w] - c)
            + self.south[p - w] * (u[p - w] - c);
        if !self.axial_only {
            acc += self.south_east[p] * (u[p + w + 1] - c)
                + self.south_east[p - w - 1] * (u[p - w - 1] - c)
                + self.north_east[p] * (u[p - w + 1] - c)
                + self.north_east[p + w - 1] * (u[p + w - 1] - c);
        }
        acc
    }

    fn boundary(&self, u: &[f64], x: usize, y: usize) -> f64 {
        let (w, h) = (self.width, self.height);
        let p = y * w + x;
        let c = u[p];
        let mut acc = 0.0;
        if x + 1 < w {
            acc += self.east[p] * (u[p + 1] - c);
        }
        if x > 0 {
            acc += self.east[p - 1] * (u[p - 1] - c);
        }
        if y + 1 < h {
            acc += self.south[p] * (u[p + w] - c);
        }
        if y > 0 {
            acc += self.south[p - w] * (u[p - w] - c);
        }
        if !self.axial_only {
            if x + 1 < w && y + 1 < h {
                acc += self.south_east[p] * (u[p + w + 1] - c);
            }
            if x > 0 && y > 0 {
                acc += self.south_east[p - w - 1] * (u[p - w - 1] - c);
            }
            if x + 1 < w && y > 0 {
                acc += self.north_east[p] * (u[p - w + 1] - c);
            }
            if x > 0 && y + 1 < h {
                acc += self.north_east[p + w - 1] * (u[p + w - 1] - c);
            }
        }
        acc
    }
}

/// Rate of change `A u` (grey value per unit time).
pub fn apply_stencil(s: &StencilField, u: &ImageGrid) -> Result<ImageGrid> {
    if u.width() != s.width || u.height() != s.height {
        return Err(crate::error::Error::DimensionMismatch {
            left_width: s.width,
            left_height: s.height,
            right_width: u.width(),
            right_height: u.height(),
        });
    }
    let mut out = vec![0.0; u.len()];
    s.apply_into(u.data(), &mut out);
    Ok(ImageGrid::from_parts(u.width(), u.height(), out))
}
