//! Inversion of uv2xy lookup tables.
//!
//! VLC and depth sensors expose no closed-form intrinsics, only the per-pixel
//! uv2xy LUT mapping pixels to unit-plane coordinates. Projecting INTO such a
//! camera needs the inverse map. [`LutInverter`] precomputes a coarse grid
//! over the LUT's unit-plane footprint (nearest pixel per cell) and refines
//! each query with a local Gauss-Newton solve on the bilinearly interpolated
//! LUT. For an ideal pinhole LUT the refinement is exact to float precision.

use crate::calibration::Uv2XyLut;

const GRID_SCALE: usize = 2;
const MAX_ITERS: usize = 16;
const RESIDUAL_TOL: f32 = 1e-4;

#[derive(Debug, Clone)]
pub struct LutInverter {
    lut: Uv2XyLut,
    grid_w: usize,
    grid_h: usize,
    x0: f32,
    y0: f32,
    inv_cell_w: f32,
    inv_cell_h: f32,
    // Seed pixel per cell, packed (u, v); u32::MAX marks a cell that no LUT
    // value maps into even after hole filling (degenerate LUT).
    cells: Vec<(u32, u32)>,
}

impl LutInverter {
    pub fn new(lut: &Uv2XyLut) -> LutInverter {
        let (w, h) = (lut.width(), lut.height());
        let mut x_min = f32::INFINITY;
        let mut x_max = f32::NEG_INFINITY;
        let mut y_min = f32::INFINITY;
        let mut y_max = f32::NEG_INFINITY;
        for v in 0..h {
            for u in 0..w {
                let (x, y) = lut.xy(u, v);
                if x.is_finite() && y.is_finite() {
                    x_min = x_min.min(x);
                    x_max = x_max.max(x);
                    y_min = y_min.min(y);
                    y_max = y_max.max(y);
                }
            }
        }
        if !x_min.is_finite() {
            // no finite entries; collapse to an inverter that rejects all queries
            (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
        }
        let grid_w = (w * GRID_SCALE).max(2);
        let grid_h = (h * GRID_SCALE).max(2);
        let span_x = (x_max - x_min).max(f32::EPSILON);
        let span_y = (y_max - y_min).max(f32::EPSILON);
        let inv_cell_w = (grid_w - 1) as f32 / span_x;
        let inv_cell_h = (grid_h - 1) as f32 / span_y;

        let mut cells = vec![(u32::MAX, u32::MAX); grid_w * grid_h];
        let mut queue = std::collections::VecDeque::new();
        for v in 0..h {
            for u in 0..w {
                let (x, y) = lut.xy(u, v);
                if !x.is_finite() || !y.is_finite() {
                    continue;
                }
                let gx = (((x - x_min) * inv_cell_w).round() as isize).clamp(0, grid_w as isize - 1);
                let gy = (((y - y_min) * inv_cell_h).round() as isize).clamp(0, grid_h as isize - 1);
                let idx = gy as usize * grid_w + gx as usize;
                if cells[idx].0 == u32::MAX {
                    queue.push_back(idx);
                }
                cells[idx] = (u as u32, v as u32);
            }
        }
        // Multi-source BFS fills grid holes with the nearest seeded pixel so
        // every in-bounds query gets a usable refinement start.
        while let Some(idx) = queue.pop_front() {
            let seed = cells[idx];
            let gx = idx % grid_w;
            let gy = idx / grid_w;
            let mut visit = |nx: usize, ny: usize, queue: &mut std::collections::VecDeque<usize>| {
                let nidx = ny * grid_w + nx;
                if cells[nidx].0 == u32::MAX {
                    cells[nidx] = seed;
                    queue.push_back(nidx);
                }
            };
            if gx > 0 {
                visit(gx - 1, gy, &mut queue);
            }
            if gx + 1 < grid_w {
                visit(gx + 1, gy, &mut queue);
            }
            if gy > 0 {
                visit(gx, gy - 1, &mut queue);
            }
            if gy + 1 < grid_h {
                visit(gx, gy + 1, &mut queue);
            }
        }

        LutInverter {
            lut: lut.clone(),
            grid_w,
            grid_h,
            x0: x_min,
            y0: y_min,
            inv_cell_w,
            inv_cell_h,
            cells,
        }
    }

    pub fn width(&self) -> usize {
        self.lut.width()
    }

    pub fn height(&self) -> usize {
        self.lut.height()
    }

    /// Bilinear LUT value and its gradient at fractional pixel (u, v).
    fn sample(&self, u: f32, v: f32) -> ([f32; 2], [[f32; 2]; 2]) {
        let (w, h) = (self.lut.width(), self.lut.height());
        let uc = u.clamp(0.0, (w - 1) as f32);
        let vc = v.clamp(0.0, (h - 1) as f32);
        let u0 = (uc.floor() as usize).min(w - 2);
        let v0 = (vc.floor() as usize).min(h - 2);
        let fu = uc - u0 as f32;
        let fv = vc - v0 as f32;
        let (x00, y00) = self.lut.xy(u0, v0);
        let (x10, y10) = self.lut.xy(u0 + 1, v0);
        let (x01, y01) = self.lut.xy(u0, v0 + 1);
        let (x11, y11) = self.lut.xy(u0 + 1, v0 + 1);
        let lerp2 = |a00: f32, a10: f32, a01: f32, a11: f32| {
            a00 * (1.0 - fu) * (1.0 - fv) + a10 * fu * (1.0 - fv) + a01 * (1.0 - fu) * fv + a11 * fu * fv
        };
        let x = lerp2(x00, x10, x01, x11);
        let y = lerp2(y00, y10, y01, y11);
        // partial derivatives of the bilinear patch
        let dx_du = (x10 - x00) * (1.0 - fv) + (x11 - x01) * fv;
        let dx_dv = (x01 - x00) * (1.0 - fu) + (x11 - x10) * fu;
        let dy_du = (y10 - y00) * (1.0 - fv) + (y11 - y01) * fv;
        let dy_dv = (y01 - y00) * (1.0 - fu) + (y11 - y10) * fu;
        ([x, y], [[dx_du, dx_dv], [dy_du, dy_dv]])
    }

    /// Pixel whose LUT value equals the given unit-plane coordinates, or
    /// `None` when (x, y) falls outside the LUT's footprint or the solve
    /// does not converge.
    pub fn invert(&self, x: f32, y: f32) -> Option<(f32, f32)> {
        if !x.is_finite() || !y.is_finite() {
            return None;
        }
        let gx = ((x - self.x0) * self.inv_cell_w).round();
        let gy = ((y - self.y0) * self.inv_cell_h).round();
        // one cell of slack so footprint-boundary queries still refine
        if gx < -1.0 || gy < -1.0 || gx > self.grid_w as f32 || gy > self.grid_h as f32 {
            return None;
        }
        let gx = (gx as isize).clamp(0, self.grid_w as isize - 1) as usize;
        let gy = (gy as isize).clamp(0, self.grid_h as isize - 1) as usize;
        let (su, sv) = self.cells[gy * self.grid_w + gx];
        if su == u32::MAX {
            return None;
        }

        let (w, h) = (self.lut.width(), self.lut.height());
        let mut u = su as f32;
        let mut v = sv as f32;
        for _ in 0..MAX_ITERS {
            let ([fx, fy], j) = self.sample(u, v);
            let ex = fx - x;
            let ey = fy - y;
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-20 {
                return None;
            }
            let du = (ex * j[1][1] - ey * j[0][1]) / det;
            let dv = (ey * j[0][0] - ex * j[1][0]) / det;
            u -= du;
            v -= dv;
            u = u.clamp(-0.5, (w - 1) as f32 + 0.5);
            v = v.clamp(-0.5, (h - 1) as f32 + 0.5);
            if du.abs() < 1e-5 && dv.abs() < 1e-5 {
                break;
            }
        }
        let ([fx, fy], _) = self.sample(u, v);
        if (fx - x).abs() > RESIDUAL_TOL || (fy - y).abs() > RESIDUAL_TOL {
            return None;
        }
        if u < -0.5 || v < -0.5 || u > (w - 1) as f32 + 0.5 || v > (h - 1) as f32 + 0.5 {
            return None;
        }
        Some((u, v))
    }
}
