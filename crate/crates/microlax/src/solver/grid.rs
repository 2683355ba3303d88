//! Uniform cell-centered grids with Neumann/no-flux stencils and the
//! mean-zero Green preconditioner of the conserved flow.

use crate::error::{Error, Result};

/// Uniform rectangular grid. Scalar order-parameter fields live at cell
/// centers; displacements at nodes.
#[derive(Clone, Copy, Debug)]
pub struct Grid {
    /// 1 or 2 spatial dimensions
    pub dim: usize,
    /// cells per axis (ny = 1 in one dimension)
    pub n: [usize; 2],
    /// physical lengths per axis
    pub len: [f64; 2],
}

impl Grid {
    pub fn new_1d(n: usize, len: f64) -> Result<Grid> {
        if n < 4 {
            return Err(Error::Config("grid needs at least 4 cells per axis".into()));
        }
        Ok(Grid { dim: 1, n: [n, 1], len: [len, 1.0] })
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
        if nx < 4 || ny < 4 {
            return Err(Error::Config("grid needs at least 4 cells per axis".into()));
        }
        Ok(Grid { dim: 2, n: [nx, ny], len: [lx, ly] })
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.len[0] / self.n[0] as f64, self.len[1] / self.n[1] as f64]
    }

    pub fn cells(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        match self.dim {
            1 => h[0],
            _ => h[0] * h[1],
        }
    }

    /// nodes per axis for the displacement field
    pub fn nodes(&self) -> [usize; 2] {
        match self.dim {
            1 => [self.n[0] + 1, 1],
            _ => [self.n[0] + 1, self.n[1] + 1],
        }
    }

    pub fn node_count(&self) -> usize {
        let nn = self.nodes();
        nn[0] * nn[1]
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    /// cell-center coordinate
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [(i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1]]
    }
}

/// Second-order Neumann Laplacian with mirrored ghost cells. Discretely
/// conservative: the output sums to zero up to round-off.
pub fn laplacian_neumann(field: &[f64], grid: &Grid) -> Vec<f64> {
    let [nx, ny] = grid.n;
    let h = grid.spacing();
    let mut out = vec![0.0; field.len()];
    let hx2 = h[0] * h[0];
    match grid.dim {
        1 => {
            for i in 0..nx {
                let l = if i == 0 { field[0] } else { field[i - 1] };
                let r = if i + 1 == nx { field[nx - 1] } else { field[i + 1] };
                out[i] = (l - 2.0 * field[i] + r) / hx2;
            }
        }
        _ => {
            let hy2 = h[1] * h[1];
            for j in 0..ny {
                for i in 0..nx {
                    let c = grid.cell_index(i, j);
                    let l = if i == 0 { field[c] } else { field[c - 1] };
                    let r = if i + 1 == nx { field[c] } else { field[c + 1] };
                    let dn = if j == 0 { field[c] } else { field[c - nx] };
                    let up = if j + 1 == ny { field[c] } else { field[c + nx] };
                    out[c] = (l - 2.0 * field[c] + r) / hx2 + (dn - 2.0 * field[c] + up) / hy2;
                }
            }
        }
    }
    out
}

/// Cell-average of a field.
pub fn mean(field: &[f64]) -> f64 {
    field.iter().sum::<f64>() / field.len() as f64
}

/// Face-centered flux `J = -M grad(mu)` with no-flux boundary faces.
/// One dimension: `nx + 1` faces. Two dimensions: x-faces then y-faces.
pub fn flux_field(mu: &[f64], grid: &Grid, mobility: f64) -> Vec<f64> {
    let [nx, ny] = grid.n;
    let h = grid.spacing();
    match grid.dim {
        1 => {
            let mut jf = vec![0.0; nx + 1];
            for i in 1..nx {
                jf[i] = -mobility * (mu[i] - mu[i - 1]) / h[0];
            }
            jf
        }
        _ => {
            let mut jf = vec![0.0; (nx + 1) * ny + nx * (ny + 1)];
            for j in 0..ny {
                for i in 1..nx {
                    let c = grid.cell_index(i, j);
                    jf[j * (nx + 1) + i] = -mobility * (mu[c] - mu[c - 1]) / h[0];
                }
            }
            let off = (nx + 1) * ny;
            for j in 1..ny {
                for i in 0..nx {
                    let c = grid.cell_index(i, j);
                    jf[off + j * nx + i] = -mobility * (mu[c] - mu[c - nx]) / h[1];
                }
            }
            jf
        }
    }
}

/// Solves the Neumann Poisson problem `-M lap(w) = f` on the mean-zero
/// complement by conjugate gradients. The input is projected to mean zero
/// when its mean is small; a significantly nonzero mean is an error in the
/// caller. The returned field has mean zero.
pub fn green_apply(f: &[f64], grid: &Grid, mobility: f64, tol: f64) -> Result<Vec<f64>> {
    let n = f.len();
    let fbar = mean(f);
    let fnorm = (f.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    let mut w = vec![0.0; n];
    if fnorm == 0.0 {
        return Ok(w);
    }
    let apply = |x: &[f64], out: &mut Vec<f64>| {
        let lap = laplacian_neumann(x, grid);
        let m = mean(&lap);
        out.clear();
        out.extend(lap.iter().map(|v| -mobility * (v - m)));
    };
    let mut r: Vec<f64> = f.iter().map(|x| x - fbar).collect();
    let mut p = r.clone();
    let mut ap = Vec::with_capacity(n);
    let mut rs: f64 = r.iter().map(|x| x * x).sum();
    let rs0 = rs;
    let mut it = 0usize;
    while rs.sqrt() > tol * rs0.sqrt() {
        it += 1;
        if it > 100_000 {
            return Err(Error::SolverStall("Neumann Poisson CG exceeded 1e5 iterations".into()));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        for i in 0..n {
            w[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|x| x * x).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let wbar = mean(&w);
    for wi in w.iter_mut() {
        *wi -= wbar;
    }
    Ok(w)
}

/// Squared H^-1-type norm `||f||_M^2 = sum f * (G f) * cell_volume`.
pub fn h_inv_norm_sq(f: &[f64], grid: &Grid, mobility: f64, tol: f64) -> Result<f64> {
    let w = green_apply(f, grid, mobility, tol)?;
    Ok(f.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume())
}
