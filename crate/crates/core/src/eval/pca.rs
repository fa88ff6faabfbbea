//! Principal components by power iteration with deflation.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

pub const PCA_TOL: f64 = 1e-9;
pub const PCA_MAX_ITERS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaResult {
    /// `out_dims x d`, one unit component per row (zero rows when the data
    /// has lower rank).
    pub components: Matrix,
    /// `n x out_dims` projected coordinates.
    pub coords: Matrix,
    pub explained_variance_ratio: Vec<f64>,
    /// Set when fewer than `out_dims` components carry variance.
    pub degenerate_rank: bool,
}

/// Projects mean-centered rows onto their top `out_dims` principal
/// components. Each component's first nonzero loading is positive.
pub fn pca_project(x: &Matrix, out_dims: usize) -> Result<PcaResult> {
    let (n, d) = x.dim();
    if out_dims == 0 || n < out_dims {
        return Err(Error::Data(format!("{n} rows cannot give {out_dims} components")));
    }
    if out_dims > d {
        return Err(Error::Dimension(format!("{out_dims} components from {d} columns")));
    }
    let mean = x.mean_axis(Axis(0)).expect("n > 0");
    let centered = x - &mean;
    let mut cov = centered.t().dot(&centered) / n as f64;
    let trace: f64 = cov.diag().sum();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut components = Array2::zeros((out_dims, d));
    let mut ratios = Vec::with_capacity(out_dims);
    let mut degenerate = false;
    for k in 0..out_dims {
        let (v, lambda) = top_eigenpair(&cov, &mut rng);
        if trace <= 0.0 || lambda <= 1e-12 * trace.max(f64::MIN_POSITIVE) {
            degenerate = true;
            ratios.extend(std::iter::repeat_n(0.0, out_dims - k));
            break;
        }
        ratios.push(lambda / trace);
        // deflate
        let vc = v.view().insert_axis(Axis(1));
        cov = &cov - &(vc.dot(&vc.t()) * lambda);
        components.row_mut(k).assign(&v);
    }
    let coords = centered.dot(&components.t());
    Ok(PcaResult {
        components,
        coords,
        explained_variance_ratio: ratios,
        degenerate_rank: degenerate,
    })
}

fn top_eigenpair(cov: &Matrix, rng: &mut ChaCha8Rng) -> (Array1<f64>, f64) {
    let d = cov.nrows();
    let mut v: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    v /= norm(&v);
    for _ in 0..PCA_MAX_ITERS {
        let w = cov.dot(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            return (v, 0.0);
        }
        let next = fix_sign(w / nw);
        let delta = norm(&(&next - &v));
        v = next;
        if delta < PCA_TOL {
            break;
        }
    }
    let lambda = v.dot(&cov.dot(&v));
    (fix_sign(v), lambda)
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn fix_sign(v: Array1<f64>) -> Array1<f64> {
    match v.iter().find(|x| x.abs() > 1e-12) {
        Some(&x) if x < 0.0 => -v,
        _ => v,
    }
}

/// Tab-separated `x y domain` rows under a header line.
pub fn pca_dump_string(coords: &Matrix, tags: &[Option<String>]) -> Result<String> {
    if coords.ncols() < 2 {
        return Err(Error::Dimension("dump needs two projected columns".into()));
    }
    if coords.nrows() != tags.len() {
        return Err(Error::Dimension("one domain tag per row required".into()));
    }
    let mut out = String::from("x\ty\tdomain\n");
    for (r, t) in coords.rows().into_iter().zip(tags) {
        out.push_str(&format!("{}\t{}\t{}\n", r[0], r[1], t.as_deref().unwrap_or("-")));
    }
    Ok(out)
}

pub fn write_pca_dump(path: &Path, coords: &Matrix, tags: &[Option<String>]) -> Result<()> {
    fs::write(path, pca_dump_string(coords, tags)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn collinear_data_has_one_component() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| (i as f64 - 20.0) * if j == 0 { 1.0 } else { 2.0 });
        let p = pca_project(&x, 2).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        assert!(p.explained_variance_ratio[1].abs() < 1e-9);
        assert!(p.degenerate_rank);
        let s = 5f64.sqrt();
        assert!((p.components[[0, 0]] - 1.0 / s).abs() < 1e-9);
        assert!((p.components[[0, 1]] - 2.0 / s).abs() < 1e-9);
        assert!(p.coords.column(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn isotropic_gaussian_spreads_variance_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_simple_fn((10_000, 4), || StandardNormal.sample(&mut rng));
        let p = pca_project(&x, 2).unwrap();
        assert!((p.explained_variance_ratio[0] - 0.25).abs() < 0.025);
        assert!(!p.degenerate_rank);
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((200, 3), |(_, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (3 - j) as f64
        });
        let rev: Vec<usize> = (0..200).rev().collect();
        let a = pca_project(&x, 2).unwrap();
        let b = pca_project(&x.select(Axis(0), &rev), 2).unwrap();
        for (u, v) in a.components.iter().zip(b.components.iter()) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn first_loading_is_positive() {
        let x = array![[1.0, -1.0], [-1.0, 1.0], [2.0, -2.1], [-2.0, 2.0]];
        let p = pca_project(&x, 1).unwrap();
        assert!(p.components[[0, 0]] > 0.0);
    }

    #[test]
    fn dump_format() {
        let coords = array![[1.5, -2.0], [0.0, 3.0]];
        let s = pca_dump_string(&coords, &[Some("source0".into()), None]).unwrap();
        assert_eq!(s, "x\ty\tdomain\n1.5\t-2\tsource0\n0\t3\t-\n");
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(pca_project(&array![[1.0, 2.0]], 2), Err(Error::Data(_))));
    }
}
