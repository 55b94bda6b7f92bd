use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Planar projective map between two images, normalized so `h[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: Matrix3::identity(),
        }
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        let m = Matrix3::from_fn(|r, c| rows[r][c]);
        Self::from_matrix(m)
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHomography("non-finite entry".into()));
        }
        let scale = m[(2, 2)];
        if scale.abs() < 1e-300 {
            return Err(Error::InvalidHomography(
                "bottom-right entry is zero".into(),
            ));
        }
        let m = m / scale;
        if m.determinant().abs() < 1e-12 {
            return Err(Error::InvalidHomography("singular matrix".into()));
        }
        Ok(Homography { m })
    }

    pub fn scaling(s: f64) -> Self {
        Self::from_rows([[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, 1.0]]).expect("s != 0")
    }

    /// Rotation by `angle` about `(cx, cy)`.
    pub fn rotation_about(angle: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_rows([
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
            [0.0, 0.0, 1.0],
        ])
        .expect("rotation is invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Homography {
        let inv = self
            .m
            .try_inverse()
            .expect("checked non-singular on construction");
        Homography::from_matrix(inv).expect("inverse of a valid homography")
    }

    /// Maps a point; `None` when it goes to infinity.
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let p = self.m * Vector3::new(x, y, 1.0);
        if p.z.abs() < 1e-12 {
            return None;
        }
        Some((p.x / p.z, p.y / p.z))
    }

    /// Jacobian of the map at `(x, y)`: the local affine approximation.
    pub fn jacobian(&self, x: f64, y: f64) -> Option<Matrix2<f64>> {
        let m = &self.m;
        let num_x = m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)];
        let num_y = m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)];
        let den = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        if den.abs() < 1e-12 {
            return None;
        }
        let d2 = den * den;
        Some(Matrix2::new(
            (m[(0, 0)] * den - num_x * m[(2, 0)]) / d2,
            (m[(0, 1)] * den - num_x * m[(2, 1)]) / d2,
            (m[(1, 0)] * den - num_y * m[(2, 0)]) / d2,
            (m[(1, 1)] * den - num_y * m[(2, 1)]) / d2,
        ))
    }

    /// Parses the Oxford text format: nine whitespace-separated reals, row-major.
    pub fn parse(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidHomography(format!("bad number {t:?}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 9 {
            return Err(Error::InvalidHomography(format!(
                "expected 9 values, found {}",
                vals.len()
            )));
        }
        Self::from_matrix(Matrix3::from_row_slice(&vals))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..3 {
            let row: Vec<String> = (0..3).map(|c| format!("{:.8e}", self.m[(r, c)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}
