use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `x_i = x0 + i dx`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    pub x0: f64,
    pub x1: f64,
    pub n: usize,
}

impl SpatialGrid {
    pub fn new(x0: f64, x1: f64, n: usize) -> Result<Self> {
        let g = Self { x0, x1, n };
        g.validate()?;
        Ok(g)
    }

    /// Grid on `[x0, x1]` with spacing at most `dx`.
    pub fn with_spacing(x0: f64, x1: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        let cells = ((x1 - x0) / dx).ceil().max(2.0) as usize;
        Self::new(x0, x1, cells + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x0.is_finite() && self.x1.is_finite()) || self.x0 >= self.x1 {
            return Err(Error::InvalidGrid(format!(
                "endpoints {} and {} must be finite and increasing",
                self.x0, self.x1
            )));
        }
        if self.n < 3 {
            return Err(Error::InvalidGrid(format!("n = {} < 3", self.n)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Index of the node at or left of `x`, clamped so that `i + 1 < n`.
    pub fn cell(&self, x: f64) -> usize {
        let s = ((x - self.x0) / self.dx()).floor();
        (s.max(0.0) as usize).min(self.n - 2)
    }

    pub fn contains(&self, x: f64, margin: f64) -> bool {
        x - margin >= self.x0 && x + margin <= self.x1
    }
}

/// Composite trapezoid rule for samples with spacing `dx`.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dx * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Nodal values of a scalar function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Envelope<'a> {
    grid: SpatialGrid,
    values: std::borrow::Cow<'a, [f64]>,
    #[serde(default)]
    meta: serde_json::Value,
}

impl Field {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::Mismatch(format!(
                "{} values on a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp { node: i, t: f64::NAN });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n).map(|i| f(grid.x(i))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n],
        }
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.dx())
    }

    /// Piecewise-linear interpolation; clamps outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let i = self.grid.cell(x);
        let t = ((x - self.grid.x(i)) / self.grid.dx()).clamp(0.0, 1.0);
        (1.0 - t) * self.values[i] + t * self.values[i + 1]
    }

    /// Two-column CSV `x,value` with round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48);
        out.push_str("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.17e},{:.17e}", self.grid.x(i), v);
        }
        out
    }

    /// Parses the output of [`Field::to_csv`]; the grid is recovered from the first and last rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (k, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = || -> Result<f64> {
                cols.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: missing column", k + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))
            };
            xs.push(next()?);
            vs.push(next()?);
        }
        if xs.len() < 3 {
            return Err(Error::Parse("fewer than 3 rows".into()));
        }
        let grid = SpatialGrid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        Field::new(grid, vs)
    }

    pub fn to_json(&self, meta: serde_json::Value) -> String {
        let env = Envelope {
            grid: self.grid,
            values: std::borrow::Cow::Borrowed(&self.values),
            meta,
        };
        serde_json::to_string(&env).expect("field serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope<'_> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        env.grid.validate()?;
        Field::new(env.grid, env.values.into_owned())
    }
}
