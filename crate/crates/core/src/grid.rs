//! Uniform time grids and the value series carried on them.

use std::io::Write;

use crate::error::{Error, Result};

/// Points `0, step, 2 step, ..., n_steps * step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub step: f64,
    pub n_steps: usize,
}

impl UniformGrid {
    pub fn new(step: f64, n_steps: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParams(format!("grid step must be positive, got {step}")));
        }
        Ok(Self { step, n_steps })
    }

    /// Grid on `[0, horizon]` with `n_steps` cells.
    pub fn over(horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidParams("grid needs at least one step".into()));
        }
        Self::new(horizon / n_steps as f64, n_steps)
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.step * i as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }
}

/// A function sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridKernel {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl GridKernel {
    pub fn sample(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.time(i))).collect();
        Self { grid, values }
    }

    /// Trapezoidal integral over the whole grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.step)
    }

    pub fn write_csv<W: Write>(&self, out: W, value_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", value_name])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([fmt_num(self.grid.time(i)), fmt_num(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Shortest round-trip decimal representation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

/// Several named series sampled on a common uniform grid starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub t0: f64,
    pub step: f64,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl PathGrid {
    pub fn new(t0: f64, step: f64) -> Self {
        Self { t0, step, names: Vec::new(), columns: Vec::new() }
    }

    pub fn on(grid: &UniformGrid) -> Self {
        Self::new(0.0, grid.step)
    }

    /// Adds a column; all columns must share one length.
    pub fn with(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.push(name, values)?;
        Ok(self)
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if let Some(first) = self.columns.first() {
            if first.len() != values.len() {
                return Err(Error::GridMismatch(format!(
                    "column `{name}` has {} points, expected {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        if self.names.iter().any(|n| n == name) {
            return Err(Error::GridMismatch(format!("duplicate column `{name}`")));
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    /// Column by name, or a grid-mismatch error naming the missing column.
    pub fn series(&self, name: &str) -> Result<&[f64]> {
        self.get(name).ok_or_else(|| Error::GridMismatch(format!("no column `{name}`")))
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.step * i as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Same columns with every value multiplied by `factor` and time
    /// rescaled so that the grid runs on `[t0 * time_factor, ...]`.
    pub fn scaled(&self, factor: f64, time_factor: f64) -> Self {
        Self {
            t0: self.t0 * time_factor,
            step: self.step * time_factor,
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.iter().map(|v| v * factor).collect()).collect(),
        }
    }

    pub fn same_grid(&self, other: &PathGrid) -> bool {
        self.len() == other.len()
            && (self.step - other.step).abs() <= 1e-12 * self.step.abs()
            && (self.t0 - other.t0).abs() <= 1e-12 * self.step.abs().max(1.0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![fmt_num(self.time(i))];
            row.extend(self.columns.iter().map(|c| fmt_num(c[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_must_align() {
        let p = PathGrid::new(0.0, 0.5).with("a", vec![1.0, 2.0]).unwrap();
        assert!(p.clone().with("b", vec![1.0]).is_err());
        assert!(p.clone().with("a", vec![1.0, 2.0]).is_err());
        assert_eq!(p.times(), vec![0.0, 0.5]);
    }

    #[test]
    fn csv_round_trip_text() {
        let p = PathGrid::new(0.0, 0.25).with("x", vec![0.0, 1.5]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x\n0.0,0.0\n0.25,1.5\n");
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let g = GridKernel::sample(UniformGrid::over(2.0, 8).unwrap(), |t| 3.0 * t + 1.0);
        assert!((g.integral() - 8.0).abs() < 1e-14);
    }
}
