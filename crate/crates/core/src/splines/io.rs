//! Plain-text serialization of spline functions.
//!
//! ```text
//! degree 2
//! truncated true
//! cells 7
//! 1 0 1
//! ...
//! coefficients 25
//! 0.125
//! ...
//! ```
//! Coefficients follow the deterministic basis order of the rebuilt space.

use std::fmt::Write as _;
use std::sync::Arc;

use super::function::SplineFunction;
use super::space::build_space;
use crate::error::{AfemError, Result};
use crate::mesh::Partition;

impl SplineFunction {
    pub fn to_text(&self) -> String {
        let space = self.space();
        let mut s = String::new();
        let _ = writeln!(s, "degree {}", space.degree());
        let _ = writeln!(s, "truncated {}", space.truncated());
        let _ = writeln!(s, "cells {}", space.partition().len());
        s.push_str(&space.partition().dump());
        let _ = writeln!(s, "coefficients {}", self.coefficients().len());
        for c in self.coefficients() {
            let _ = writeln!(s, "{c:?}");
        }
        s
    }

    /// Parses [`SplineFunction::to_text`] output, rebuilding the space.
    pub fn from_text(text: &str) -> Result<SplineFunction> {
        let mut lines = text.lines().enumerate();
        let mut header = |name: &str| -> Result<(usize, String)> {
            let (k, line) = lines.next().ok_or_else(|| AfemError::Parse {
                line: 0,
                message: format!("missing `{name}` line"),
            })?;
            match line.trim().split_once(' ') {
                Some((key, value)) if key == name => Ok((k + 1, value.trim().to_string())),
                _ => Err(AfemError::Parse {
                    line: k + 1,
                    message: format!("expected `{name} ...`, found `{line}`"),
                }),
            }
        };
        let bad = |line: usize, what: &str| AfemError::Parse {
            line,
            message: format!("invalid {what}"),
        };
        let (l, v) = header("degree")?;
        let degree: usize = v.parse().map_err(|_| bad(l, "degree"))?;
        let (l, v) = header("truncated")?;
        let truncated: bool = v.parse().map_err(|_| bad(l, "truncated flag"))?;
        let (l, v) = header("cells")?;
        let n_cells: usize = v.parse().map_err(|_| bad(l, "cell count"))?;
        let mut dump = String::new();
        for _ in 0..n_cells {
            let (_, line) = lines.next().ok_or_else(|| bad(l, "cell list"))?;
            dump.push_str(line);
            dump.push('\n');
        }
        let partition = Partition::parse_dump(&dump)?;
        let (k, line) = lines.next().ok_or_else(|| bad(0, "coefficient header"))?;
        let n: usize = line
            .trim()
            .strip_prefix("coefficients ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(k + 1, "coefficient header"))?;
        let mut coeffs = Vec::with_capacity(n);
        for (k, line) in lines.take(n) {
            coeffs.push(line.trim().parse::<f64>().map_err(|_| bad(k + 1, "coefficient"))?);
        }
        let space = Arc::new(build_space(&partition, degree, truncated)?);
        SplineFunction::new(space, coeffs)
    }
}
