//! Polynomial right-hand sides read from JSON.
//!
//! ```json
//! { "name": "ramp", "terms": [ { "coeff": 2.0, "x": 1, "y": 0 } ] }
//! ```
//!
//! gives `f(x, y) = 2x`. No exact solution is attached, so error columns stay
//! empty.

use std::sync::Arc;

use afem_core::Problem;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Source {
    #[serde(default = "default_name")]
    name: String,
    terms: Vec<Term>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Term {
    coeff: f64,
    #[serde(default)]
    x: i32,
    #[serde(default)]
    y: i32,
}

fn default_name() -> String {
    "custom".into()
}

pub fn parse(text: &str) -> Result<Problem, String> {
    let src: Source = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let Some(t) = src.terms.iter().find(|t| !t.coeff.is_finite() || t.x < 0 || t.y < 0) {
        return Err(format!("bad term {t:?}: need a finite coefficient and non-negative powers"));
    }
    let terms: Vec<(f64, i32, i32)> = src.terms.iter().map(|t| (t.coeff, t.x, t.y)).collect();
    let f = Arc::new(move |p: [f64; 2]| terms.iter().map(|&(c, a, b)| c * p[0].powi(a) * p[1].powi(b)).sum());
    Problem::new(&src.name, f, None).map_err(|e| e.to_string())
}
