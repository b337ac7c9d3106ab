//! Per-block embedding dimension assignments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dimension assignment `d = (d_1..d_k)` together with the base dimension
/// `d_bar` the blocks project into. Dimensions stay fractional until rounded;
/// `temperature` and `scale` record how a popularity-sized layout was derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MDLayout {
    pub dims: Vec<f64>,
    pub base_dim: usize,
    pub budget: Option<u64>,
    pub temperature: Option<f64>,
    pub scale: Option<f64>,
}

impl MDLayout {
    pub fn new(dims: Vec<f64>, base_dim: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Structure("layout has no dimensions".into()));
        }
        if base_dim == 0 {
            return Err(Error::Structure("base dimension must be >= 1".into()));
        }
        if dims.iter().any(|&d| !d.is_finite() || d < 0.0) {
            return Err(Error::Structure(
                "dimensions must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            dims,
            base_dim,
            budget: None,
            temperature: None,
            scale: None,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn is_integral(&self) -> bool {
        self.dims.iter().all(|d| d.fract() == 0.0)
    }

    /// Integral dimensions as usize; errors when any entry is fractional.
    pub fn dims_as_usize(&self) -> Result<Vec<usize>> {
        if !self.is_integral() {
            return Err(Error::Structure(
                "layout dimensions are fractional; round them first".into(),
            ));
        }
        Ok(self.dims.iter().map(|&d| d as usize).collect())
    }
}

/// Rounding rules for fractional dimension assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundMode {
    /// Round down (keeps any budget satisfied by the fractional solution).
    Floor,
    /// Round to the nearest integer.
    Nearest,
    /// Round to the nearest power of two in log space.
    Pow2,
}

impl std::str::FromStr for RoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "floor" => Ok(RoundMode::Floor),
            "nearest" => Ok(RoundMode::Nearest),
            "pow2" => Ok(RoundMode::Pow2),
            other => Err(Error::Parse(format!(
                "unknown rounding mode {other:?} (expected floor, nearest or pow2)"
            ))),
        }
    }
}

/// Round every dimension to an integer in `[1, base_dim]`.
pub fn round_dims(layout: &MDLayout, mode: RoundMode) -> MDLayout {
    let cap = layout.base_dim as f64;
    let dims = layout
        .dims
        .iter()
        .map(|&d| {
            let r = match mode {
                RoundMode::Floor => d.floor(),
                RoundMode::Nearest => d.round(),
                RoundMode::Pow2 => {
                    if d <= 0.0 {
                        1.0
                    } else {
                        2f64.powf(d.log2().round())
                    }
                }
            };
            r.clamp(1.0, cap)
        })
        .collect();
    MDLayout {
        dims,
        ..layout.clone()
    }
}

/// Parameters consumed by a layout over row blocks of the given sizes:
/// `sum_i n_i d_i` plus `d_i * d_bar` for every block that needs a projection
/// (`d_i < d_bar`). The projection cost is counted so budget checks stay
/// exact even though it is small. Requires integral dimensions.
pub fn param_count(layout: &MDLayout, row_sizes: &[usize]) -> Result<u64> {
    if layout.dims.len() != row_sizes.len() {
        return Err(Error::Shape(format!(
            "layout has {} dims but {} row blocks were given",
            layout.dims.len(),
            row_sizes.len()
        )));
    }
    let dims = layout.dims_as_usize()?;
    let mut total = 0u64;
    for (&d, &n) in dims.iter().zip(row_sizes) {
        total += (n as u64) * (d as u64);
        if d < layout.base_dim {
            total += (d as u64) * (layout.base_dim as u64);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_identity_case() {
        // d_i = d_bar everywhere: no projections
        let layout = MDLayout::new(vec![4.0, 4.0], 4).unwrap();
        assert_eq!(param_count(&layout, &[10, 20]).unwrap(), 120);
    }

    #[test]
    fn param_count_with_projection() {
        let layout = MDLayout::new(vec![2.0, 4.0], 4).unwrap();
        // 10*2 + 20*4 + 2*4 = 108 (only the d=2 block projects)
        assert_eq!(param_count(&layout, &[10, 20]).unwrap(), 108);
    }

    #[test]
    fn param_count_minimum_dimension() {
        let layout = MDLayout::new(vec![1.0], 1).unwrap();
        assert_eq!(param_count(&layout, &[7]).unwrap(), 7);
    }

    #[test]
    fn param_count_rejects_length_mismatch() {
        let layout = MDLayout::new(vec![2.0, 4.0], 4).unwrap();
        assert!(param_count(&layout, &[10]).is_err());
    }

    #[test]
    fn param_count_monotone_in_dims() {
        let sizes = [8usize, 3, 11];
        let base = MDLayout::new(vec![2.0, 3.0, 1.0], 6).unwrap();
        let more = MDLayout::new(vec![3.0, 3.0, 1.0], 6).unwrap();
        assert!(param_count(&more, &sizes).unwrap() >= param_count(&base, &sizes).unwrap());
    }

    #[test]
    fn rounding_modes() {
        let layout = MDLayout::new(vec![10.0, 2.5], 16).unwrap();
        let p2 = round_dims(&layout, RoundMode::Pow2);
        assert_eq!(p2.dims, vec![8.0, 2.0]);

        let fl = round_dims(&MDLayout::new(vec![4.0, 4.0], 8).unwrap(), RoundMode::Floor);
        assert_eq!(fl.dims, vec![4.0, 4.0]);

        // clamp to the minimum dimension of 1 in every mode
        for mode in [RoundMode::Floor, RoundMode::Nearest, RoundMode::Pow2] {
            let r = round_dims(&MDLayout::new(vec![0.3], 4).unwrap(), mode);
            assert_eq!(r.dims, vec![1.0]);
        }
    }

    #[test]
    fn serde_round_trip() {
        let mut layout = MDLayout::new(vec![8.0, 2.0], 8).unwrap();
        layout.temperature = Some(0.3);
        layout.scale = Some(12.5);
        let js = serde_json::to_string(&layout).unwrap();
        let back: MDLayout = serde_json::from_str(&js).unwrap();
        assert_eq!(layout, back);
    }
}
