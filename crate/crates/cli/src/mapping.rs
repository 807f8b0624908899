//! The `--map` column specification.
//!
//! `response=COL,linear=COL[,COL...],manifold=cylinder:angle_deg=COL,height=COL`
//!
//! The angle may be given as `angle_deg` or `angle_rad`. `height` is min–max
//! normalized into `[0.01, 0.99]`; `height_raw` is taken as is and must
//! already lie in `[0, 1]`. A circle uses `manifold=circle:angle_deg=COL`.

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleUnit {
    Degrees,
    Radians,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifoldColumns {
    Circle { angle: String, unit: AngleUnit },
    Cylinder { angle: String, unit: AngleUnit, height: String, normalize_height: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub response: String,
    pub linear: Vec<String>,
    pub manifold: ManifoldColumns,
}

impl ColumnMapping {
    /// Every referenced column, in a stable order.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = vec![self.response.as_str()];
        out.extend(self.linear.iter().map(String::as_str));
        match &self.manifold {
            ManifoldColumns::Circle { angle, .. } => out.push(angle),
            ManifoldColumns::Cylinder { angle, height, .. } => {
                out.push(angle);
                out.push(height);
            }
        }
        out
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl std::str::FromStr for ColumnMapping {
    type Err = CliError;

    fn from_str(spec: &str) -> CliResult<Self> {
        let mut response = None;
        let mut linear: Vec<String> = Vec::new();
        let mut kind = None;
        let mut angle = None;
        let mut height = None;
        let mut last_key = String::new();

        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let Some((key, value)) = token.split_once('=') else {
                if last_key == "linear" {
                    linear.push(token.to_string());
                    continue;
                }
                return Err(config(format!("mapping entry {token:?} is not key=value")));
            };
            let value = value.trim();
            match key.trim() {
                "response" => response = Some(value.to_string()),
                "linear" => linear.push(value.to_string()),
                "manifold" => {
                    let (k, rest) = value.split_once(':').unwrap_or((value, ""));
                    kind = Some(k.to_string());
                    if !rest.is_empty() {
                        let (ak, av) = rest
                            .split_once('=')
                            .ok_or_else(|| config(format!("manifold entry {rest:?} is not key=value")))?;
                        angle = Some(parse_angle(ak, av)?);
                    }
                }
                k @ ("angle_deg" | "angle_rad") => angle = Some(parse_angle(k, value)?),
                "height" => height = Some((value.to_string(), true)),
                "height_raw" => height = Some((value.to_string(), false)),
                other => return Err(config(format!("unknown mapping key {other:?}"))),
            }
            last_key = key.trim().to_string();
        }

        let response = response.ok_or_else(|| config("mapping needs response=COL"))?;
        if linear.is_empty() {
            return Err(config("mapping needs linear=COL[,COL...]"));
        }
        let (angle, unit) =
            angle.ok_or_else(|| config("manifold mapping needs angle_deg=COL or angle_rad=COL"))?;
        let manifold = match kind.as_deref() {
            Some("cylinder") => {
                let (height, normalize_height) =
                    height.ok_or_else(|| config("cylinder mapping needs height=COL"))?;
                ManifoldColumns::Cylinder { angle, unit, height, normalize_height }
            }
            Some("circle") => {
                if height.is_some() {
                    return Err(config("circle mapping takes no height column"));
                }
                ManifoldColumns::Circle { angle, unit }
            }
            Some(other) => return Err(config(format!("unsupported manifold kind {other:?}"))),
            None => return Err(config("mapping needs manifold=cylinder:... or manifold=circle:...")),
        };
        Ok(ColumnMapping { response, linear, manifold })
    }
}

fn parse_angle(key: &str, value: &str) -> CliResult<(String, AngleUnit)> {
    let unit = match key.trim() {
        "angle_deg" => AngleUnit::Degrees,
        "angle_rad" => AngleUnit::Radians,
        other => return Err(config(format!("unknown angle key {other:?}"))),
    };
    Ok((value.trim().to_string(), unit))
}
