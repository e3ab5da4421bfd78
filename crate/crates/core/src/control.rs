//! Genome layout, the linear pressure controller, the tanh springs controller
//! and the mapping from spring commands to rest lengths.
//!
//! Genome layout: `[W_p (|o|), b_p, W_s ((n+1) x |o|, row-major), b_s (n+1)]`,
//! with the pressure block absent when pressure control is disabled.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::morphology::{MAX_LENGTH_FACTOR, MIN_LENGTH_FACTOR};
use crate::sensing::observation_len;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ControlError {
    #[error("genome length mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("genome file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Number of spring commands emitted for `n_mass` masses.
pub const fn spring_outputs(n_mass: usize) -> usize {
    n_mass + 1
}

pub const fn genome_size(n_mass: usize, pressure_enabled: bool) -> usize {
    let inputs = observation_len(n_mass) + 1;
    spring_outputs(n_mass) * inputs + if pressure_enabled { inputs } else { 0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub n_mass: usize,
    pub pressure_enabled: bool,
    pub theta: Vec<f64>,
}

impl Genome {
    pub fn new(
        n_mass: usize,
        pressure_enabled: bool,
        theta: Vec<f64>,
    ) -> Result<Self, ControlError> {
        let expected = genome_size(n_mass, pressure_enabled);
        if theta.len() != expected {
            return Err(ControlError::SizeMismatch {
                expected,
                found: theta.len(),
            });
        }
        Ok(Self {
            n_mass,
            pressure_enabled,
            theta,
        })
    }

    pub fn zeros(n_mass: usize, pressure_enabled: bool) -> Self {
        Self {
            n_mass,
            pressure_enabled,
            theta: vec![0.0; genome_size(n_mass, pressure_enabled)],
        }
    }

    /// Plain-text form: three header lines then one value per line, each
    /// printed in shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(24 * (self.theta.len() + 3));
        let _ = writeln!(out, "n_mass={}", self.n_mass);
        let _ = writeln!(out, "pressure_control={}", self.pressure_enabled);
        let _ = writeln!(out, "length={}", self.theta.len());
        for v in &self.theta {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ControlError> {
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<String, ControlError> {
            let (i, line) = lines.next().ok_or(ControlError::Parse {
                line: 0,
                message: format!("missing header `{key}`"),
            })?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .map(|v| v.trim().to_owned())
                .ok_or_else(|| ControlError::Parse {
                    line: i + 1,
                    message: format!("expected `{key}=...`"),
                })
        };
        let bad = |line: usize, what: &str| ControlError::Parse {
            line,
            message: format!("invalid {what}"),
        };
        let n_mass: usize = header("n_mass")?.parse().map_err(|_| bad(1, "n_mass"))?;
        let pressure_enabled: bool = header("pressure_control")?
            .parse()
            .map_err(|_| bad(2, "pressure_control"))?;
        let length: usize = header("length")?.parse().map_err(|_| bad(3, "length"))?;

        let mut theta = Vec::with_capacity(length);
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            theta.push(line.parse::<f64>().map_err(|_| bad(i + 1, "number"))?);
        }
        if theta.len() != length {
            return Err(ControlError::SizeMismatch {
                expected: length,
                found: theta.len(),
            });
        }
        Self::new(n_mass, pressure_enabled, theta)
    }
}

/// Decoded controller weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerPair {
    pub n_mass: usize,
    pub inputs: usize,
    /// `(W_p, b_p)` when pressure control is enabled.
    pub pressure: Option<(Vec<f64>, f64)>,
    /// Row-major `(n+1) x |o|`.
    pub w_s: Vec<f64>,
    pub b_s: Vec<f64>,
}

impl ControllerPair {
    pub fn decode(genome: &Genome) -> Result<Self, ControlError> {
        let n = genome.n_mass;
        let inputs = observation_len(n);
        let expected = genome_size(n, genome.pressure_enabled);
        if genome.theta.len() != expected {
            return Err(ControlError::SizeMismatch {
                expected,
                found: genome.theta.len(),
            });
        }
        let mut rest = genome.theta.as_slice();
        let pressure = if genome.pressure_enabled {
            let (w, tail) = rest.split_at(inputs);
            let (b, tail) = tail.split_at(1);
            rest = tail;
            Some((w.to_vec(), b[0]))
        } else {
            None
        };
        let (w_s, b_s) = rest.split_at(spring_outputs(n) * inputs);
        Ok(Self {
            n_mass: n,
            inputs,
            pressure,
            w_s: w_s.to_vec(),
            b_s: b_s.to_vec(),
        })
    }

    pub fn encode(&self) -> Genome {
        let mut theta = Vec::with_capacity(genome_size(self.n_mass, self.pressure.is_some()));
        if let Some((w, b)) = &self.pressure {
            theta.extend_from_slice(w);
            theta.push(*b);
        }
        theta.extend_from_slice(&self.w_s);
        theta.extend_from_slice(&self.b_s);
        Genome {
            n_mass: self.n_mass,
            pressure_enabled: self.pressure.is_some(),
            theta,
        }
    }

    /// `W_p o + b_p`, or `None` without pressure control.
    pub fn pressure_control(&self, o: &[f64]) -> Option<f64> {
        self.pressure.as_ref().map(|(w, b)| dot(w, o) + b)
    }

    /// `tanh(W_s o + b_s)` into `out` (length `n + 1`).
    pub fn springs_control_into(&self, o: &[f64], out: &mut [f64]) {
        for ((row, b), s) in self.w_s.chunks_exact(self.inputs).zip(&self.b_s).zip(out) {
            *s = (dot(row, o) + b).tanh();
        }
    }

    pub fn springs_control(&self, o: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; spring_outputs(self.n_mass)];
        self.springs_control_into(o, &mut out);
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rest length commanded by `s` in `[-1, 1]` for a joint of base length `l`:
/// `s = 1` gives the minimum length, `s = -1` the maximum.
pub fn actuate_spring(l: f64, s: f64) -> f64 {
    if s > 0.0 {
        l - s * (l - MIN_LENGTH_FACTOR * l)
    } else if s < 0.0 {
        l - s * (MAX_LENGTH_FACTOR * l - l)
    } else {
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(genome_size(10, true), 408);
        assert_eq!(genome_size(15, true), 833);
        assert_eq!(genome_size(20, true), 1408);
        assert_eq!(genome_size(10, false), 374);
        assert_eq!(genome_size(15, false), 784);
        assert_eq!(genome_size(20, false), 1344);
        assert_eq!(genome_size(10, true), 11 * 34 + 34);
    }

    #[test]
    fn pressure_controller_affine() {
        let mut g = Genome::zeros(10, true);
        let ctrl = ControllerPair::decode(&g).unwrap();
        assert_eq!(ctrl.pressure_control(&[0.3; 33]), Some(0.0));

        g.theta[33] = 3.5;
        let ctrl = ControllerPair::decode(&g).unwrap();
        assert_eq!(ctrl.pressure_control(&[0.9; 33]), Some(3.5));

        for v in &mut g.theta[..33] {
            *v = 1.0;
        }
        g.theta[33] = 1.0;
        let ctrl = ControllerPair::decode(&g).unwrap();
        assert_eq!(ctrl.pressure_control(&[0.5; 33]), Some(17.5));
    }

    #[test]
    fn springs_controller() {
        let mut g = Genome::zeros(10, false);
        let ctrl = ControllerPair::decode(&g).unwrap();
        assert!(ctrl.pressure_control(&[0.5; 33]).is_none());
        assert_eq!(ctrl.springs_control(&[0.5; 33]), vec![0.0; 11]);

        // Row 0 pre-activation 12, row 1 pre-activation 0.5 via biases.
        let bias_start = 11 * 33;
        g.theta[bias_start] = 12.0;
        g.theta[bias_start + 1] = 0.5;
        let s = ControllerPair::decode(&g)
            .unwrap()
            .springs_control(&[0.1; 33]);
        assert!((s[0] - 1.0).abs() < 1e-8);
        assert!((s[1] - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn spring_row_layout_is_row_major() {
        let mut g = Genome::zeros(3, true);
        let inputs = observation_len(3);
        // W_s[2][4] sits after the pressure block.
        g.theta[inputs + 1 + 2 * inputs + 4] = 1.0;
        let mut o = vec![0.0; inputs];
        o[4] = 0.5;
        let s = ControllerPair::decode(&g).unwrap().springs_control(&o);
        assert_eq!(s[2], 0.5f64.tanh());
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn actuation_endpoints() {
        assert_eq!(actuate_spring(2.0, 1.0), 1.5);
        assert_eq!(actuate_spring(2.0, -1.0), 2.5);
        assert_eq!(actuate_spring(2.0, 0.0), 2.0);
        assert_eq!(actuate_spring(1.0, 0.5), 0.875);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let g = Genome {
            n_mass: 10,
            pressure_enabled: true,
            theta: vec![0.0; 407],
        };
        assert_eq!(
            ControllerPair::decode(&g),
            Err(ControlError::SizeMismatch {
                expected: 408,
                found: 407
            })
        );
    }

    #[test]
    fn text_round_trip() {
        let theta: Vec<f64> = (0..374)
            .map(|i| (i as f64 * 0.1).sin() * 1e3 / 7.0)
            .collect();
        let g = Genome::new(10, false, theta).unwrap();
        let text = g.to_text();
        assert!(text.starts_with("n_mass=10\npressure_control=false\nlength=374\n"));
        assert_eq!(Genome::from_text(&text).unwrap(), g);
    }

    #[test]
    fn text_errors() {
        assert!(matches!(
            Genome::from_text("n_mass=3\npressure_control=true\nlength=2\n1.0\n2.0\n"),
            Err(ControlError::SizeMismatch {
                expected: 65,
                found: 2
            })
        ));
        assert!(matches!(
            Genome::from_text("n_mass=3\npressure_control=true\nlength=3\n1.0\n2.0\n"),
            Err(ControlError::SizeMismatch {
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(
            Genome::from_text("mass=3\n"),
            Err(ControlError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Genome::from_text("n_mass=3\npressure_control=true\nlength=1\nabc\n"),
            Err(ControlError::Parse { line: 4, .. })
        ));
    }
}
