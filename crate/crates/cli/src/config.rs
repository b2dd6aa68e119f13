//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chemolab::grid::make_domain;
use chemolab::oracles::{Barenblatt, BarenblattParams};
use chemolab::solver::SolverConfig;
use chemolab::{Domain, ModelParams, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::error::{io_at, CliError, CliResult};

/// Parsed `key=value` pairs with typed, consuming accessors.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    context: String,
}

impl KeyValues {
    pub fn parse_text(text: &str, context: &str) -> CliResult<Self> {
        let mut kv = Self {
            entries: BTreeMap::new(),
            context: context.to_string(),
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            kv.insert_pair(line, &format!("{context}:{}", lineno + 1))?;
        }
        Ok(kv)
    }

    /// Whitespace-separated `key=value` tokens.
    pub fn parse_tokens<'a>(tokens: impl Iterator<Item = &'a str>, context: &str) -> CliResult<Self> {
        let mut kv = Self {
            entries: BTreeMap::new(),
            context: context.to_string(),
        };
        for tok in tokens {
            kv.insert_pair(tok, context)?;
        }
        Ok(kv)
    }

    fn insert_pair(&mut self, pair: &str, at: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{at}: expected key=value, got '{pair}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if self.entries.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::Config(format!("{at}: key '{k}' given twice")));
        }
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{}: cannot parse {key} = '{v}'", self.context))),
        }
    }

    pub fn take_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> CliResult<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<T> {
        self.take(key)?
            .ok_or_else(|| CliError::Config(format!("{}: missing required key {key}", self.context)))
    }

    /// Comma-separated coordinates, padded with zeros to `dim`.
    pub fn take_point(&mut self, key: &str, dim: usize) -> CliResult<Vec<f64>> {
        let mut point = vec![0.0; dim];
        if let Some(v) = self.entries.remove(key) {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() > dim {
                return Err(CliError::Config(format!(
                    "{}: {key} has {} coordinates, dimension is {dim}",
                    self.context,
                    parts.len()
                )));
            }
            for (slot, p) in point.iter_mut().zip(parts) {
                *slot = p
                    .parse()
                    .map_err(|_| CliError::Config(format!("{}: cannot parse {key} = '{v}'", self.context)))?;
            }
        }
        Ok(point)
    }

    /// Error on any key not consumed.
    pub fn finish(self) -> CliResult<()> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Config(format!("{}: unknown key {k}", self.context))),
        }
    }
}

/// Initial condition for `u` or `v`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Gaussian {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
    },
    Barenblatt {
        mass: f64,
        t_offset: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub extent: f64,
    pub cells: usize,
    pub solver: SolverConfig,
    pub u0: InitialCondition,
    pub v0: InitialCondition,
    /// Relative multiplicative noise on `u0`, drawn from `seed`.
    pub u0_noise: f64,
    pub seed: u64,
    pub out: PathBuf,
}

fn parse_ic(kv: &mut KeyValues, prefix: &str, dim: usize, m: f64, default_amp: f64) -> CliResult<InitialCondition> {
    let kind = kv.take_str(prefix).unwrap_or_else(|| "gaussian".into());
    let key = |s: &str| format!("{prefix}_{s}");
    match kind.as_str() {
        "gaussian" => {
            let amplitude = kv.take_or(&key("amplitude"), default_amp)?;
            let width = kv.take_or(&key("width"), 0.25)?;
            let center = kv.take_point(&key("center"), dim)?;
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return Err(CliError::Config(format!(
                    "{prefix}_amplitude >= 0 violated ({amplitude})"
                )));
            }
            if !(width > 0.0) {
                return Err(CliError::Config(format!("{prefix}_width > 0 violated ({width})")));
            }
            Ok(InitialCondition::Gaussian {
                amplitude,
                width,
                center,
            })
        }
        "barenblatt" => {
            let mass = kv.take_or(&key("mass"), 1.0)?;
            let t_offset = kv.take_or(&key("t_offset"), 0.1)?;
            Barenblatt::new(BarenblattParams {
                m,
                dim,
                mass,
                t0: t_offset,
            })
            .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(InitialCondition::Barenblatt { mass, t_offset })
        }
        "file" => {
            let path: String = kv.require(&key("path"))?;
            Ok(InitialCondition::File { path: path.into() })
        }
        other => Err(CliError::Config(format!(
            "{prefix} must be gaussian, barenblatt or file (got '{other}')"
        ))),
    }
}

impl RunConfig {
    pub fn parse(text: &str, context: &str) -> CliResult<Self> {
        let mut kv = KeyValues::parse_text(text, context)?;
        let dim = kv.take_or("dim", 1usize)?;
        let extent = kv.take_or("extent", 1.0)?;
        let cells = kv.take_or("cells", 128usize)?;
        let params = ModelParams {
            m: kv.require("m")?,
            q_exp: kv.take_or("q", 1.2)?,
            chi: kv.take_or("chi", 0.0)?,
            decay_rate: kv.take_or("alpha", 1.0)?,
            dim,
        };
        params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let mut solver = SolverConfig::new(
            params,
            kv.take_or("t_end", 0.1)?,
            kv.take_or("snapshot_interval", 0.01)?,
        );
        solver.u_floor = kv.take("u_floor")?;
        solver.cfl_safety = kv.take_or("cfl_safety", solver.cfl_safety)?;
        solver.v_solver_tol = kv.take_or("v_solver_tol", solver.v_solver_tol)?;
        solver.min_dt = kv.take_or("min_dt", solver.min_dt)?;
        solver.max_cg_iterations = kv.take_or("max_cg_iterations", solver.max_cg_iterations)?;
        solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        make_domain(dim, extent, cells).map_err(|e| CliError::Config(e.to_string()))?;
        let u0 = parse_ic(&mut kv, "u0", dim, params.m, 1.0)?;
        let v0 = parse_ic(&mut kv, "v0", dim, params.m, 0.0)?;
        let u0_noise = kv.take_or("u0_noise", 0.0)?;
        if !(0.0..1.0).contains(&u0_noise) {
            return Err(CliError::Config(format!("0 <= u0_noise < 1 violated ({u0_noise})")));
        }
        let seed = kv.take_or("seed", 0u64)?;
        let out = kv.take_str("out").unwrap_or_else(|| "run".into()).into();
        kv.finish()?;
        Ok(Self {
            dim,
            extent,
            cells,
            solver,
            u0,
            v0,
            u0_noise,
            seed,
            out,
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn domain(&self) -> Domain {
        make_domain(self.dim, self.extent, self.cells).expect("validated at parse time")
    }

    pub fn params(&self) -> ModelParams {
        self.solver.params
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let p = self.solver.params;
        let s = &self.solver;
        let mut lines = vec![
            format!("dim={}", self.dim),
            format!("extent={:?}", self.extent),
            format!("cells={}", self.cells),
            format!("m={:?}", p.m),
            format!("q={:?}", p.q_exp),
            format!("chi={:?}", p.chi),
            format!("alpha={:?}", p.decay_rate),
            format!("t_end={:?}", s.t_end),
            format!("snapshot_interval={:?}", s.snapshot_interval),
            format!("cfl_safety={:?}", s.cfl_safety),
            format!("v_solver_tol={:?}", s.v_solver_tol),
            format!("min_dt={:?}", s.min_dt),
            format!("max_cg_iterations={}", s.max_cg_iterations),
        ];
        if let Some(f) = s.u_floor {
            lines.push(format!("u_floor={f:?}"));
        }
        for (prefix, ic) in [("u0", &self.u0), ("v0", &self.v0)] {
            match ic {
                InitialCondition::Gaussian {
                    amplitude,
                    width,
                    center,
                } => {
                    lines.push(format!("{prefix}=gaussian"));
                    lines.push(format!("{prefix}_amplitude={amplitude:?}"));
                    lines.push(format!("{prefix}_width={width:?}"));
                    let c: Vec<String> = center.iter().map(|x| format!("{x:?}")).collect();
                    lines.push(format!("{prefix}_center={}", c.join(",")));
                }
                InitialCondition::Barenblatt { mass, t_offset } => {
                    lines.push(format!("{prefix}=barenblatt"));
                    lines.push(format!("{prefix}_mass={mass:?}"));
                    lines.push(format!("{prefix}_t_offset={t_offset:?}"));
                }
                InitialCondition::File { path } => {
                    lines.push(format!("{prefix}=file"));
                    lines.push(format!("{prefix}_path={}", path.display()));
                }
            }
        }
        lines.push(format!("u0_noise={:?}", self.u0_noise));
        lines.push(format!("seed={}", self.seed));
        lines.push(format!("out={}", self.out.display()));
        lines.join("\n") + "\n"
    }

    fn build(&self, ic: &InitialCondition, base: &Path) -> CliResult<ScalarField> {
        let domain = self.domain();
        match ic {
            InitialCondition::Gaussian {
                amplitude,
                width,
                center,
            } => Ok(ScalarField::from_fn(domain, 0.0, |x| {
                let r = domain.distance(x, center);
                amplitude * (-(r / width).powi(2)).exp()
            })),
            InitialCondition::Barenblatt { mass, t_offset } => {
                let b = Barenblatt::new(BarenblattParams {
                    m: self.solver.params.m,
                    dim: self.dim,
                    mass: *mass,
                    t0: *t_offset,
                })?;
                Ok(b.field(domain, 0.0))
            }
            InitialCondition::File { path } => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let field = checkpoint::read(&path)?.field;
                if field.domain != domain {
                    return Err(CliError::Config(format!(
                        "{}: checkpoint grid does not match the configured domain",
                        path.display()
                    )));
                }
                Ok(ScalarField { time: 0.0, ..field })
            }
        }
    }

    /// `(u0, v0)`; relative file paths resolve against `base`.
    pub fn initial_fields(&self, base: &Path) -> CliResult<(ScalarField, ScalarField)> {
        let mut u0 = self.build(&self.u0, base)?;
        let v0 = self.build(&self.v0, base)?;
        if self.u0_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for u in &mut u0.values {
                *u *= 1.0 + self.u0_noise * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok((u0, v0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_text() {
        let text = "m=0.6\nchi=0.5\nu0_center=0.1\nv0=gaussian\nv0_amplitude=0.2\nseed=7\n";
        let c = RunConfig::parse(text, "t").unwrap();
        let again = RunConfig::parse(&c.to_text(), "t").unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        assert!(RunConfig::parse("m=0.5\nfoo=1\n", "t")
            .unwrap_err()
            .to_string()
            .contains("unknown key foo"));
        assert!(RunConfig::parse("m=1.5\n", "t")
            .unwrap_err()
            .to_string()
            .contains("m < 1"));
        assert!(RunConfig::parse("m=0.5\nm=0.6\n", "t").is_err());
        assert!(RunConfig::parse("m=0.5\nalpha=0\n", "t")
            .unwrap_err()
            .to_string()
            .contains("decay_rate > 0"));
    }
}
