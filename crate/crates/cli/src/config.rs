//! Run configuration: command-line flags over config-file values over defaults.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use floqfreeze::model::{Boundary, ChainSpec, DriveParams, StateKind, TimeGrid};
use serde::Deserialize;

use crate::CliError;

/// Drive frequencies of the reference sweep (rad/s).
pub const DEFAULT_OMEGA_GRID: [f64; 24] = [
    3.59, 4.49, 4.81, 5.18, 5.40, 5.61, 5.96, 6.31, 7.21, 8.40, 8.95, 9.50, 10.20, 10.93, 11.40,
    12.23, 12.87, 13.69, 14.50, 15.25, 16.00, 17.43, 18.85, 24.54,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Periodic,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StateArg {
    Pure,
    Deviation,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Drive amplitude h₀ (rad/s) [default: 5π]
    #[arg(long, global = true)]
    pub h0: Option<f64>,
    /// Ising coupling 𝒥 (rad/s) [default: h₀/20]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub j: Option<f64>,
    /// Single drive frequency (rad/s)
    #[arg(long, global = true, conflicts_with = "omega_grid")]
    pub omega: Option<f64>,
    /// Frequencies as `lo:step:hi` or a comma list
    #[arg(long, global = true)]
    pub omega_grid: Option<String>,
    /// Drive periods N
    #[arg(long, global = true)]
    pub cycles: Option<usize>,
    /// Steps per period M
    #[arg(long, global = true)]
    pub steps_per_cycle: Option<usize>,
    /// Initial tilt from the z axis (rad); π/2 gives mˣ(0) = 1
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub angle: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub boundary: Option<BoundaryArg>,
    #[arg(long, global = true, value_enum)]
    pub state: Option<StateArg>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat TOML file with the same keys as the long flags (underscores for dashes)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Keys accepted in a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub h0: Option<f64>,
    pub j: Option<f64>,
    pub omega: Option<f64>,
    pub omega_grid: Option<String>,
    pub cycles: Option<usize>,
    pub steps_per_cycle: Option<usize>,
    pub angle: Option<f64>,
    pub boundary: Option<String>,
    pub state: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<String>,
    pub seed: Option<u64>,
    pub range: Option<String>,
    pub input: Option<PathBuf>,
    pub t_d: Option<f64>,
    pub noise: Option<f64>,
    pub sample_interval: Option<f64>,
    pub segments: Option<usize>,
    pub segment_ms: Option<f64>,
    pub bound_hz: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub table: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Settings common to every command after merging flags, file and defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub template: DriveParams,
    /// Explicit frequencies, if any were given.
    pub omegas: Option<Vec<f64>>,
    pub cycles: usize,
    pub steps_per_cycle: usize,
    pub angle: f64,
    pub chain: ChainSpec,
    pub kind: StateKind,
    pub out_dir: PathBuf,
    pub out_dir_given: bool,
    pub format: OutputFormat,
    pub seed: u64,
}

fn parse_enum<T: ValueEnum>(key: &str, raw: &str) -> Result<T, CliError> {
    T::from_str(raw, true)
        .map_err(|_| CliError::Usage(format!("config key {key}: unrecognised value {raw:?}")))
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// `lo:step:hi` (inclusive) or `a,b,c`.
pub fn parse_omega_grid(raw: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("omega grid {raw:?}: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let values = if raw.contains(':') {
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:step:hi"));
        }
        let (lo, step, hi) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || hi < lo {
            return Err(bad("need step > 0 and hi ≥ lo"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + step * i as f64).collect()
    } else {
        raw.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(bad("empty"));
    }
    if values.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(bad("frequencies must be positive"));
    }
    Ok(values)
}

/// `lo:hi`.
pub fn parse_range(raw: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("range {raw:?}: expected lo:hi with 0 < lo < hi"));
    let (a, b) = raw.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Flag, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, file: &FileConfig) -> Result<Self, CliError> {
        let h0 = pick(args.h0, file.h0, 5.0 * PI);
        let j = pick(args.j, file.j, h0 / 20.0);
        let omegas = match (args.omega, &args.omega_grid) {
            (Some(w), _) => Some(vec![w]),
            (None, Some(g)) => Some(parse_omega_grid(g)?),
            (None, None) => match (file.omega, &file.omega_grid) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage(
                        "config sets both omega and omega_grid".into(),
                    ))
                }
                (Some(w), None) => Some(vec![w]),
                (None, Some(g)) => Some(parse_omega_grid(g)?),
                (None, None) => None,
            },
        };
        if let Some(w) = omegas
            .as_ref()
            .and_then(|v| v.iter().find(|w| !(**w > 0.0 && w.is_finite())))
        {
            return Err(CliError::Usage(format!("omega must be > 0, got {w}")));
        }
        // validates h0 and j; ω is a placeholder replaced per run
        let template = DriveParams::new(h0, 1.0, j).map_err(usage)?;
        if !j.is_finite() {
            return Err(CliError::Usage(format!("j must be finite, got {j}")));
        }
        let cycles = pick(args.cycles, file.cycles, 30);
        let steps_per_cycle = pick(args.steps_per_cycle, file.steps_per_cycle, 11);
        TimeGrid::new(steps_per_cycle, cycles, 1.0).map_err(usage)?;
        let angle = pick(args.angle, file.angle, FRAC_PI_2);
        if !angle.is_finite() {
            return Err(CliError::Usage(format!(
                "angle must be finite, got {angle}"
            )));
        }
        let boundary = match (args.boundary, &file.boundary) {
            (Some(b), _) => b,
            (None, Some(raw)) => parse_enum("boundary", raw)?,
            (None, None) => BoundaryArg::Periodic,
        };
        let kind = match (args.state, &file.state) {
            (Some(s), _) => s,
            (None, Some(raw)) => parse_enum("state", raw)?,
            (None, None) => StateArg::Deviation,
        };
        let format = match (args.format, &file.format) {
            (Some(f), _) => f,
            (None, Some(raw)) => parse_enum("format", raw)?,
            (None, None) => OutputFormat::Csv,
        };
        let boundary = match boundary {
            BoundaryArg::Periodic => Boundary::Periodic,
            BoundaryArg::Open => Boundary::Open,
        };
        let out_dir_given = args.out_dir.is_some() || file.out_dir.is_some();
        Ok(Self {
            template,
            omegas,
            cycles,
            steps_per_cycle,
            angle,
            chain: ChainSpec::with_boundary(3, boundary).map_err(usage)?,
            kind: match kind {
                StateArg::Pure => StateKind::Pure,
                StateArg::Deviation => StateKind::Deviation,
            },
            out_dir: pick(
                args.out_dir.clone(),
                file.out_dir.clone(),
                PathBuf::from("."),
            ),
            out_dir_given,
            format,
            seed: pick(args.seed, file.seed, 0),
        })
    }

    /// The one frequency a single-ω command runs at.
    pub fn single_omega(&self, default: f64) -> Result<f64, CliError> {
        match self.omegas.as_deref() {
            None => Ok(default),
            Some([w]) => Ok(*w),
            Some(_) => Err(CliError::Usage(
                "this command takes a single --omega".into(),
            )),
        }
    }

    pub fn params(&self, omega: f64) -> Result<DriveParams, CliError> {
        self.template.with_omega(omega).map_err(usage)
    }

    pub fn grid(&self, params: &DriveParams) -> Result<TimeGrid, CliError> {
        TimeGrid::for_drive(params, self.steps_per_cycle, self.cycles).map_err(usage)
    }

    pub fn svg(&self) -> bool {
        self.format == OutputFormat::CsvSvg
    }

    /// Create the output directory; failure is a configuration error.
    pub fn prepare_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            CliError::Usage(format!(
                "cannot create output directory {}: {e}",
                self.out_dir.display()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_omega_grid("3:0.5:4").unwrap(), vec![3.0, 3.5, 4.0]);
        assert_eq!(parse_omega_grid("5.61, 8.4").unwrap(), vec![5.61, 8.4]);
        assert_eq!(parse_omega_grid("3:0.05:14").unwrap().len(), 221);
        assert!(parse_omega_grid("3:0:4").is_err());
        assert!(parse_omega_grid("1,-2").is_err());
        assert!(parse_omega_grid("a").is_err());
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = FileConfig {
            cycles: Some(40),
            h0: Some(10.0),
            ..Default::default()
        };
        let args = CommonArgs {
            cycles: Some(50),
            ..Default::default()
        };
        let rc = RunConfig::resolve(&args, &file).unwrap();
        assert_eq!(rc.cycles, 50);
        assert_eq!(rc.template.h0, 10.0);
        assert_eq!(rc.template.j_coupling, 0.5);
        assert_eq!(rc.steps_per_cycle, 11);
    }

    #[test]
    fn file_enums_and_errors() {
        let file: FileConfig = toml::from_str("boundary = \"open\"\nformat = \"csv+svg\"").unwrap();
        let rc = RunConfig::resolve(&CommonArgs::default(), &file).unwrap();
        assert_eq!(rc.chain.boundary, Boundary::Open);
        assert!(rc.svg());
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
        let bad = FileConfig {
            state: Some("thermal".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&CommonArgs::default(), &bad).is_err());
    }

    #[test]
    fn range_parse() {
        assert_eq!(parse_range("3:14").unwrap(), (3.0, 14.0));
        assert!(parse_range("14:3").is_err());
    }
}
