use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use mx_core::config::{ElementType, MachineConfig, ProblemShape, SubTileConfig, TileConfig};
use mx_core::config_file::RunConfig;
use mx_core::cost_model::{BufResidency, EnergyCoefficients};
use mx_core::sim::CostOptions;

use crate::error::CliError;

/// `MxNxK`.
pub fn parse_problem(s: &str) -> Result<ProblemShape, String> {
    let dims = parse_list(s, 'x')?;
    match dims[..] {
        [m, n, k] => Ok(ProblemShape::new(m, n, k)),
        _ => Err(format!("expected MxNxK, got `{s}`")),
    }
}

/// `m,n,k`.
pub fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let dims = parse_list(s, ',')?;
    dims.try_into().map_err(|_| format!("expected three comma-separated sizes, got `{s}`"))
}

pub fn parse_list(s: &str, sep: char) -> Result<Vec<usize>, String> {
    s.split(sep).map(|p| p.trim().parse::<usize>().map_err(|_| format!("`{p}` is not a size"))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// Problem, tiling and machine, from a config file and/or flags; flags win.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML run description (`.cfg`)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Problem size, e.g. 64x64x64
    #[arg(long, value_parser = parse_problem)]
    pub problem: Option<ProblemShape>,
    /// VRF tile m,n,k
    #[arg(long, value_parser = parse_triple)]
    pub tile: Option<[usize; 3]>,
    /// Matrix-instruction sub-tile m',n',k' (selects the MX kernel)
    #[arg(long, value_parser = parse_triple)]
    pub subtile: Option<[usize; 3]>,
    /// Broadcast factor B with n = B·n' (default: tile n / n')
    #[arg(long)]
    pub bcast: Option<usize>,
    /// Element width in bytes: 8 = f64, 4 = f32
    #[arg(long, value_parser = ["4", "8"])]
    pub ew: Option<String>,
    /// Element type; overrides --ew
    #[arg(long)]
    pub element: Option<String>,
    /// Allow any power-of-two sub-tile size
    #[arg(long)]
    pub no_strict: bool,
    #[arg(long)]
    pub cores: Option<usize>,
    #[arg(long)]
    pub fpus: Option<usize>,
    /// Keep an accumulator sub-tile in the buffer across matrix instructions
    #[arg(long)]
    pub buffer_resident: bool,
    /// Fraction of memory cycles hidden behind compute
    #[arg(long)]
    pub overlap: Option<f64>,
}

impl ConfigArgs {
    /// Machine built from defaults and the machine flags only.
    pub fn machine_overrides(&self, mut m: MachineConfig) -> Result<MachineConfig, CliError> {
        if let Some(ew) = &self.ew {
            m.element = if ew == "4" { ElementType::F32 } else { ElementType::F64 };
        }
        if let Some(e) = &self.element {
            m.element = ElementType::from_str(e).map_err(CliError::Validation)?;
        }
        if self.no_strict {
            m.strict_subtile_sizes = false;
        }
        if let Some(c) = self.cores {
            m.cores = c;
        }
        if let Some(f) = self.fpus {
            m.fpus = f;
        }
        if self.buffer_resident {
            m.buffer_resident_accumulation = true;
        }
        if let Some(o) = self.overlap {
            m.overlap = o;
        }
        Ok(m)
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut rc = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| CliError::Validation(e.to_string()))?,
            None => {
                let problem =
                    self.problem.ok_or_else(|| CliError::Validation("--problem or --config is required".into()))?;
                let tile = self.tile.ok_or_else(|| CliError::Validation("--tile is required".into()))?;
                RunConfig {
                    name: None,
                    problem,
                    tile: TileConfig::new(tile[0], tile[1], tile[2]),
                    subtile: None,
                    machine: MachineConfig::default(),
                    expected: None,
                }
            }
        };
        if let Some(p) = self.problem {
            rc.problem = p;
        }
        if let Some(t) = self.tile {
            rc.tile = TileConfig::new(t[0], t[1], t[2]);
        }
        if let Some(s) = self.subtile {
            let bcast = match self.bcast {
                Some(b) => b,
                None if s[1] > 0 && rc.tile.n % s[1] == 0 => rc.tile.n / s[1],
                None => return Err(CliError::Validation("--bcast is required when n' does not divide n".into())),
            };
            rc.subtile = Some(SubTileConfig::new(s[0], s[1], s[2], bcast));
        } else if let (Some(b), Some(sub)) = (self.bcast, rc.subtile.as_mut()) {
            sub.bcast = b;
        }
        rc.machine = self.machine_overrides(rc.machine)?;
        Ok(rc)
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => Err(CliError::Validation(format!("{key}: `{v}` is not a boolean"))),
    }
}

fn pairs(s: &str) -> impl Iterator<Item = Result<(&str, &str), CliError>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| {
        p.split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| CliError::Validation(format!("expected key=value, got `{p}`")))
    })
}

/// `interk_vrf=0,c_zero=1,interk_buf=fullk`; `c_zero` applies to both levels.
pub fn parse_cost_options(s: &str) -> Result<CostOptions, CliError> {
    let mut o = CostOptions::default();
    for pair in pairs(s) {
        let (k, v) = pair?;
        match k {
            "interk_vrf" => o.mem_vrf.interk_vrf = parse_bool(k, v)?,
            "c_zero" => {
                let z = parse_bool(k, v)?;
                o.mem_vrf.c_is_zero = z;
                o.vrf_buf.c_is_zero = z;
            }
            "interk_buf" => {
                o.vrf_buf.interk_buf = match v {
                    "none" => BufResidency::None,
                    "tilek" => BufResidency::TileK,
                    "fullk" => BufResidency::FullK,
                    _ => return Err(CliError::Validation(format!("interk_buf: `{v}` is not none|tilek|fullk"))),
                }
            }
            _ => return Err(CliError::Validation(format!("unknown option `{k}`"))),
        }
    }
    Ok(o)
}

/// `e_mem=10,e_vrf=3,...` on top of the defaults.
pub fn parse_energy(s: &str) -> Result<EnergyCoefficients, CliError> {
    let mut c = EnergyCoefficients::default();
    for pair in pairs(s) {
        let (k, v) = pair?;
        let x: f64 = v.parse().map_err(|_| CliError::Validation(format!("{k}: `{v}` is not a number")))?;
        match k {
            "e_mem" => c.e_mem = x,
            "e_vrf" => c.e_vrf = x,
            "e_buf" => c.e_buf = x,
            "e_fpu" => c.e_fpu = x,
            "e_srf" => c.e_srf = x,
            "e_insn" => c.e_insn = x,
            _ => return Err(CliError::Validation(format!("unknown energy coefficient `{k}`"))),
        }
    }
    Ok(c)
}
