//! Flat `key=value` run configurations.
//!
//! One pair per line, `#` comments, keys namespaced as `geometry.kind`,
//! `params.p`, `sweep.schedules`, … . Parsing collects every error with its
//! line number instead of stopping at the first.

use std::collections::BTreeMap;
use std::fmt;

use crate::geometry::DistanceField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Identities,
    Constants,
    CheckGeometry,
    Quotient,
    Sweep,
    Minimize,
    Report,
}

impl Command {
    pub fn parse(s: &str) -> Option<Command> {
        Some(match s {
            "identities" => Command::Identities,
            "constants" => Command::Constants,
            "check-geometry" => Command::CheckGeometry,
            "quotient" => Command::Quotient,
            "sweep" => Command::Sweep,
            "minimize" => Command::Minimize,
            "report" => Command::Report,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Constants => "constants",
            Command::CheckGeometry => "check-geometry",
            Command::Quotient => "quotient",
            Command::Sweep => "sweep",
            Command::Minimize => "minimize",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub enum GeometrySpec {
    Point { dim: usize, radius: f64 },
    Subspace { dim: usize, codim: usize, radius: f64 },
    Ball { dim: usize, radius: f64 },
    Slab { dim: usize, length: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl GeometrySpec {
    pub fn build(&self) -> crate::geometry::Result<DistanceField> {
        match self {
            GeometrySpec::Point { dim, radius } => DistanceField::point(*dim, *radius),
            GeometrySpec::Subspace { dim, codim, radius } => {
                DistanceField::subspace(*dim, *codim, *radius)
            }
            GeometrySpec::Ball { dim, radius } => DistanceField::ball(*dim, *radius),
            GeometrySpec::Slab { dim, length } => DistanceField::slab(*dim, *length),
            GeometrySpec::Polygon { vertices } => {
                DistanceField::convex_polygon(vertices.clone())
            }
        }
    }

    pub fn codim(&self) -> usize {
        match self {
            GeometrySpec::Point { dim, .. } => *dim,
            GeometrySpec::Subspace { codim, .. } => *codim,
            _ => 1,
        }
    }
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub geometry: GeometrySpec,
    pub p: f64,
    pub s: f64,
    pub k: f64,
    pub m: usize,
    /// `0.0` means "use sup d"
    pub d_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub check_samples: usize,
    pub profile_count: usize,
    pub sweep_mode: SweepModeSpec,
    pub sweep_schedules: Vec<Vec<f64>>,
    pub sweep_window: (f64, f64),
    pub sweep_r_in: Option<f64>,
    pub minimize_n: usize,
    pub minimize_r_in: f64,
    pub minimize_b: Option<f64>,
    pub minimize_levels: usize,
    pub dump_profile: bool,
    /// the raw pairs, echoed into reports
    pub raw: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepModeSpec {
    Plain,
    Improved,
    PowerProbe { eps: f64 },
    Hardy,
}

struct Parser<'a> {
    pairs: BTreeMap<&'a str, (usize, &'a str)>,
    used: Vec<&'a str>,
    errors: Vec<ConfigError>,
}

impl<'a> Parser<'a> {
    fn take_raw(&mut self, key: &'a str) -> Option<(usize, &'a str)> {
        self.used.push(key);
        self.pairs.get(key).copied()
    }

    fn take<T: std::str::FromStr>(&mut self, key: &'a str) -> Option<(usize, T)> {
        let (line, raw) = self.take_raw(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some((line, v)),
            Err(_) => {
                self.errors.push(ConfigError {
                    line,
                    message: format!(
                        "{key}: cannot parse {raw:?} as {}",
                        std::any::type_name::<T>()
                    ),
                });
                None
            }
        }
    }

    fn take_or<T: std::str::FromStr>(&mut self, key: &'a str, default: T) -> (usize, T) {
        match self.take::<T>(key) {
            Some((line, v)) => (line, v),
            None => (0, default),
        }
    }

    fn error(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            message: message.into(),
        });
    }
}

/// Parses and validates a configuration. On failure returns every error at
/// once, each with the offending line number.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let mut pairs: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut errors = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            errors.push(ConfigError {
                line: line_no,
                message: format!("expected key=value, got {line:?}"),
            });
            continue;
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() {
            errors.push(ConfigError {
                line: line_no,
                message: "empty key".into(),
            });
            continue;
        }
        if pairs.insert(key, (line_no, value)).is_some() {
            errors.push(ConfigError {
                line: line_no,
                message: format!("duplicate key {key}"),
            });
        }
    }

    let raw_echo: BTreeMap<String, String> = pairs
        .iter()
        .map(|(k, (_, v))| (k.to_string(), v.to_string()))
        .collect();
    let mut p = Parser {
        pairs,
        used: Vec::new(),
        errors,
    };

    let command = match p.take_raw("command") {
        Some((line, raw)) => match Command::parse(raw) {
            Some(c) => Some(c),
            None => {
                p.error(line, format!("unknown command {raw:?}"));
                None
            }
        },
        None => {
            p.error(0, "missing required key `command`");
            None
        }
    };

    let seed = p.take_or("seed", 0u64).1;

    // geometry block; defaults keep minimal configs small
    let geometry = {
        let kind = p.take_raw("geometry.kind");
        let (dim_line, dim) = p.take_or("geometry.dim", 5usize);
        let codim = p.take::<usize>("geometry.codim");
        let radius = p.take_or("geometry.radius", 1.0f64).1;
        let length = p.take_or("geometry.length", 1.0f64).1;
        let vertices_raw = p.take_raw("geometry.vertices");
        match kind.map(|(l, v)| (l, v)) {
            None | Some((_, "point")) => Some(GeometrySpec::Point { dim, radius }),
            Some((line, "subspace")) => {
                let codim = codim.map(|(_, c)| c).unwrap_or(dim.saturating_sub(2));
                if codim == 0 || codim > dim {
                    p.error(line, format!("subspace codim {codim} outside 1..={dim}"));
                    None
                } else {
                    Some(GeometrySpec::Subspace { dim, codim, radius })
                }
            }
            Some((_, "ball")) => Some(GeometrySpec::Ball { dim, radius }),
            Some((_, "slab")) => Some(GeometrySpec::Slab { dim, length }),
            Some((line, "polygon")) => match vertices_raw {
                Some((vline, raw)) => match parse_vertices(raw) {
                    Ok(vertices) => Some(GeometrySpec::Polygon { vertices }),
                    Err(msg) => {
                        p.error(vline, msg);
                        None
                    }
                },
                None => {
                    p.error(line, "polygon geometry needs geometry.vertices");
                    None
                }
            },
            Some((line, other)) => {
                p.error(line, format!("unknown geometry.kind {other:?}"));
                None
            }
        }
        .inspect(|g| {
            if matches!(g, GeometrySpec::Slab { .. } | GeometrySpec::Ball { .. }) && dim == 0 {
                p.error(dim_line, "geometry.dim must be positive");
            }
        })
    };

    let (p_line, p_val) = p.take_or("params.p", 2.0f64);
    if !(p_val > 1.0) {
        p.error(p_line, format!("p must exceed 1, got {p_val}"));
    }
    let s_val = p.take_or("params.s", 0.0f64).1;
    let default_k = geometry.as_ref().map(|g| g.codim() as f64).unwrap_or(1.0);
    let (k_line, k_val) = p.take_or("params.k", default_k);
    let m_val = p.take_or("params.m", 2usize).1;
    let d_val = p.take_or("params.d", 0.0f64).1;
    let alpha = p.take_or("params.alpha", 0.0f64).1;
    let beta = p.take_or("params.beta", 0.0f64).1;
    let gamma = p.take_or("params.gamma", 0.0f64).1;
    let check_samples = p.take_or("check.samples", 200usize).1;
    let profile_count = p.take_or("profile.count", 1usize).1;

    let sweep_mode = match p.take_raw("sweep.mode") {
        None | Some((_, "plain")) => SweepModeSpec::Plain,
        Some((_, "improved")) => SweepModeSpec::Improved,
        Some((_, "power-probe")) => {
            let eps = p.take_or("sweep.power_eps", 0.5f64).1;
            SweepModeSpec::PowerProbe { eps }
        }
        Some((_, "hardy")) => SweepModeSpec::Hardy,
        Some((line, other)) => {
            p.error(line, format!("unknown sweep.mode {other:?}"));
            SweepModeSpec::Plain
        }
    };
    let sweep_schedules = match p.take_raw("sweep.schedules") {
        Some((line, raw)) => match parse_schedules(raw) {
            Ok(s) => s,
            Err(msg) => {
                p.error(line, msg);
                Vec::new()
            }
        },
        None => Vec::new(),
    };
    let window_lo = p.take_or("sweep.window_lo", 1e-3f64).1;
    let window_hi = p.take_or("sweep.window_hi", 0.9f64).1;
    let sweep_r_in = p.take::<f64>("sweep.r_in").map(|(_, v)| v);

    let minimize_n = p.take_or("minimize.n", 4000usize).1;
    let minimize_r_in = p.take_or("minimize.r_in", 1e-5f64).1;
    let minimize_b = p.take::<f64>("minimize.b").map(|(_, v)| v);
    let minimize_levels = p.take_or("minimize.levels", 1usize).1;
    let dump_profile = p.take_or("minimize.dump_profile", false).1;

    // command-specific constraints, checked before any computation starts
    if let (Some(cmd), Some(geom)) = (command, geometry.as_ref()) {
        let hardy_sweep = cmd == Command::Sweep && sweep_mode == SweepModeSpec::Hardy;
        if (cmd == Command::Quotient || cmd == Command::Sweep || cmd == Command::Minimize)
            && !hardy_sweep
        {
            let k = geom.codim() as f64;
            let rellich_mode = !(k == 1.0 && p_val == 2.0);
            if rellich_mode && k <= 2.0 * p_val {
                p.error(
                    p_line.max(k_line),
                    format!(
                        "command {} in Rellich mode requires k > 2p (k = {k}, p = {p_val}); \
                         the boundary case needs k = 1 with p = 2",
                        cmd.name()
                    ),
                );
            }
        }
    }

    // reject unknown keys, naming each offending line
    let known: Vec<&str> = p.used.clone();
    for (key, (line, _)) in p.pairs.iter() {
        if !known.contains(key) {
            p.errors.push(ConfigError {
                line: *line,
                message: format!("unknown key {key}"),
            });
        }
    }

    if !p.errors.is_empty() {
        let mut errs = p.errors;
        errs.sort_by_key(|e| e.line);
        return Err(errs);
    }
    Ok(RunConfig {
        command: command.expect("validated"),
        seed,
        geometry: geometry.expect("validated"),
        p: p_val,
        s: s_val,
        k: k_val,
        m: m_val,
        d_scale: d_val,
        alpha,
        beta,
        gamma,
        check_samples,
        profile_count,
        sweep_mode,
        sweep_schedules,
        sweep_window: (window_lo, window_hi),
        sweep_r_in,
        minimize_n,
        minimize_r_in,
        minimize_b,
        minimize_levels,
        dump_profile,
        raw: raw_echo,
    })
}

fn parse_vertices(raw: &str) -> Result<Vec<[f64; 2]>, String> {
    let mut out = Vec::new();
    for part in raw.split(';') {
        let mut it = part.split(',');
        let (Some(x), Some(y), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("vertex {part:?} is not x,y"));
        };
        let x: f64 = x
            .trim()
            .parse()
            .map_err(|_| format!("bad vertex coordinate {x:?}"))?;
        let y: f64 = y
            .trim()
            .parse()
            .map_err(|_| format!("bad vertex coordinate {y:?}"))?;
        out.push([x, y]);
    }
    Ok(out)
}

fn parse_schedules(raw: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut out = Vec::new();
    for part in raw.split(';') {
        let mut schedule = Vec::new();
        for v in part.split(',') {
            schedule.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad epsilon {v:?}"))?,
            );
        }
        out.push(schedule);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config("command=constants\nparams.p=2\nparams.k=5\n").unwrap();
        assert_eq!(cfg.command, Command::Constants);
        assert_eq!(cfg.p, 2.0);
        assert_eq!(cfg.k, 5.0);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config("# run\ncommand=report\n\nseed=7 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn p_must_exceed_one() {
        let errs = parse_config("command=constants\nparams.p=1\n").unwrap_err();
        assert!(errs.iter().any(|e| e.line == 2 && e.message.contains("p must exceed 1")));
    }

    #[test]
    fn rellich_mode_needs_k_above_two_p() {
        let errs =
            parse_config("command=quotient\ngeometry.kind=point\ngeometry.dim=4\nparams.p=2\n")
                .unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("requires k > 2p")));
    }

    #[test]
    fn all_errors_reported_with_lines() {
        let errs = parse_config("command=nope\nparams.p=abc\nwhat=ever\n").unwrap_err();
        assert!(errs.len() >= 3);
        assert!(errs.iter().any(|e| e.line == 1));
        assert!(errs.iter().any(|e| e.line == 2));
        assert!(errs.iter().any(|e| e.line == 3 && e.message.contains("unknown key")));
    }

    #[test]
    fn polygon_vertices_parse() {
        let cfg = parse_config(
            "command=check-geometry\ngeometry.kind=polygon\ngeometry.vertices=0,0;1,0;1,1;0,1\n",
        )
        .unwrap();
        match cfg.geometry {
            GeometrySpec::Polygon { vertices } => assert_eq!(vertices.len(), 4),
            other => panic!("wrong geometry {other:?}"),
        }
    }

    #[test]
    fn schedules_parse() {
        let cfg = parse_config(
            "command=sweep\ngeometry.dim=5\nsweep.schedules=0.2,0.4;0.1,0.3\nsweep.mode=improved\n",
        )
        .unwrap();
        assert_eq!(cfg.sweep_schedules.len(), 2);
        assert_eq!(cfg.sweep_schedules[0], vec![0.2, 0.4]);
        assert_eq!(cfg.sweep_mode, SweepModeSpec::Improved);
    }
}
